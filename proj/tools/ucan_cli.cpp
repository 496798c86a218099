// ucan — command-line front end: forward inference plus the rank / ERF /
// MAC / latency analyses, each emitting machine-readable reports and a run
// manifest for reproducibility.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ucan/analysis.hpp"
#include "ucan/errors.hpp"
#include "ucan/network.hpp"
#include "ucan/serialization.hpp"

#include "run_manifest.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace ucan;
using tools::RunManifest;
using tools::write_text_file;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::string out_path(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        values.push_back(std::stoi(item));
    }
    if (values.empty()) throw ConfigError("empty list: '" + text + "'");
    return values;
}

std::vector<std::string> parse_str_list(const std::string& text) {
    std::vector<std::string> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) values.push_back(item);
    }
    if (values.empty()) throw ConfigError("empty list: '" + text + "'");
    return values;
}

std::string read_text_file(const std::string& path) {
    return tools::read_file_bytes(path);
}

// ---------------------------------------------------------------------------

struct RankArgs {
    int n = 256, d = 48, m = 1, seeds = 100;
    std::uint64_t base_seed = 0;
    double tol = 1e-6;
    std::string map = "hedgehog";
    std::string out = ".";
    bool svg = false;
};

int run_rank(const RankArgs& a) {
    if (a.n < 1 || a.d < 1) throw ConfigError("rank: --n and --d must be >= 1");
    if (a.seeds < 1) throw ConfigError("rank: --seeds must be >= 1");
    if (a.m < 1 || a.m > 4) throw ConfigError("rank: --m must be in 1..4");

    auto reports = analysis::rank_sweep(a.map, a.n, a.d, a.base_seed, a.seeds, a.tol, a.m);

    const std::string csv_path = out_path(a.out, "rank_report.csv");
    const std::string json_path = out_path(a.out, "rank_report.json");
    write_text_file(csv_path, analysis::rank_csv(reports));
    write_text_file(json_path, analysis::rank_json(reports));

    RunManifest manifest("rank", a.base_seed);
    manifest.add_kv("n", std::to_string(a.n));
    manifest.add_kv("d", std::to_string(a.d));
    manifest.add_kv("map", a.map);
    manifest.add_kv("m", std::to_string(a.m));
    manifest.add_kv("seeds", std::to_string(a.seeds));
    manifest.add_kv("tol", std::to_string(a.tol));
    manifest.add_output(csv_path);
    manifest.add_output(json_path);

    if (a.svg) {
        std::map<std::string, std::vector<std::pair<double, double>>> series;
        for (const auto& r : reports)
            series[a.map].push_back({double(r.seed), double(r.numerical_rank)});
        const std::string svg_path = out_path(a.out, "rank_report.svg");
        write_text_file(svg_path,
                        tools::svg_plot("numerical rank by seed (" + a.map + ")", "seed",
                                        "rank", series));
        manifest.add_output(svg_path);
    }
    manifest.write(out_path(a.out, "rank_manifest.json"));

    double mean = 0.0;
    for (const auto& r : reports) mean += r.numerical_rank;
    mean /= double(reports.size());
    std::cout << "rank: " << a.map << " n=" << a.n << " d=" << a.d << " seeds=" << a.seeds
              << " mean_rank=" << mean << "\n";
    return 0;
}

struct ErfArgs {
    int k_core = 5, dilation = 1, k_extra = 0;
    std::string out = ".";
};

int run_erf(const ErfArgs& a) {
    LkdConfig cfg;
    cfg.k_core = a.k_core;
    cfg.dilation = a.dilation;
    cfg.k_extra = a.k_extra > 0 ? std::optional<int>(a.k_extra) : std::nullopt;

    const ErfReport report = analysis::measure_erf(cfg);
    std::vector<ErfReport> reports{report};

    const std::string csv_path = out_path(a.out, "erf_report.csv");
    const std::string json_path = out_path(a.out, "erf_report.json");
    write_text_file(csv_path, analysis::erf_csv(reports));
    write_text_file(json_path, analysis::erf_json(reports));

    RunManifest manifest("erf", 0);
    manifest.add_kv("k_core", std::to_string(a.k_core));
    manifest.add_kv("dilation", std::to_string(a.dilation));
    manifest.add_kv("k_extra", std::to_string(a.k_extra));
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.write(out_path(a.out, "erf_manifest.json"));

    std::cout << "erf: predicted=" << report.predicted_erf
              << " measured_h=" << report.measured_erf_h
              << " measured_w=" << report.measured_erf_w << "\n";
    return 0;
}

struct MacsArgs {
    std::string config;
    int height = 16, width = 16;
    std::string out = ".";
};

int run_macs(const MacsArgs& a) {
    const std::string config_text = read_text_file(a.config);
    const ModelConfig cfg = ModelConfig::from_text(config_text);
    UcanWeights weights = ucan_weights_seeded(cfg);

    Tensor input({1, 3, a.height, a.width});
    Rng rng(cfg.seed ^ 0x5eedf00dULL);
    for (auto& v : input.vec()) v = float(rng.next_uniform());

    const analysis::MacReport report =
        analysis::count_macs([&]() { (void)ucan_forward(input, weights, cfg); });

    const std::string csv_path = out_path(a.out, "mac_report.csv");
    const std::string json_path = out_path(a.out, "mac_report.json");
    write_text_file(csv_path, analysis::mac_csv(report));
    write_text_file(json_path, analysis::mac_json(report));

    RunManifest manifest("macs", cfg.seed);
    manifest.set_config_text(config_text);
    manifest.add_kv("height", std::to_string(a.height));
    manifest.add_kv("width", std::to_string(a.width));
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.write(out_path(a.out, "macs_manifest.json"));

    std::cout << "macs: total=" << report.mac_total() << " matmul=" << report.matmul_macs
              << " conv=" << report.conv_macs << "\n";
    return 0;
}

struct BenchArgs {
    std::string n_list = "256,1024";
    int d = 48;
    std::string engines = "naive,tiled,linear";
    int warmup = 3, runs = 10;
    std::string out = ".";
    bool svg = false;
};

int run_bench(const BenchArgs& a) {
    const auto rows = analysis::bench_attention(parse_int_list(a.n_list), a.d,
                                                parse_str_list(a.engines), a.warmup,
                                                a.runs);

    const std::string csv_path = out_path(a.out, "bench_report.csv");
    const std::string json_path = out_path(a.out, "bench_report.json");
    write_text_file(csv_path, analysis::bench_csv(rows));
    write_text_file(json_path, analysis::bench_json(rows));

    RunManifest manifest("bench", 0);
    manifest.add_kv("n_list", a.n_list);
    manifest.add_kv("d", std::to_string(a.d));
    manifest.add_kv("engines", a.engines);
    // wall times vary run to run; the hash covers everything else
    manifest.add_output(csv_path, {"wall_ms"});
    manifest.write(out_path(a.out, "bench_manifest.json"));

    for (const auto& r : rows)
        std::cout << "bench: n=" << r.n << " engine=" << r.engine << " wall_ms=" << r.wall_ms
                  << " peak_alloc=" << r.peak_alloc_elems << "\n";

    if (a.svg) {
        std::map<std::string, std::vector<std::pair<double, double>>> series;
        for (const auto& r : rows)
            series[r.engine].push_back({double(r.n), r.wall_ms});
        const std::string svg_path = out_path(a.out, "bench_report.svg");
        write_text_file(svg_path,
                        tools::svg_plot("attention latency", "N", "wall ms", series));
    }
    return 0;
}

struct ForwardArgs {
    std::string weights, input, output;
    int scale = 0; // 0: take from the weight file
    std::string out;
};

int run_forward(const ForwardArgs& a) {
    auto [weights, cfg] = load_weights(a.weights);
    if (a.scale != 0 && a.scale != cfg.scale)
        throw ConfigError("forward: --scale " + std::to_string(a.scale) +
                          " does not match the weight file (scale " +
                          std::to_string(cfg.scale) + ")");
    Tensor img = read_ppm(a.input);
    Tensor up = ucan_forward(img, weights, cfg);
    write_ppm(a.output, up);

    const std::string manifest_dir =
        a.out.empty() ? fs::path(a.output).parent_path().string() : a.out;
    RunManifest manifest("forward", cfg.seed);
    manifest.set_config_text(cfg.to_text());
    manifest.add_kv("weights", a.weights);
    manifest.add_kv("input", a.input);
    manifest.add_output(a.output);
    manifest.write(out_path(manifest_dir.empty() ? "." : manifest_dir,
                            "forward_manifest.json"));

    std::cout << "forward: " << a.input << " (" << img.shape().h << "x" << img.shape().w
              << ") -> " << a.output << " (" << up.shape().h << "x" << up.shape().w
              << ")\n";
    return 0;
}

struct InitArgs {
    std::string config;
    std::int64_t seed = -1; // -1: take from the config file
    std::string weights_out;
    std::string out;
};

int run_init(const InitArgs& a) {
    const std::string config_text = read_text_file(a.config);
    ModelConfig cfg = ModelConfig::from_text(config_text);
    if (a.seed >= 0) cfg.seed = std::uint64_t(a.seed);
    UcanWeights weights = ucan_weights_seeded(cfg);
    save_weights(a.weights_out, weights, cfg);

    const std::string manifest_dir =
        a.out.empty() ? fs::path(a.weights_out).parent_path().string() : a.out;
    RunManifest manifest("init", cfg.seed);
    manifest.set_config_text(cfg.to_text());
    manifest.add_output(a.weights_out);
    manifest.write(out_path(manifest_dir.empty() ? "." : manifest_dir,
                            "init_manifest.json"));

    std::cout << "init: wrote " << a.weights_out << " (seed " << cfg.seed << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UCAN forward-pass kernels and analysis"};
    app.require_subcommand(1);

    RankArgs rank_args;
    CLI::App* rank = app.add_subcommand("rank", "numerical rank of attention matrices");
    rank->add_option("--n", rank_args.n, "token count");
    rank->add_option("--d", rank_args.d, "feature dimension");
    rank->add_option("--map", rank_args.map,
                     "feature map: relu|elu1|symrelu|hedgehog|identity|softmax");
    rank->add_option("--m", rank_args.m, "Hedgehog pair count (1..4)");
    rank->add_option("--seeds", rank_args.seeds, "number of seeds");
    rank->add_option("--base-seed", rank_args.base_seed, "first seed");
    rank->add_option("--tol", rank_args.tol, "relative rank threshold");
    rank->add_option("--out", rank_args.out, "output directory");
    rank->add_flag("--svg", rank_args.svg, "emit an SVG scatter of the ranks");

    ErfArgs erf_args;
    CLI::App* erf = app.add_subcommand("erf", "effective receptive field measurement");
    erf->add_option("--k-core", erf_args.k_core, "core kernel size (odd)");
    erf->add_option("--dilation", erf_args.dilation, "dilation rate");
    erf->add_option("--k-extra", erf_args.k_extra, "extra kernel size (0 = none)");
    erf->add_option("--out", erf_args.out, "output directory");

    MacsArgs macs_args;
    CLI::App* macs = app.add_subcommand("macs", "instrumented MAC counts of a forward pass");
    macs->add_option("--config", macs_args.config, "model config file")->required();
    macs->add_option("--height", macs_args.height, "input height");
    macs->add_option("--width", macs_args.width, "input width");
    macs->add_option("--out", macs_args.out, "output directory");

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "attention engine latency/allocation");
    bench->add_option("--n-list", bench_args.n_list, "comma-separated token counts");
    bench->add_option("--d", bench_args.d, "feature dimension");
    bench->add_option("--engines", bench_args.engines, "subset of naive,tiled,linear");
    bench->add_option("--warmup", bench_args.warmup, "warmup iterations (>= 3)");
    bench->add_option("--runs", bench_args.runs, "timed runs (>= 10)");
    bench->add_option("--out", bench_args.out, "output directory");
    bench->add_flag("--svg", bench_args.svg, "emit an SVG latency plot");

    ForwardArgs fwd_args;
    CLI::App* fwd = app.add_subcommand("forward", "upscale a PPM image");
    fwd->add_option("--weights", fwd_args.weights, "weight file")->required();
    fwd->add_option("--input", fwd_args.input, "input PPM (P6)")->required();
    fwd->add_option("--scale", fwd_args.scale, "expected scale (checked against weights)");
    fwd->add_option("--output", fwd_args.output, "output PPM")->required();
    fwd->add_option("--out", fwd_args.out, "manifest directory (default: output's)");

    InitArgs init_args;
    CLI::App* init = app.add_subcommand("init", "write seeded random weights");
    init->add_option("--config", init_args.config, "model config file")->required();
    init->add_option("--seed", init_args.seed, "seed override");
    init->add_option("--weights-out", init_args.weights_out, "weight file to write")
        ->required();
    init->add_option("--out", init_args.out, "manifest directory (default: weights')");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (rank->parsed()) return run_rank(rank_args);
        if (erf->parsed()) return run_erf(erf_args);
        if (macs->parsed()) return run_macs(macs_args);
        if (bench->parsed()) return run_bench(bench_args);
        if (fwd->parsed()) return run_forward(fwd_args);
        if (init->parsed()) return run_init(init_args);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ContractError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
