#include "ucan/analysis.hpp"

#include <atomic>
#include <mutex>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "ucan/attention.hpp"
#include "ucan/ops.hpp"
#include "ucan/svd.hpp"

#include "json.hpp"

namespace ucan::analysis {

namespace {

FeatureMap feature_map_for(const std::string& kind, int d, std::uint64_t seed, int m) {
    if (kind == "identity") return FeatureMap::identity();
    if (kind == "relu") return FeatureMap::relu();
    if (kind == "elu1") return FeatureMap::elu_plus_one();
    if (kind == "symrelu") return FeatureMap::sym_relu();
    if (kind == "hedgehog")
        return FeatureMap::hedgehog_map(HedgehogParams::seeded(d, m, seed));
    throw ConfigError("unknown feature map kind '" + kind + "'");
}

} // namespace

Mat rank_attention_matrix(const std::string& kind, int n, int d, std::uint64_t seed,
                          int m) {
    if (n < 1 || d < 1) throw ConfigError("rank analysis: n and d must be >= 1");
    Rng rng(seed);
    Mat q(n, d), k(n, d);
    rng.fill_gaussian(q.data(), q.numel());
    rng.fill_gaussian(k.data(), k.numel());

    if (kind == "softmax") {
        Mat logits = matmul(q, transpose(k));
        const float scale = 1.0f / std::sqrt(float(d));
        for (auto& v : logits.vec()) v *= scale;
        return softmax_lastdim(logits);
    }

    FeatureMap fm = feature_map_for(kind, d, rng.next_u64(), m);
    Mat fq = apply_feature_map(fm, q);
    Mat fk = apply_feature_map(fm, k);
    Mat a = matmul(fq, transpose(fk));
    // row-normalise so every kind is compared on a stochastic matrix
    for (int i = 0; i < n; ++i) {
        float* row = a.row(i);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += row[j];
        if (std::abs(sum) < kDenomGuardEps) {
            instrument::hit_denom_guard();
            sum += kDenomGuardEps;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j) row[j] = static_cast<float>(row[j] * inv);
    }
    return a;
}

RankReport attention_rank(const std::string& kind, int n, int d, std::uint64_t seed,
                          double tol, int m) {
    RankReport report;
    report.kind = kind;
    report.n = n;
    report.d = d;
    report.m = m;
    report.seed = seed;
    report.tol = tol;
    Mat a = rank_attention_matrix(kind, n, d, seed, m);
    report.singular_values = jacobi_singular_values(a);
    report.numerical_rank = numerical_rank(report.singular_values, tol);
    return report;
}

int worker_count() {
    int hw = int(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("UCAN_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

std::vector<RankReport> rank_sweep(const std::string& kind, int n, int d,
                                   std::uint64_t base_seed, int count, double tol,
                                   int m) {
    std::vector<RankReport> reports(count);
    const int workers = std::min(worker_count(), std::max(count, 1));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto task = [&]() {
        try {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                reports[i] =
                    attention_rank(kind, n, d, base_seed + std::uint64_t(i), tol, m);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    if (workers <= 1) {
        task();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(task);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return reports; // indexed by seed offset, already ordered
}

MacReport count_macs(const std::function<void()>& fn) {
    const bool was_enabled = instrument::enabled();
    instrument::reset();
    instrument::set_enabled(true);
    fn();
    const instrument::Counters c = instrument::snapshot();
    instrument::reset();
    instrument::set_enabled(was_enabled);
    MacReport r;
    r.matmul_macs = c.matmul_macs;
    r.conv_macs = c.conv_macs;
    r.elementwise_ops = c.elementwise_ops;
    r.denom_guard_hits = c.denom_guard_hits;
    r.peak_alloc_elems = c.alloc_peak_elems;
    return r;
}

ErfReport measure_erf(const LkdConfig& cfg) {
    ErfReport report;
    report.config = cfg;
    report.predicted_erf = predict_erf(cfg);

    const int size = report.predicted_erf + 9; // margin to expose over-reach
    Tensor delta({1, 1, size, size});
    delta.at(0, 0, size / 2, size / 2) = 1.0f;

    HlkWeights ones = HlkWeights::ones(cfg, 1);
    Tensor response = hlk_branch(delta, cfg, ones);

    std::vector<bool> row_hit(size, false), col_hit(size, false);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (std::abs(response.at(0, 0, y, x)) > 0.0f) {
                row_hit[y] = true;
                col_hit[x] = true;
            }
    report.measured_erf_h = int(std::count(row_hit.begin(), row_hit.end(), true));
    report.measured_erf_w = int(std::count(col_hit.begin(), col_hit.end(), true));
    return report;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

namespace {

double max_rel_err(const Mat& got, const Mat& want) {
    double max_abs = 0.0, ref = 0.0;
    for (std::int64_t i = 0; i < want.numel(); ++i) {
        max_abs = std::max(max_abs, std::abs(double(got.vec()[i]) - want.vec()[i]));
        ref = std::max(ref, std::abs(double(want.vec()[i])));
    }
    return ref > 0.0 ? max_abs / ref : max_abs;
}

} // namespace

std::vector<BenchRow> bench_attention(const std::vector<int>& n_list, int d,
                                      const std::vector<std::string>& engines,
                                      int warmup, int runs) {
    warmup = std::max(warmup, 3);
    runs = std::max(runs, 10);
    std::vector<BenchRow> rows;
    for (int n : n_list) {
        Rng rng(std::uint64_t(n) * 7919 + 17);
        Mat q(n, d), k(n, d), v(n, d);
        rng.fill_gaussian(q.data(), q.numel());
        rng.fill_gaussian(k.data(), k.numel());
        rng.fill_gaussian(v.data(), v.numel());
        const float scale = 1.0f / std::sqrt(float(d));
        FeatureMap hedgehog =
            FeatureMap::hedgehog_map(HedgehogParams::seeded(d, 1, rng.next_u64()));

        Mat naive_out = softmax_attention(q, k, v, scale);

        for (const std::string& engine : engines) {
            std::function<Mat()> run;
            if (engine == "naive") {
                run = [&]() { return softmax_attention(q, k, v, scale); };
            } else if (engine == "tiled") {
                run = [&]() {
                    return tiled_exact_attention(q, k, v, scale, TileConfig{64, 64});
                };
            } else if (engine == "linear") {
                run = [&]() { return linear_attention_linear(q, k, v, hedgehog); };
            } else {
                throw ConfigError("bench: unknown engine '" + engine + "'");
            }

            for (int i = 0; i < warmup; ++i) run();

            std::vector<double> times;
            times.reserve(runs);
            Mat out;
            for (int i = 0; i < runs; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                out = run();
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            const double median = times[times.size() / 2];

            const MacReport macs = count_macs([&]() { (void)run(); });

            BenchRow row;
            row.n = n;
            row.engine = engine;
            row.wall_ms = median;
            row.peak_alloc_elems = macs.peak_alloc_elems;
            if (engine == "tiled") {
                row.max_rel_err = max_rel_err(out, naive_out);
            } else if (engine == "linear") {
                Mat oracle = linear_attention_quadratic(q, k, v, hedgehog);
                row.max_rel_err = max_rel_err(out, oracle);
            } else {
                row.max_rel_err = 0.0;
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

namespace {

std::string join_spectrum(const std::vector<double>& sv) {
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < sv.size(); ++i) {
        if (i) os << ';';
        os << sv[i];
    }
    return os.str();
}

} // namespace

std::string rank_csv(const std::vector<RankReport>& reports) {
    std::ostringstream os;
    os << "kind,n,d,m,seed,tol,numerical_rank,singular_values\n";
    os.precision(9);
    for (const auto& r : reports)
        os << r.kind << ',' << r.n << ',' << r.d << ',' << r.m << ',' << r.seed << ','
           << r.tol << ',' << r.numerical_rank << ',' << join_spectrum(r.singular_values)
           << '\n';
    return os.str();
}

std::string rank_json(const std::vector<RankReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports)
        arr.push_back({{"kind", r.kind},
                       {"n", r.n},
                       {"d", r.d},
                       {"m", r.m},
                       {"seed", r.seed},
                       {"tol", r.tol},
                       {"numerical_rank", r.numerical_rank},
                       {"singular_values", r.singular_values}});
    return arr.dump(2) + "\n";
}

std::string erf_csv(const std::vector<ErfReport>& reports) {
    std::ostringstream os;
    os << "k_core,dilation,k_extra,predicted_erf,measured_erf_h,measured_erf_w\n";
    for (const auto& r : reports)
        os << r.config.k_core << ',' << r.config.dilation << ','
           << r.config.k_extra.value_or(0) << ',' << r.predicted_erf << ','
           << r.measured_erf_h << ',' << r.measured_erf_w << '\n';
    return os.str();
}

std::string erf_json(const std::vector<ErfReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports)
        arr.push_back({{"k_core", r.config.k_core},
                       {"dilation", r.config.dilation},
                       {"k_extra", r.config.k_extra.value_or(0)},
                       {"predicted_erf", r.predicted_erf},
                       {"measured_erf_h", r.measured_erf_h},
                       {"measured_erf_w", r.measured_erf_w}});
    return arr.dump(2) + "\n";
}

std::string mac_csv(const MacReport& r) {
    std::ostringstream os;
    os << "matmul_macs,conv_macs,mac_total,elementwise_ops,denom_guard_hits,peak_alloc_"
          "elems\n";
    os << r.matmul_macs << ',' << r.conv_macs << ',' << r.mac_total() << ','
       << r.elementwise_ops << ',' << r.denom_guard_hits << ',' << r.peak_alloc_elems
       << '\n';
    return os.str();
}

std::string mac_json(const MacReport& r) {
    nlohmann::json j = {{"matmul_macs", r.matmul_macs},
                        {"conv_macs", r.conv_macs},
                        {"mac_total", r.mac_total()},
                        {"elementwise_ops", r.elementwise_ops},
                        {"denom_guard_hits", r.denom_guard_hits},
                        {"peak_alloc_elems", r.peak_alloc_elems}};
    return j.dump(2) + "\n";
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "n,engine,wall_ms,peak_alloc_elems,max_rel_err\n";
    os.precision(6);
    for (const auto& r : rows)
        os << r.n << ',' << r.engine << ',' << r.wall_ms << ',' << r.peak_alloc_elems
           << ',' << r.max_rel_err << '\n';
    return os.str();
}

std::string bench_json(const std::vector<BenchRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"n", r.n},
                       {"engine", r.engine},
                       {"wall_ms", r.wall_ms},
                       {"peak_alloc_elems", r.peak_alloc_elems},
                       {"max_rel_err", r.max_rel_err}});
    return arr.dump(2) + "\n";
}

} // namespace ucan::analysis
