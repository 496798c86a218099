#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>

#include "ucan/analysis.hpp"
#include "ucan/attention.hpp"
#include "ucan/ops.hpp"
#include "ucan/svd.hpp"

#include "test_support.hpp"

using namespace ucan;
using test::random_mat;

namespace {

// power iteration on A^T A with deflation: the top eigenvalues are the
// squared singular values; an oracle independent of the Jacobi path
std::vector<double> top_singular_values_power(const Mat& a, int count,
                                              int iters = 20000) {
    const int n = a.cols();
    // gram = A^T A in double
    std::vector<double> gram(std::size_t(n) * n, 0.0);
    for (int i = 0; i < a.rows(); ++i)
        for (int p = 0; p < n; ++p) {
            const double v = a.at(i, p);
            for (int q = 0; q < n; ++q) gram[std::size_t(p) * n + q] += v * a.at(i, q);
        }
    std::vector<double> result;
    Rng rng(12345);
    for (int k = 0; k < count; ++k) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.next_gaussian();
        double lambda = 0.0;
        for (int it = 0; it < iters; ++it) {
            std::vector<double> w(n, 0.0);
            for (int p = 0; p < n; ++p) {
                const double vp = v[p];
                if (vp == 0.0) continue;
                const double* row = gram.data() + std::size_t(p) * n;
                for (int q = 0; q < n; ++q) w[q] += vp * row[q];
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            const double new_lambda = norm; // |G v| with |v| = 1
            for (int q = 0; q < n; ++q) v[q] = w[q] / norm;
            if (it > 50 && std::abs(new_lambda - lambda) < 1e-14 * new_lambda) {
                lambda = new_lambda;
                break;
            }
            lambda = new_lambda;
        }
        result.push_back(std::sqrt(lambda));
        // deflate
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                gram[std::size_t(p) * n + q] -= lambda * v[p] * v[q];
    }
    return result;
}

} // namespace

TEST_CASE("jacobi singular values match the power-iteration oracle") {
    Mat a = random_mat(80, 60, 1);
    auto jacobi = jacobi_singular_values(a);
    auto power = top_singular_values_power(a, 3);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(jacobi[i] - power[i]) < 1e-6 * power[i]);

    // and on an attention matrix from the rank analyzer
    Mat attn = analysis::rank_attention_matrix("hedgehog", 96, 16, 7);
    auto j2 = jacobi_singular_values(attn);
    auto p2 = top_singular_values_power(attn, 3);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(j2[i] - p2[i]) < 1e-6 * p2[i]);
}

TEST_CASE("jacobi handles known spectra") {
    // diag(5, 3, 1) embedded in a rectangle
    Mat a(5, 3);
    a.at(0, 0) = 5.0f;
    a.at(1, 1) = 3.0f;
    a.at(2, 2) = 1.0f;
    auto sv = jacobi_singular_values(a);
    CHECK(sv[0] == doctest::Approx(5.0));
    CHECK(sv[1] == doctest::Approx(3.0));
    CHECK(sv[2] == doctest::Approx(1.0));

    // transposition invariance
    auto svt = jacobi_singular_values(transpose(a));
    for (int i = 0; i < 3; ++i) CHECK(sv[i] == doctest::Approx(svt[i]));

    CHECK(numerical_rank(sv, 1e-6) == 3);
    CHECK(numerical_rank({2.0, 1e-3, 1e-9}, 1e-6) == 2);
    CHECK(numerical_rank({}, 1e-6) == 0);
    CHECK(numerical_rank({0.0, 0.0}, 1e-6) == 0);
}

TEST_CASE("identity map on gaussian draws has full column rank") {
    auto report = analysis::attention_rank("identity", 256, 48, 3);
    CHECK(report.numerical_rank == 48);
    CHECK(int(report.singular_values.size()) == 256);
    for (std::size_t i = 1; i < report.singular_values.size(); ++i)
        CHECK(report.singular_values[i - 1] >= report.singular_values[i]);
}

TEST_CASE("rank-1 construction collapses every kind") {
    for (const char* kind : {"relu", "elu1", "symrelu", "hedgehog", "softmax"}) {
        // repeated-row Q and K: every attention row is identical
        const int n = 32, d = 8;
        Mat a = analysis::rank_attention_matrix(kind, n, d, 11);
        Mat collapsed(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) collapsed.at(i, j) = a.at(0, j);
        auto sv = jacobi_singular_values(collapsed);
        CHECK(numerical_rank(sv, 1e-6) == 1);
    }
}

TEST_CASE("rank ordering across maps at the dimension-bound regime") {
    // gaussian draws saturate each map's kernel-space dimension: relu d,
    // symrelu 2d, hedgehog 2d for every pair count (the shared projection
    // makes extra pairs per-column scalings of the first)
    const int n = 128, d = 16;
    for (std::uint64_t seed : {0, 1, 2}) {
        auto relu = analysis::attention_rank("relu", n, d, seed);
        auto sym = analysis::attention_rank("symrelu", n, d, seed);
        auto hh1 = analysis::attention_rank("hedgehog", n, d, seed, 1e-6, 1);
        auto hh2 = analysis::attention_rank("hedgehog", n, d, seed, 1e-6, 2);
        CHECK(relu.numerical_rank == d);
        CHECK(sym.numerical_rank == 2 * d);
        CHECK(hh1.numerical_rank >= sym.numerical_rank);
        CHECK(hh2.numerical_rank == hh1.numerical_rank);
        CHECK(sym.numerical_rank > relu.numerical_rank);
    }
}

TEST_CASE("rank sweep is deterministic and ordered by seed") {
    setenv("UCAN_THREADS", "2", 1);
    auto parallel = analysis::rank_sweep("relu", 48, 8, 100, 6);
    setenv("UCAN_THREADS", "1", 1);
    auto serial = analysis::rank_sweep("relu", 48, 8, 100, 6);
    unsetenv("UCAN_THREADS");
    REQUIRE(parallel.size() == 6);
    for (int i = 0; i < 6; ++i) {
        CHECK(parallel[i].seed == 100 + std::uint64_t(i));
        CHECK(parallel[i].numerical_rank == serial[i].numerical_rank);
        CHECK(parallel[i].singular_values == serial[i].singular_values);
    }
}

TEST_CASE("count_macs") {
    SUBCASE("single matmul") {
        Mat a = random_mat(2, 3, 21), b = random_mat(3, 4, 22);
        auto r = analysis::count_macs([&]() { matmul(a, b); });
        CHECK(r.matmul_macs == 24);
        CHECK(r.conv_macs == 0);
    }
    SUBCASE("sequential composition is additive") {
        Mat a = random_mat(6, 6, 23), b = random_mat(6, 6, 24);
        Tensor x = test::random_tensor({1, 4, 8, 8}, 25);
        Tensor k = test::random_tensor({4, 4, 3, 3}, 26);
        auto f = [&]() { matmul(a, b); };
        auto g = [&]() { conv2d(x, k); };
        auto fg = analysis::count_macs([&]() {
            f();
            g();
        });
        auto only_f = analysis::count_macs(f);
        auto only_g = analysis::count_macs(g);
        CHECK(fg.matmul_macs == only_f.matmul_macs + only_g.matmul_macs);
        CHECK(fg.conv_macs == only_f.conv_macs + only_g.conv_macs);
        CHECK(fg.elementwise_ops == only_f.elementwise_ops + only_g.elementwise_ops);
    }
    SUBCASE("conv accounting rule") {
        Tensor x = test::random_tensor({2, 6, 10, 10}, 27);
        Tensor k = test::random_tensor({8, 3, 3, 3}, 28);
        auto r = analysis::count_macs([&]() { conv2d(x, k, std::nullopt, {1, {1, 1}, 2}); });
        CHECK(r.conv_macs == 2LL * 8 * 3 * 3 * 3 * 10 * 10);
    }
}

TEST_CASE("erf reports for the full published table") {
    struct Row {
        int k, d, extra, want;
    };
    const Row rows[] = {{3, 1, 0, 5},   {5, 1, 0, 9},   {5, 2, 0, 13},
                        {5, 3, 11, 47}, {5, 3, 13, 53}, {5, 3, 17, 65}};
    for (const Row& row : rows) {
        LkdConfig cfg{row.k, row.d,
                      row.extra > 0 ? std::optional<int>(row.extra) : std::nullopt, 4};
        ErfReport r = analysis::measure_erf(cfg);
        CHECK(r.predicted_erf == row.want);
        CHECK(r.measured_erf_h == row.want);
        CHECK(r.measured_erf_w == row.want);
    }
}

TEST_CASE("bench rows carry allocations and correctness piggybacks") {
    auto rows = analysis::bench_attention({64, 128}, 32, {"naive", "tiled", "linear"}, 3, 10);
    REQUIRE(rows.size() == 6);
    std::int64_t naive_64 = 0, naive_128 = 0, tiled_64 = 0, tiled_128 = 0;
    for (const auto& r : rows) {
        if (r.engine == "naive" && r.n == 64) naive_64 = r.peak_alloc_elems;
        if (r.engine == "naive" && r.n == 128) naive_128 = r.peak_alloc_elems;
        if (r.engine == "tiled" && r.n == 64) tiled_64 = r.peak_alloc_elems;
        if (r.engine == "tiled" && r.n == 128) tiled_128 = r.peak_alloc_elems;
        if (r.engine != "naive") CHECK(r.max_rel_err < 1e-5);
        CHECK(r.wall_ms >= 0.0);
    }
    CHECK(naive_128 == 4 * naive_64); // Theta(N^2) score matrix
    CHECK(tiled_128 == tiled_64);     // constant at fixed tiles
    CHECK(tiled_128 < naive_128);

    const std::string csv = analysis::bench_csv(rows);
    CHECK(csv.find("n,engine,wall_ms,peak_alloc_elems,max_rel_err") == 0);
}

TEST_CASE("csv and json writers") {
    auto reports = analysis::rank_sweep("relu", 16, 4, 0, 2);
    const std::string csv = analysis::rank_csv(reports);
    CHECK(csv.find("kind,n,d,m,seed,tol,numerical_rank,singular_values") == 0);
    // one row per seed plus header
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const std::string json = analysis::rank_json(reports);
    CHECK(json.find("\"numerical_rank\"") != std::string::npos);

    analysis::MacReport mac;
    mac.matmul_macs = 10;
    mac.conv_macs = 7;
    CHECK(analysis::mac_csv(mac).find("10,7,17") != std::string::npos);
}
