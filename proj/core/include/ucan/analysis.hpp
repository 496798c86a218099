#ifndef UCAN_ANALYSIS_HPP
#define UCAN_ANALYSIS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ucan/feature_maps.hpp"
#include "ucan/instrument.hpp"
#include "ucan/large_kernel.hpp"
#include "ucan/tensor.hpp"

namespace ucan::analysis {

// ---------------------------------------------------------------------------
// Numerical rank of kernelised attention matrices
// ---------------------------------------------------------------------------

struct RankReport {
    std::string kind; // feature map name, or "softmax" for the baseline
    int n = 0;
    int d = 0;
    int m = 1; // Hedgehog pair count
    std::uint64_t seed = 0;
    double tol = 1e-6;
    std::vector<double> singular_values; // descending
    int numerical_rank = 0;
};

// Draws Q, K ~ N(0, 1) from the seed, forms the row-stochastic attention
// matrix for the requested kind (row-normalised phi(Q) phi(K)^T, or softmax
// rows for the baseline), and takes its singular values by Jacobi iteration.
RankReport attention_rank(const std::string& kind, int n, int d, std::uint64_t seed,
                          double tol = 1e-6, int m = 1);

// attention_rank over seeds base_seed .. base_seed + count - 1, run in a
// parallel map (worker count capped by UCAN_THREADS), output ordered by seed.
std::vector<RankReport> rank_sweep(const std::string& kind, int n, int d,
                                   std::uint64_t base_seed, int count,
                                   double tol = 1e-6, int m = 1);

// the explicit attention matrix used by attention_rank (exposed for oracles)
Mat rank_attention_matrix(const std::string& kind, int n, int d, std::uint64_t seed,
                          int m = 1);

// ---------------------------------------------------------------------------
// Operation counting
// ---------------------------------------------------------------------------

struct MacReport {
    std::int64_t matmul_macs = 0;
    std::int64_t conv_macs = 0;
    std::int64_t elementwise_ops = 0;
    std::int64_t denom_guard_hits = 0;
    std::int64_t peak_alloc_elems = 0;

    std::int64_t mac_total() const { return matmul_macs + conv_macs; }
};

// Runs the closure with instrumentation enabled and returns exact counts.
// Counters are reset for the measurement; sequential composition is
// additive: count(f; g) = count(f) + count(g).
MacReport count_macs(const std::function<void()>& fn);

// ---------------------------------------------------------------------------
// Effective receptive field measurement
// ---------------------------------------------------------------------------

// Impulse response of the linearised large-kernel branch: all-ones weights,
// single-channel delta input; support counted per axis.
ErfReport measure_erf(const LkdConfig& cfg);

// ---------------------------------------------------------------------------
// Attention engine benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
    int n = 0;
    std::string engine; // naive | tiled | linear
    double wall_ms = 0.0;
    std::int64_t peak_alloc_elems = 0;
    // tiled is checked against naive; linear against its quadratic oracle
    double max_rel_err = 0.0;
};

std::vector<BenchRow> bench_attention(const std::vector<int>& n_list, int d,
                                      const std::vector<std::string>& engines,
                                      int warmup = 3, int runs = 10);

// ---------------------------------------------------------------------------
// Report writers (CSV plus a JSON mirror with the same field names)
// ---------------------------------------------------------------------------

std::string rank_csv(const std::vector<RankReport>& reports);
std::string rank_json(const std::vector<RankReport>& reports);
std::string erf_csv(const std::vector<ErfReport>& reports);
std::string erf_json(const std::vector<ErfReport>& reports);
std::string mac_csv(const MacReport& report);
std::string mac_json(const MacReport& report);
std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_json(const std::vector<BenchRow>& rows);

// worker count for parallel maps: min(UCAN_THREADS, hardware), at least 1
int worker_count();

} // namespace ucan::analysis

#endif
