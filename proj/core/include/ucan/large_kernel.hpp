#ifndef UCAN_LARGE_KERNEL_HPP
#define UCAN_LARGE_KERNEL_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "ucan/tensor.hpp"

namespace ucan {

// Configuration of the hierarchical large-kernel branch. The presence of
// k_extra selects the Large (three-stage) configuration.
struct LkdConfig {
    int k_core = 5;
    int dilation = 2;
    std::optional<int> k_extra;
    int reduction = 4; // local-branch bottleneck factor

    bool operator==(const LkdConfig&) const = default;
};

// fine-grained channel count: max(C/4, 16), clamped to C; C must be >= 16
int fine_channels(int c);

// Closed-form 1-D effective receptive field of the branch:
//   standard: k_core + (k_core - 1) * d
//   large:    k_core + (k_core - 1) * d + (k_extra - 1) * d
int predict_erf(const LkdConfig& cfg);

struct ErfReport {
    LkdConfig config;
    int predicted_erf = 0;
    int measured_erf_h = 0;
    int measured_erf_w = 0;
};

// Depthwise separable stack weights. Each stage is a 1 x k row pass followed
// by a k x 1 column pass over the same channels.
struct HlkWeights {
    Tensor s1_row, s1_col; // k_core, dilation 1
    Tensor s2_row, s2_col; // k_core, dilated
    std::optional<Tensor> s3_row, s3_col; // k_extra, dilated (Large only)

    static HlkWeights ones(const LkdConfig& cfg, int channels);
    static HlkWeights identity(const LkdConfig& cfg, int channels);
    static HlkWeights seeded(const LkdConfig& cfg, int channels, std::uint64_t seed);
};

Tensor hlk_branch(const Tensor& x, const LkdConfig& cfg, const HlkWeights& w);

// 1x1 (C -> C/r) -> GELU -> 3x3 -> GELU -> 1x1 (C/r -> C)
struct LocalWeights {
    Tensor w1, w2, w3;
    std::vector<float> b1, b2, b3;

    static LocalWeights seeded(int channels, int reduction, std::uint64_t seed);
};

Tensor local_branch(const Tensor& x, int reduction, const LocalWeights& w);

// Triple Feature Extraction weights: the three parallel branches plus the
// channel projection applied to pooled features.
struct TfeWeights {
    HlkWeights hlk;
    LocalWeights local;
    Mat channel_w;                // C_fg x C_fg
    std::vector<float> channel_b; // length C_fg

    static TfeWeights seeded(const LkdConfig& cfg, int c_fg, std::uint64_t seed);
};

// Large Kernel Distillation: split off the fine-grained channels, run TFE on
// them, pass the coarse channels through untouched, and concatenate.
Tensor lkd_forward(const Tensor& x, const LkdConfig& cfg, const TfeWeights& w);

// TFE alone (on a tensor that already has C_fg channels); exposed so the
// instrumentation tests can scope it.
Tensor tfe_forward(const Tensor& fine, const LkdConfig& cfg, const TfeWeights& w);

} // namespace ucan

#endif
