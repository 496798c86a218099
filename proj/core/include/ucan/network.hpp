#ifndef UCAN_NETWORK_HPP
#define UCAN_NETWORK_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ucan/attention.hpp"
#include "ucan/dual_fusion.hpp"
#include "ucan/large_kernel.hpp"
#include "ucan/ops.hpp"
#include "ucan/tensor.hpp"

namespace ucan {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct ModelConfig {
    int channels = 32;
    int groups = 2;
    int ha_depth = 3;
    int heads = 4;
    int wmsa_window = 16;
    int hpa_window = 32;
    int lkd_depth = 4;
    LkdConfig lkd{5, 2, std::nullopt, 4};
    int scale = 2;
    std::uint64_t seed = 0;
    bool use_hpa = true;       // ablation: identity bypass when false
    bool full_sharing = false; // ablation: receivers reuse phi outputs too

    void validate() const;

    AttentionConfig wmsa_config() const {
        return {heads, channels / heads, wmsa_window, 0.0f};
    }
    AttentionConfig hpa_config() const {
        return {heads, channels / heads, hpa_window, 0.0f};
    }
    DflConfig dfl_config() const { return {heads, true, false}; }

    // flat key=value text used by the CLI config files
    static ModelConfig from_text(const std::string& text);
    std::string to_text() const;
};

struct LnParams {
    std::vector<float> gamma, beta;
};

struct ConvLayer {
    Tensor w;
    std::vector<float> b;
    ConvOptions opt;

    Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, opt); }
};

struct ConvMlpWeights {
    ConvLayer expand;    // 1x1, C -> 2C
    ConvLayer depthwise; // 7x7 depthwise over 2C
    ConvLayer project;   // 1x1, 2C -> C
};

struct HpaWeights {
    LnParams ln1, ln2;
    ConvMlpWeights mlp;
    WmsaWeights attn;
};

struct LmWeights {
    ConvLayer dw; // 3x3 depthwise
    ConvLayer pw; // 1x1
};

struct ShaWeights {
    LnParams ln_wmsa, ln_dfl;
    WmsaWeights wmsa;
    DflWeights dfl;
};

struct EsaWeights {
    ConvLayer reduce;   // 1x1, C -> C/4
    ConvLayer stride3;  // 3x3 stride 2
    ConvLayer group3;   // 3x3
    ConvLayer restore;  // 1x1, C/4 -> C
};

struct BlockWeights {
    HpaWeights hpa;
    LmWeights lm;
    std::vector<ShaWeights> ha;
    std::vector<TfeWeights> lkd;
    EsaWeights esa;
};

struct GroupWeights {
    BlockWeights sb, rb;
};

struct UcanWeights {
    ConvLayer shallow; // 3x3, 3 -> C
    std::vector<GroupWeights> groups;
    ConvLayer fuse;    // 3x3, C -> C
    ConvLayer recon;   // 3x3, C -> 3 * scale^2
};

UcanWeights ucan_weights_seeded(const ModelConfig& cfg);

// Visits every float tensor in the weight tree with a stable name; the
// feature-map parameters are visited through the dedicated callback.
struct WeightVisitor {
    std::function<void(const std::string&, Tensor&)> on_tensor;
    std::function<void(const std::string&, Mat&)> on_mat;
    std::function<void(const std::string&, std::vector<float>&)> on_vector;
    std::function<void(const std::string&, HedgehogParams&)> on_feature_map;
};
void visit_weights(UcanWeights& w, const WeightVisitor& v);

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

// ConvMLP + large-window tiled exact attention, residuals around both stages
Tensor hpa_forward(const Tensor& x, const HpaWeights& w, const ModelConfig& cfg);

Tensor esa_forward(const Tensor& x, const EsaWeights& w);

// HPA -> LM -> SHA * ha_depth (emitting shares) -> LKD * lkd_depth ->
// +input residual -> ESA
std::pair<Tensor, std::vector<AttentionShare>> sharing_block(const Tensor& x,
                                                             const BlockWeights& w,
                                                             const ModelConfig& cfg);

// mirror of sharing_block with RHA modules consuming shares positionally
Tensor receiving_block(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg,
                       const std::vector<AttentionShare>& shares);

// shallow conv -> groups x (SB -> RB) -> fuse with shallow features ->
// reconstruction conv -> pixel shuffle
Tensor ucan_forward(const Tensor& img, const UcanWeights& w, const ModelConfig& cfg);

} // namespace ucan

#endif
