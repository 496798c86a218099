#ifndef UCAN_DUAL_FUSION_HPP
#define UCAN_DUAL_FUSION_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "ucan/attention.hpp"
#include "ucan/feature_maps.hpp"
#include "ucan/tensor.hpp"

namespace ucan {

struct DflConfig {
    int heads = 4;
    bool normalize_spatial = true;   // divide by phi(Q)^T sum(phi(K)); the raw
                                     // aggregate form is exposed for experiments
    bool fourier_positional = false; // fixed sinusoidal position feature on Q/K
};

// Weights of one Dual Fusion Layer at block width C. Q/K/V are projected to
// the half width C/2 on which both branches operate.
struct DflWeights {
    Mat w_q, w_k, w_v;       // C x C/2
    Tensor w_d;              // depthwise 3x3 over C/2 channels: (C/2, 1, 3, 3)
    HedgehogParams hedgehog; // sized to the per-head slice C/(2*heads)
    Mat w_out;               // C x C, applied to concat(F_sb, F_cb)

    static DflWeights seeded(int channels, int heads, std::uint64_t seed);
};

// What a sharing layer hands to its paired receiver. a_map carries the
// window-attention maps; q/k are the dual fusion layer's projection outputs,
// on which the receiver re-applies its own feature map ("semi" sharing).
// phi_q/phi_k additionally freeze the sharer's mapped features for the
// full-sharing ablation.
struct AttentionShare {
    WindowAttentionMaps a_map;
    Mat q, k;                    // N x C/2
    std::vector<Mat> phi_q, phi_k; // one entry per head, N x r
    int c = 0, h = 0, w = 0;     // shapes recorded at share time
};

// Channel attention: mixing matrix softmax(Q^T K / sqrt(N)) applied to V's
// channel axis; every output channel is a convex combination of input
// channels.
Mat channel_attention(const Mat& q, const Mat& k, const Mat& v);

// The two fusion branches at attention width C_b = q.cols():
//   spatial: per-head Hedgehog attention plus a depthwise 3x3 on V
//   channel: transposed attention over the channel dimension
// Multiply-accumulate cost of this scope (matmul + conv classes) is exactly
// dfl_mac_count(C_b, h, w, heads) when the map has one exponential pair;
// projection layers and the added normaliser sit outside it.
std::pair<Mat, Mat> fusion_branches(const Mat& q, const Mat& k, const Mat& v,
                                    int h, int w, const DflWeights& wts,
                                    const DflConfig& cfg,
                                    std::vector<Mat>* phi_q_out = nullptr,
                                    std::vector<Mat>* phi_k_out = nullptr,
                                    const std::vector<Mat>* phi_q_in = nullptr,
                                    const std::vector<Mat>* phi_k_in = nullptr);

// Sharing-side forward: computes Q/K/V, runs both branches, projects the
// concatenated result, and emits the reusable attention components.
std::pair<Tensor, AttentionShare> dfl_forward_shared(const Tensor& x,
                                                     const DflWeights& wts,
                                                     const DflConfig& cfg);

// Receiver-side forward: reuses the shared Q/K projections (recomputing only
// V and the feature maps), or, in full sharing, the sharer's phi outputs as
// well. Strictly cheaper than the sharing forward at identical shapes.
Tensor dfl_forward_receiver(const Tensor& x, const DflWeights& wts,
                            const DflConfig& cfg, const AttentionShare& share,
                            bool full_sharing = false);

// Closed-form multiply-accumulate count of the two fusion branches at
// attention width c with d heads:
//   2 c^2 h w  +  6 h w c^2 / d  +  9 h w c
std::int64_t dfl_mac_count(int c, int h, int w, int d);

} // namespace ucan

#endif
