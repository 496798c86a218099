#ifndef UCAN_ATTENTION_HPP
#define UCAN_ATTENTION_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "ucan/feature_maps.hpp"
#include "ucan/tensor.hpp"

namespace ucan {

struct AttentionConfig {
    int heads = 1;
    int head_dim = 1;
    std::optional<int> window;
    float scale = 0.0f; // 0 -> use 1/sqrt(head_dim)

    float effective_scale() const {
        return scale != 0.0f ? scale : 1.0f / std::sqrt(float(head_dim));
    }
    int channels() const { return heads * head_dim; }
};

// Query/key tile sizes for the streaming engine. A pure performance knob:
// the output is identical for every choice.
struct TileConfig {
    int tile_rows = 64;
    int tile_cols = 64;
};

// denominator guard for kernelised attention rows; triggers are recorded in
// the instrumentation counters so the analysis layer can observe dead rows
inline constexpr double kDenomGuardEps = 1e-6;

// o_i = sum_j softmax_j(scale * q_i.k_j) v_j, materialising the full score
// matrix. The reference engine and the allocation worst case.
Mat softmax_attention(const Mat& q, const Mat& k, const Mat& v, float scale);

// Kernelised attention via the explicit N x N kernel matrix
// phi(Q) phi(K)^T, row-normalised. Serves as the oracle for the O(N) path.
Mat linear_attention_quadratic(const Mat& q, const Mat& k, const Mat& v,
                               const FeatureMap& fm);

// Same map, computed with the shared key-side aggregates
//   S = sum_j phi(k_j) v_j^T   and   z = sum_j phi(k_j),
// then o_i = (phi(q_i)^T S) / (phi(q_i)^T z). Never materialises an
// N x N buffer.
Mat linear_attention_linear(const Mat& q, const Mat& k, const Mat& v,
                            const FeatureMap& fm);

// Exact softmax attention with online-softmax tiling: per query row a
// running max and running denominator, temporaries bounded by
// O(tile_rows * tile_cols + tile_rows * d).
Mat tiled_exact_attention(const Mat& q, const Mat& k, const Mat& v, float scale,
                          const TileConfig& tiles);

struct WmsaWeights {
    Mat w_q, w_k, w_v, w_o; // each C x C
};

// Per-window, per-head softmax attention maps, recorded when a sharing
// block wants to hand them to its receiver.
struct WindowAttentionMaps {
    int windows = 0;
    int heads = 0;
    int tokens = 0;          // ws * ws
    std::vector<Mat> maps;   // indexed [window * heads + head], tokens x tokens

    bool empty() const { return maps.empty(); }
};

// Window-based multi-head self attention (non-shifted windows). Inputs with
// H or W not divisible by the window are zero-padded and cropped back after
// the merge. `engine_tiles`, when set, runs each window through the tiled
// engine instead of the naive one.
Tensor windowed_mhsa(const Tensor& x, const AttentionConfig& cfg,
                     const WmsaWeights& w, WindowAttentionMaps* maps_out = nullptr,
                     const std::optional<TileConfig>& engine_tiles = std::nullopt);

// Receiving-side WMSA: applies previously recorded attention maps to this
// input's values, skipping the Q/K computation entirely.
Tensor windowed_mhsa_reuse(const Tensor& x, const AttentionConfig& cfg,
                           const WmsaWeights& w, const WindowAttentionMaps& maps);

} // namespace ucan

#endif
