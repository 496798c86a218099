#ifndef UCAN_OPS_HPP
#define UCAN_OPS_HPP

#include <optional>
#include <utility>
#include <vector>

#include "ucan/tensor.hpp"

namespace ucan {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct ConvOptions {
    int stride = 1;
    std::pair<int, int> dilation = {1, 1}; // (dh, dw)
    int groups = 1;
};

// 2-D convolution with same-padding of ((k-1)*d)/2 per axis (zero padding).
// weights shape: (c_out, c_in/groups, kh, kw). groups == c_in gives
// depthwise behaviour. Accumulation is in double.
Tensor conv2d(const Tensor& x, const Tensor& weights,
              const std::optional<std::vector<float>>& bias = std::nullopt,
              const ConvOptions& opt = {});

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
// y = x * w + bias, w is (in x out)
Mat linear(const Mat& x, const Mat& w, const std::vector<float>* bias = nullptr);

// numerically stable row softmax (max subtraction, double-accumulated sums)
Mat softmax_lastdim(const Mat& x);
void softmax_rows_inplace(float* data, int rows, int cols);

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// (n, c, h, w) -> (n, c/r^2, h*r, w*r); element (n, c', h*r+i, w*r+j) comes
// from channel c'*r^2 + i*r + j.
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

// (n, c, h, w) -> (n * (h/ws) * (w/ws), c, ws, ws); window_merge inverts it.
Tensor window_partition(const Tensor& x, int ws);
Tensor window_merge(const Tensor& windows, int ws, int n, int h, int w);

Tensor pad_spatial(const Tensor& x, int pad_h, int pad_w); // zero pad bottom/right
Tensor crop_spatial(const Tensor& x, int h, int w);        // top-left crop

std::pair<Tensor, Tensor> channel_split(const Tensor& x, int c_first);
Tensor channel_concat(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Normalisation and activations
// ---------------------------------------------------------------------------

// LayerNorm over the channel axis per spatial token, epsilon 1e-6.
Tensor layer_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta);

Tensor gelu(const Tensor& x);
Mat gelu(const Mat& x);
Tensor sigmoid(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Mat add(const Mat& a, const Mat& b);

Tensor scale(const Tensor& a, float s);

// ---------------------------------------------------------------------------
// Pooling / resize
// ---------------------------------------------------------------------------

Tensor max_pool(const Tensor& x, int k, int stride);
// per-channel spatial mean -> (n, c) row per batch item
Mat global_avg_pool(const Tensor& x);
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

inline constexpr float kLayerNormEps = 1e-6f;

} // namespace ucan

#endif
