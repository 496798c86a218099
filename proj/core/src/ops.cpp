#include "ucan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ucan/instrument.hpp"

namespace ucan {

namespace ins = instrument;

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& weights,
              const std::optional<std::vector<float>>& bias, const ConvOptions& opt) {
    const Shape& xs = x.shape();
    const Shape& ws = weights.shape(); // (c_out, c_in/groups, kh, kw)
    const int groups = opt.groups;
    if (groups < 1 || xs.c % groups != 0)
        throw ConfigError("conv2d: groups " + std::to_string(groups) +
                          " does not divide input channels " + std::to_string(xs.c));
    if (ws.c != xs.c / groups)
        throw DimensionError("conv2d: weight shape " + ws.str() +
                             " does not match input " + xs.str() + " with groups " +
                             std::to_string(groups));
    if (ws.n % groups != 0)
        throw ConfigError("conv2d: output channels not divisible by groups");
    if (bias && static_cast<int>(bias->size()) != ws.n)
        throw DimensionError("conv2d: bias length != c_out");

    const int c_out = ws.n, kh = ws.h, kw = ws.w;
    const int dh = opt.dilation.first, dw = opt.dilation.second;
    const int stride = opt.stride;
    const int pad_h = ((kh - 1) * dh) / 2;
    const int pad_w = ((kw - 1) * dw) / 2;
    const int eff_kh = (kh - 1) * dh + 1;
    const int eff_kw = (kw - 1) * dw + 1;
    const int h_out = (xs.h + 2 * pad_h - eff_kh) / stride + 1;
    const int w_out = (xs.w + 2 * pad_w - eff_kw) / stride + 1;
    if (h_out < 1 || w_out < 1)
        throw DimensionError("conv2d: kernel larger than padded input");

    const int cpg_in = xs.c / groups;  // input channels per group
    const int cpg_out = c_out / groups;

    Tensor out({xs.n, c_out, h_out, w_out});
    for (int n = 0; n < xs.n; ++n) {
        for (int oc = 0; oc < c_out; ++oc) {
            const int g = oc / cpg_out;
            const float b = bias ? (*bias)[oc] : 0.0f;
            for (int oy = 0; oy < h_out; ++oy) {
                for (int ox = 0; ox < w_out; ++ox) {
                    double acc = b;
                    const int iy0 = oy * stride - pad_h;
                    const int ix0 = ox * stride - pad_w;
                    for (int ic = 0; ic < cpg_in; ++ic) {
                        const int xc = g * cpg_in + ic;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = iy0 + ky * dh;
                            if (iy < 0 || iy >= xs.h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ix0 + kx * dw;
                                if (ix < 0 || ix >= xs.w) continue;
                                acc += double(x.at(n, xc, iy, ix)) *
                                       double(weights.at(oc, ic, ky, kx));
                            }
                        }
                    }
                    out.at(n, oc, oy, ox) = static_cast<float>(acc);
                }
            }
        }
    }
    ins::add_conv_macs(std::int64_t(xs.n) * c_out * cpg_in * kh * kw * h_out * w_out);
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
    const int n = a.rows(), k = a.cols(), m = b.cols();
    Mat out(n, m);
    std::vector<double> acc(m);
    for (int i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b.row(p);
            for (int j = 0; j < m; ++j) acc[j] += av * double(brow[j]);
        }
        float* orow = out.row(i);
        for (int j = 0; j < m; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    ins::add_matmul_macs(std::int64_t(n) * k * m);
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Mat linear(const Mat& x, const Mat& w, const std::vector<float>* bias) {
    Mat y = matmul(x, w);
    if (bias) {
        if (static_cast<int>(bias->size()) != w.cols())
            throw DimensionError("linear: bias length != output dim");
        for (int i = 0; i < y.rows(); ++i) {
            float* row = y.row(i);
            for (int j = 0; j < y.cols(); ++j) row[j] += (*bias)[j];
        }
    }
    return y;
}

void softmax_rows_inplace(float* data, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        float* row = data + std::int64_t(i) * cols;
        float mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double e = std::exp(double(row[j]) - double(mx));
            row[j] = static_cast<float>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) row[j] = static_cast<float>(row[j] * inv);
    }
    ins::add_elementwise(std::int64_t(rows) * cols * 2);
}

Mat softmax_lastdim(const Mat& x) {
    Mat out = x;
    softmax_rows_inplace(out.data(), out.rows(), out.cols());
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor pixel_shuffle(const Tensor& x, int r) {
    const Shape& s = x.shape();
    if (r < 1 || s.c % (r * r) != 0)
        throw ConfigError("pixel_shuffle: channels " + std::to_string(s.c) +
                          " not divisible by r^2 = " + std::to_string(r * r));
    const int c_out = s.c / (r * r);
    Tensor out({s.n, c_out, s.h * r, s.w * r});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < c_out; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2)
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < r; ++j)
                            out.at(n, c, y * r + i, x2 * r + j) =
                                x.at(n, c * r * r + i * r + j, y, x2);
    return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    const Shape& s = x.shape();
    if (r < 1 || s.h % r != 0 || s.w % r != 0)
        throw ConfigError("pixel_unshuffle: spatial dims not divisible by r");
    Tensor out({s.n, s.c * r * r, s.h / r, s.w / r});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h / r; ++y)
                for (int x2 = 0; x2 < s.w / r; ++x2)
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < r; ++j)
                            out.at(n, c * r * r + i * r + j, y, x2) =
                                x.at(n, c, y * r + i, x2 * r + j);
    return out;
}

Tensor window_partition(const Tensor& x, int ws) {
    const Shape& s = x.shape();
    if (ws < 1 || s.h % ws != 0 || s.w % ws != 0)
        throw DimensionError("window_partition: " + std::to_string(s.h) + "x" +
                             std::to_string(s.w) + " not divisible by window " +
                             std::to_string(ws));
    const int nh = s.h / ws, nw = s.w / ws;
    Tensor out({s.n * nh * nw, s.c, ws, ws});
    for (int n = 0; n < s.n; ++n)
        for (int wy = 0; wy < nh; ++wy)
            for (int wx = 0; wx < nw; ++wx) {
                const int win = (n * nh + wy) * nw + wx;
                for (int c = 0; c < s.c; ++c)
                    for (int y = 0; y < ws; ++y)
                        for (int x2 = 0; x2 < ws; ++x2)
                            out.at(win, c, y, x2) = x.at(n, c, wy * ws + y, wx * ws + x2);
            }
    return out;
}

Tensor window_merge(const Tensor& windows, int ws, int n, int h, int w) {
    if (h % ws != 0 || w % ws != 0)
        throw DimensionError("window_merge: target size not divisible by window");
    const int nh = h / ws, nw = w / ws;
    const Shape& s = windows.shape();
    if (s.n != n * nh * nw || s.h != ws || s.w != ws)
        throw DimensionError("window_merge: window batch does not match target");
    Tensor out({n, s.c, h, w});
    for (int b = 0; b < n; ++b)
        for (int wy = 0; wy < nh; ++wy)
            for (int wx = 0; wx < nw; ++wx) {
                const int win = (b * nh + wy) * nw + wx;
                for (int c = 0; c < s.c; ++c)
                    for (int y = 0; y < ws; ++y)
                        for (int x2 = 0; x2 < ws; ++x2)
                            out.at(b, c, wy * ws + y, wx * ws + x2) = windows.at(win, c, y, x2);
            }
    return out;
}

Tensor pad_spatial(const Tensor& x, int pad_h, int pad_w) {
    if (pad_h == 0 && pad_w == 0) return x;
    const Shape& s = x.shape();
    Tensor out({s.n, s.c, s.h + pad_h, s.w + pad_w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2)
                    out.at(n, c, y, x2) = x.at(n, c, y, x2);
    return out;
}

Tensor crop_spatial(const Tensor& x, int h, int w) {
    const Shape& s = x.shape();
    if (h == s.h && w == s.w) return x;
    if (h > s.h || w > s.w) throw DimensionError("crop_spatial: target larger than input");
    Tensor out({s.n, s.c, h, w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2)
                    out.at(n, c, y, x2) = x.at(n, c, y, x2);
    return out;
}

std::pair<Tensor, Tensor> channel_split(const Tensor& x, int c_first) {
    const Shape& s = x.shape();
    if (c_first < 1 || c_first >= s.c)
        throw DimensionError("channel_split: split point " + std::to_string(c_first) +
                             " out of range for " + std::to_string(s.c) + " channels");
    Tensor a({s.n, c_first, s.h, s.w});
    Tensor b({s.n, s.c - c_first, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < c_first; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2) a.at(n, c, y, x2) = x.at(n, c, y, x2);
        for (int c = c_first; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2)
                    b.at(n, c - c_first, y, x2) = x.at(n, c, y, x2);
    }
    return {a, b};
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw DimensionError("channel_concat: mismatched shapes " + sa.str() + " vs " +
                             sb.str());
    Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
    for (int n = 0; n < sa.n; ++n) {
        for (int c = 0; c < sa.c; ++c)
            for (int y = 0; y < sa.h; ++y)
                for (int x2 = 0; x2 < sa.w; ++x2) out.at(n, c, y, x2) = a.at(n, c, y, x2);
        for (int c = 0; c < sb.c; ++c)
            for (int y = 0; y < sa.h; ++y)
                for (int x2 = 0; x2 < sa.w; ++x2)
                    out.at(n, sa.c + c, y, x2) = b.at(n, c, y, x2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalisation and activations
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta) {
    const Shape& s = x.shape();
    if (static_cast<int>(gamma.size()) != s.c || static_cast<int>(beta.size()) != s.c)
        throw DimensionError("layer_norm: gamma/beta length != channels");
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int y = 0; y < s.h; ++y) {
            for (int x2 = 0; x2 < s.w; ++x2) {
                double mean = 0.0;
                for (int c = 0; c < s.c; ++c) mean += x.at(n, c, y, x2);
                mean /= s.c;
                double var = 0.0;
                for (int c = 0; c < s.c; ++c) {
                    const double d = x.at(n, c, y, x2) - mean;
                    var += d * d;
                }
                var /= s.c;
                const double inv = 1.0 / std::sqrt(var + double(kLayerNormEps));
                for (int c = 0; c < s.c; ++c)
                    out.at(n, c, y, x2) = static_cast<float>(
                        (x.at(n, c, y, x2) - mean) * inv * gamma[c] + beta[c]);
            }
        }
    }
    ins::add_elementwise(s.numel() * 2);
    return out;
}

namespace {
inline float gelu_scalar(float x) {
    // exact erf form
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}
} // namespace

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.vec()) v = gelu_scalar(v);
    ins::add_elementwise(out.numel());
    return out;
}

Mat gelu(const Mat& x) {
    Mat out = x;
    for (auto& v : out.vec()) v = gelu_scalar(v);
    ins::add_elementwise(out.numel());
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.vec()) v = 1.0f / (1.0f + std::exp(-v));
    ins::add_elementwise(out.numel());
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " +
                             b.shape().str());
    Tensor out = a;
    const float* pb = b.data();
    float* po = out.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
    ins::add_elementwise(out.numel());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        throw DimensionError("mul: shape mismatch " + a.shape().str() + " vs " +
                             b.shape().str());
    Tensor out = a;
    const float* pb = b.data();
    float* po = out.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
    ins::add_elementwise(out.numel());
    return out;
}

Mat add(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("add: matrix shape mismatch");
    Mat out = a;
    for (std::int64_t i = 0; i < out.numel(); ++i) out.vec()[i] += b.vec()[i];
    ins::add_elementwise(out.numel());
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (auto& v : out.vec()) v *= s;
    ins::add_elementwise(out.numel());
    return out;
}

// ---------------------------------------------------------------------------
// Pooling / resize
// ---------------------------------------------------------------------------

Tensor max_pool(const Tensor& x, int k, int stride) {
    const Shape& s = x.shape();
    if (k < 1 || stride < 1) throw ConfigError("max_pool: bad kernel/stride");
    const int h_out = s.h >= k ? (s.h - k) / stride + 1 : 1;
    const int w_out = s.w >= k ? (s.w - k) / stride + 1 : 1;
    Tensor out({s.n, s.c, h_out, w_out});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox) {
                    float m = -std::numeric_limits<float>::infinity();
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = std::min(oy * stride + ky, s.h - 1);
                            const int ix = std::min(ox * stride + kx, s.w - 1);
                            m = std::max(m, x.at(n, c, iy, ix));
                        }
                    out.at(n, c, oy, ox) = m;
                }
    return out;
}

Mat global_avg_pool(const Tensor& x) {
    const Shape& s = x.shape();
    Mat out(s.n, s.c);
    const double inv = 1.0 / (double(s.h) * s.w);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2) acc += x.at(n, c, y, x2);
            out.at(n, c) = static_cast<float>(acc * inv);
        }
    ins::add_elementwise(s.numel());
    return out;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    const Shape& s = x.shape();
    Tensor out({s.n, s.c, out_h, out_w});
    const double sy = double(s.h) / out_h;
    const double sx = double(s.w) / out_w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    // half-pixel centres
                    const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
                    const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
                    const int y0 = std::min(int(fy), s.h - 1);
                    const int x0 = std::min(int(fx), s.w - 1);
                    const int y1 = std::min(y0 + 1, s.h - 1);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const double wy = fy - y0, wx = fx - x0;
                    const double v =
                        (1 - wy) * ((1 - wx) * x.at(n, c, y0, x0) + wx * x.at(n, c, y0, x1)) +
                        wy * ((1 - wx) * x.at(n, c, y1, x0) + wx * x.at(n, c, y1, x1));
                    out.at(n, c, oy, ox) = static_cast<float>(v);
                }
    ins::add_elementwise(out.numel());
    return out;
}

} // namespace ucan
