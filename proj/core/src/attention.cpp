#include "ucan/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ucan/instrument.hpp"
#include "ucan/ops.hpp"

namespace ucan {

namespace ins = instrument;

namespace {

void check_qkv(const Mat& q, const Mat& k, const Mat& v) {
    if (q.cols() != k.cols())
        throw DimensionError("attention: q/k feature dims differ");
    if (k.rows() != v.rows())
        throw DimensionError("attention: k/v token counts differ");
    if (q.rows() < 1 || k.rows() < 1)
        throw DimensionError("attention: empty token set");
}

// guarded division denominator: rows whose kernel mass vanished are nudged
// by eps and reported, not failed (an all-negative ReLU row is legitimate)
inline double guard_denominator(double den) {
    if (std::abs(den) < kDenomGuardEps) {
        ins::hit_denom_guard();
        den += kDenomGuardEps;
    }
    return den;
}

} // namespace

Mat softmax_attention(const Mat& q, const Mat& k, const Mat& v, float scale) {
    check_qkv(q, k, v);
    const int n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();

    ins::Scratch<float> scores(std::size_t(n) * m);
    for (int i = 0; i < n; ++i) {
        const float* qi = q.row(i);
        for (int j = 0; j < m; ++j) {
            const float* kj = k.row(j);
            double acc = 0.0;
            for (int p = 0; p < d; ++p) acc += double(qi[p]) * double(kj[p]);
            scores[std::size_t(i) * m + j] = static_cast<float>(acc * scale);
        }
    }
    ins::add_matmul_macs(std::int64_t(n) * m * d);

    softmax_rows_inplace(scores.data(), n, m);

    Mat out(n, dv);
    for (int i = 0; i < n; ++i) {
        const float* si = scores.data() + std::size_t(i) * m;
        std::vector<double> acc(dv, 0.0);
        for (int j = 0; j < m; ++j) {
            const double w = si[j];
            const float* vj = v.row(j);
            for (int p = 0; p < dv; ++p) acc[p] += w * double(vj[p]);
        }
        for (int p = 0; p < dv; ++p) out.at(i, p) = static_cast<float>(acc[p]);
    }
    ins::add_matmul_macs(std::int64_t(n) * m * dv);
    return out;
}

Mat linear_attention_quadratic(const Mat& q, const Mat& k, const Mat& v,
                               const FeatureMap& fm) {
    check_qkv(q, k, v);
    const int n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
    const int r = feature_output_dim(fm, d);

    ins::Scratch<float> fq(std::size_t(n) * r);
    ins::Scratch<float> fk(std::size_t(m) * r);
    for (int i = 0; i < n; ++i) apply_feature_map_row(fm, q.row(i), d, fq.data() + std::size_t(i) * r);
    for (int j = 0; j < m; ++j) apply_feature_map_row(fm, k.row(j), d, fk.data() + std::size_t(j) * r);
    if (fm.tag != FeatureMapTag::Hedgehog)
        ins::add_elementwise(std::int64_t(n + m) * r);

    // full kernel matrix, the O(N^2) route
    ins::Scratch<float> kernel(std::size_t(n) * m);
    for (int i = 0; i < n; ++i) {
        const float* fqi = fq.data() + std::size_t(i) * r;
        for (int j = 0; j < m; ++j) {
            const float* fkj = fk.data() + std::size_t(j) * r;
            double acc = 0.0;
            for (int p = 0; p < r; ++p) acc += double(fqi[p]) * double(fkj[p]);
            kernel[std::size_t(i) * m + j] = static_cast<float>(acc);
        }
    }
    ins::add_matmul_macs(std::int64_t(n) * m * r);

    Mat out(n, dv);
    for (int i = 0; i < n; ++i) {
        float* ki = kernel.data() + std::size_t(i) * m;
        double den = 0.0;
        for (int j = 0; j < m; ++j) den += ki[j];
        den = guard_denominator(den);
        const double inv = 1.0 / den;
        std::vector<double> acc(dv, 0.0);
        for (int j = 0; j < m; ++j) {
            const double w = double(ki[j]) * inv;
            const float* vj = v.row(j);
            for (int p = 0; p < dv; ++p) acc[p] += w * double(vj[p]);
        }
        for (int p = 0; p < dv; ++p) out.at(i, p) = static_cast<float>(acc[p]);
    }
    ins::add_matmul_macs(std::int64_t(n) * m * dv);
    ins::add_elementwise(std::int64_t(n) * m);
    return out;
}

Mat linear_attention_linear(const Mat& q, const Mat& k, const Mat& v,
                            const FeatureMap& fm) {
    check_qkv(q, k, v);
    const int n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
    const int r = feature_output_dim(fm, d);

    // key-side aggregates, built once and reused for every query
    std::vector<double> s(std::size_t(r) * dv, 0.0); // S = sum_j phi(k_j) v_j^T
    std::vector<double> z(r, 0.0);                   // z = sum_j phi(k_j)
    {
        ins::Scratch<float> fk(std::size_t(m) * r);
        for (int j = 0; j < m; ++j)
            apply_feature_map_row(fm, k.row(j), d, fk.data() + std::size_t(j) * r);
        if (fm.tag != FeatureMapTag::Hedgehog) ins::add_elementwise(std::int64_t(m) * r);
        for (int j = 0; j < m; ++j) {
            const float* fkj = fk.data() + std::size_t(j) * r;
            const float* vj = v.row(j);
            for (int p = 0; p < r; ++p) {
                const double f = fkj[p];
                z[p] += f;
                double* srow = s.data() + std::size_t(p) * dv;
                for (int c = 0; c < dv; ++c) srow[c] += f * double(vj[c]);
            }
        }
        ins::add_matmul_macs(std::int64_t(m) * r * dv);
    }

    Mat out(n, dv);
    std::vector<float> fqi(r);
    for (int i = 0; i < n; ++i) {
        apply_feature_map_row(fm, q.row(i), d, fqi.data());
        std::vector<double> acc(dv, 0.0);
        double den = 0.0;
        for (int p = 0; p < r; ++p) {
            const double f = fqi[p];
            den += f * z[p];
            const double* srow = s.data() + std::size_t(p) * dv;
            for (int c = 0; c < dv; ++c) acc[c] += f * double(srow[c]);
        }
        den = guard_denominator(den);
        const double inv = 1.0 / den;
        for (int c = 0; c < dv; ++c) out.at(i, c) = static_cast<float>(acc[c] * inv);
    }
    if (fm.tag != FeatureMapTag::Hedgehog) ins::add_elementwise(std::int64_t(n) * r);
    ins::add_matmul_macs(std::int64_t(n) * r * dv);
    // normaliser dot products are bookkept as elementwise, consistent with
    // the convention that normalisation sits outside the MAC model
    ins::add_elementwise(std::int64_t(n) * r + std::int64_t(n) * dv);
    return out;
}

Mat tiled_exact_attention(const Mat& q, const Mat& k, const Mat& v, float scale,
                          const TileConfig& tiles) {
    check_qkv(q, k, v);
    if (tiles.tile_rows < 1 || tiles.tile_cols < 1)
        throw ConfigError("tiled attention: tile sizes must be >= 1");
    const int n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
    const int tr = std::min(tiles.tile_rows, n);
    const int tc = std::min(tiles.tile_cols, m);

    Mat out(n, dv);
    ins::Scratch<float> scores(std::size_t(tr) * tc);
    ins::Scratch<double> acc(std::size_t(tr) * dv);
    std::vector<double> run_max(tr), run_den(tr);

    for (int i0 = 0; i0 < n; i0 += tr) {
        const int rows = std::min(tr, n - i0);
        std::fill(acc.data(), acc.data() + std::size_t(rows) * dv, 0.0);
        std::fill(run_max.begin(), run_max.begin() + rows,
                  -std::numeric_limits<double>::infinity());
        std::fill(run_den.begin(), run_den.begin() + rows, 0.0);

        for (int j0 = 0; j0 < m; j0 += tc) {
            const int cols = std::min(tc, m - j0);
            for (int i = 0; i < rows; ++i) {
                const float* qi = q.row(i0 + i);
                for (int j = 0; j < cols; ++j) {
                    const float* kj = k.row(j0 + j);
                    double dot = 0.0;
                    for (int p = 0; p < d; ++p) dot += double(qi[p]) * double(kj[p]);
                    scores[std::size_t(i) * tc + j] = static_cast<float>(dot * scale);
                }
            }
            ins::add_matmul_macs(std::int64_t(rows) * cols * d);

            // online softmax: fold this key tile into the running rows
            for (int i = 0; i < rows; ++i) {
                const float* si = scores.data() + std::size_t(i) * tc;
                double tile_max = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < cols; ++j) tile_max = std::max(tile_max, double(si[j]));
                const double new_max = std::max(run_max[i], tile_max);
                if (run_max[i] > -std::numeric_limits<double>::infinity() &&
                    new_max > run_max[i]) {
                    const double rescale = std::exp(run_max[i] - new_max);
                    run_den[i] *= rescale;
                    double* ai = acc.data() + std::size_t(i) * dv;
                    for (int p = 0; p < dv; ++p) ai[p] *= rescale;
                }
                run_max[i] = new_max;
                double* ai = acc.data() + std::size_t(i) * dv;
                for (int j = 0; j < cols; ++j) {
                    const double p = std::exp(double(si[j]) - new_max);
                    run_den[i] += p;
                    const float* vj = v.row(j0 + j);
                    for (int c = 0; c < dv; ++c) ai[c] += p * double(vj[c]);
                }
            }
            ins::add_matmul_macs(std::int64_t(rows) * cols * dv);
            ins::add_elementwise(std::int64_t(rows) * cols);
        }

        for (int i = 0; i < rows; ++i) {
            const double inv = 1.0 / run_den[i];
            const double* ai = acc.data() + std::size_t(i) * dv;
            for (int p = 0; p < dv; ++p)
                out.at(i0 + i, p) = static_cast<float>(ai[p] * inv);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Windowed multi-head self attention
// ---------------------------------------------------------------------------

namespace {

struct Windowed {
    Tensor windows;
    int padded_h, padded_w;
};

Windowed partition_padded(const Tensor& x, int ws) {
    const Shape& s = x.shape();
    const int ph = (ws - s.h % ws) % ws;
    const int pw = (ws - s.w % ws) % ws;
    const int h2 = s.h + ph, w2 = s.w + pw;
    Tensor padded = pad_spatial(x, ph, pw);
    return {window_partition(padded, ws), h2, w2};
}

void check_wmsa_cfg(const Tensor& x, const AttentionConfig& cfg) {
    if (!cfg.window) throw ConfigError("windowed attention: no window size configured");
    if (x.shape().c != cfg.channels())
        throw ConfigError("windowed attention: channels " + std::to_string(x.shape().c) +
                          " != heads * head_dim = " + std::to_string(cfg.channels()));
}

} // namespace

Tensor windowed_mhsa(const Tensor& x, const AttentionConfig& cfg, const WmsaWeights& w,
                     WindowAttentionMaps* maps_out,
                     const std::optional<TileConfig>& engine_tiles) {
    check_wmsa_cfg(x, cfg);
    const Shape& s = x.shape();
    const int ws = *cfg.window;
    const int c = s.c, hd = cfg.head_dim, heads = cfg.heads;
    const float scale = cfg.effective_scale();

    Windowed part = partition_padded(x, ws);
    const int num_windows = part.windows.shape().n;
    const int tokens = ws * ws;

    if (maps_out) {
        maps_out->windows = num_windows;
        maps_out->heads = heads;
        maps_out->tokens = tokens;
        maps_out->maps.assign(std::size_t(num_windows) * heads, Mat());
    }

    Tensor out_windows({num_windows, c, ws, ws});
    for (int win = 0; win < num_windows; ++win) {
        Mat xt = tensor_to_tokens(part.windows, win); // tokens x c  (per-window view)
        Mat qm = matmul(xt, w.w_q);
        Mat km = matmul(xt, w.w_k);
        Mat vm = matmul(xt, w.w_v);

        Mat merged(tokens, c);
        for (int h = 0; h < heads; ++h) {
            Mat qh(tokens, hd), kh(tokens, hd), vh(tokens, hd);
            for (int t = 0; t < tokens; ++t)
                for (int p = 0; p < hd; ++p) {
                    qh.at(t, p) = qm.at(t, h * hd + p);
                    kh.at(t, p) = km.at(t, h * hd + p);
                    vh.at(t, p) = vm.at(t, h * hd + p);
                }
            Mat oh;
            if (maps_out) {
                // one pass: the recorded map is exactly the one applied here
                Mat logits = matmul(qh, transpose(kh));
                for (auto& v2 : logits.vec()) v2 *= scale;
                Mat probs = softmax_lastdim(logits);
                oh = matmul(probs, vh);
                maps_out->maps[std::size_t(win) * heads + h] = std::move(probs);
            } else if (engine_tiles) {
                oh = tiled_exact_attention(qh, kh, vh, scale, *engine_tiles);
            } else {
                oh = softmax_attention(qh, kh, vh, scale);
            }
            for (int t = 0; t < tokens; ++t)
                for (int p = 0; p < hd; ++p) merged.at(t, h * hd + p) = oh.at(t, p);
        }
        Mat projected = matmul(merged, w.w_o);
        Tensor wt = tokens_to_tensor(projected, c, ws, ws);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ws; ++y)
                for (int x2 = 0; x2 < ws; ++x2)
                    out_windows.at(win, ch, y, x2) = wt.at(0, ch, y, x2);
    }

    Tensor merged = window_merge(out_windows, ws, s.n, part.padded_h, part.padded_w);
    return crop_spatial(merged, s.h, s.w);
}

Tensor windowed_mhsa_reuse(const Tensor& x, const AttentionConfig& cfg,
                           const WmsaWeights& w, const WindowAttentionMaps& maps) {
    check_wmsa_cfg(x, cfg);
    const Shape& s = x.shape();
    const int ws = *cfg.window;
    const int c = s.c, hd = cfg.head_dim, heads = cfg.heads;

    Windowed part = partition_padded(x, ws);
    const int num_windows = part.windows.shape().n;
    const int tokens = ws * ws;
    if (maps.windows != num_windows || maps.heads != heads || maps.tokens != tokens)
        throw ContractError("windowed attention reuse: shared maps (" +
                            std::to_string(maps.windows) + " windows, " +
                            std::to_string(maps.heads) + " heads, " +
                            std::to_string(maps.tokens) + " tokens) do not match input (" +
                            std::to_string(num_windows) + ", " + std::to_string(heads) +
                            ", " + std::to_string(tokens) + ")");

    Tensor out_windows({num_windows, c, ws, ws});
    for (int win = 0; win < num_windows; ++win) {
        Mat xt = tensor_to_tokens(part.windows, win);
        Mat vm = matmul(xt, w.w_v);
        Mat merged(tokens, c);
        for (int h = 0; h < heads; ++h) {
            Mat vh(tokens, hd);
            for (int t = 0; t < tokens; ++t)
                for (int p = 0; p < hd; ++p) vh.at(t, p) = vm.at(t, h * hd + p);
            Mat oh = matmul(maps.maps[std::size_t(win) * heads + h], vh);
            for (int t = 0; t < tokens; ++t)
                for (int p = 0; p < hd; ++p) merged.at(t, h * hd + p) = oh.at(t, p);
        }
        Mat projected = matmul(merged, w.w_o);
        Tensor wt = tokens_to_tensor(projected, c, ws, ws);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ws; ++y)
                for (int x2 = 0; x2 < ws; ++x2)
                    out_windows.at(win, ch, y, x2) = wt.at(0, ch, y, x2);
    }

    Tensor merged = window_merge(out_windows, ws, s.n, part.padded_h, part.padded_w);
    return crop_spatial(merged, s.h, s.w);
}

} // namespace ucan
