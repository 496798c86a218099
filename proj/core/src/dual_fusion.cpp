#include "ucan/dual_fusion.hpp"

#include <cmath>

#include "ucan/instrument.hpp"
#include "ucan/ops.hpp"

namespace ucan {

namespace ins = instrument;

DflWeights DflWeights::seeded(int channels, int heads, std::uint64_t seed) {
    if (channels % 2 != 0) throw ConfigError("dfl: channels must be even");
    const int half = channels / 2;
    if (half % heads != 0) throw ConfigError("dfl: C/2 must be divisible by heads");
    DflWeights w;
    Rng rng(seed);
    auto init = [&rng](Mat& m, int rows, int cols) {
        m = Mat(rows, cols);
        const float std = 1.0f / std::sqrt(float(rows));
        rng.fill_gaussian(m.data(), m.numel(), std);
    };
    init(w.w_q, channels, half);
    init(w.w_k, channels, half);
    init(w.w_v, channels, half);
    init(w.w_out, channels, channels);
    w.w_d = Tensor({half, 1, 3, 3});
    rng.fill_gaussian(w.w_d.data(), w.w_d.numel(), 1.0f / 3.0f);
    w.hedgehog = HedgehogParams::seeded(half / heads, 1, rng.next_u64());
    return w;
}

Mat channel_attention(const Mat& q, const Mat& k, const Mat& v) {
    if (q.rows() != k.rows() || q.cols() != k.cols() || v.rows() != q.rows() ||
        v.cols() != q.cols())
        throw DimensionError("channel attention: Q/K/V must share one shape");
    const int n = q.rows();
    Mat gram = matmul(transpose(q), k); // (C_b x C_b)
    const float inv_sqrt_n = 1.0f / std::sqrt(float(n));
    for (auto& x : gram.vec()) x *= inv_sqrt_n;
    ins::add_elementwise(gram.numel());
    Mat mix = softmax_lastdim(gram);
    return matmul(v, transpose(mix)); // out[:, i] = sum_j mix(i, j) V[:, j]
}

namespace {

// fixed sinusoidal position feature, added in place to a token matrix
void add_fourier_positions(Mat& m, int h, int w) {
    const int d = m.cols();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float* row = m.row(y * w + x);
            for (int j = 0; j < d; ++j) {
                const double freq = std::pow(10000.0, -double(j / 2 * 2) / d);
                const double pos = (j % 2 == 0) ? y * freq : x * freq;
                row[j] += 0.1f * static_cast<float>((j % 2 == 0) ? std::sin(pos)
                                                                 : std::cos(pos));
            }
        }
    ins::add_elementwise(m.numel());
}

Mat head_slice(const Mat& m, int head, int hd) {
    Mat out(m.rows(), hd);
    for (int t = 0; t < m.rows(); ++t)
        for (int p = 0; p < hd; ++p) out.at(t, p) = m.at(t, head * hd + p);
    return out;
}

} // namespace

std::pair<Mat, Mat> fusion_branches(const Mat& q, const Mat& k, const Mat& v, int h,
                                    int w, const DflWeights& wts, const DflConfig& cfg,
                                    std::vector<Mat>* phi_q_out,
                                    std::vector<Mat>* phi_k_out,
                                    const std::vector<Mat>* phi_q_in,
                                    const std::vector<Mat>* phi_k_in) {
    const int n = q.rows();
    const int cb = q.cols();
    const int heads = cfg.heads;
    if (cb % heads != 0)
        throw ConfigError("fusion branches: width not divisible by heads");
    const int hd = cb / heads;
    if (n != h * w) throw DimensionError("fusion branches: token count != h*w");

    Mat q_eff = q, k_eff = k;
    if (cfg.fourier_positional) {
        add_fourier_positions(q_eff, h, w);
        add_fourier_positions(k_eff, h, w);
    }

    FeatureMap phi = FeatureMap::hedgehog_map(wts.hedgehog);
    if (wts.hedgehog.input_dim() != hd)
        throw ConfigError("fusion branches: hedgehog dim " +
                          std::to_string(wts.hedgehog.input_dim()) +
                          " != head slice " + std::to_string(hd));

    if (phi_q_out) phi_q_out->assign(heads, Mat());
    if (phi_k_out) phi_k_out->assign(heads, Mat());

    // spatial branch: per-head linear attention with the Hedgehog map
    Mat spatial(n, cb);
    for (int head = 0; head < heads; ++head) {
        Mat vh = head_slice(v, head, hd);
        Mat fq, fk;
        if (phi_q_in && phi_k_in) {
            fq = (*phi_q_in)[head];
            fk = (*phi_k_in)[head];
            if (fq.rows() != n || fk.rows() != n)
                throw ContractError("fusion branches: shared phi token count mismatch");
        } else {
            fq = apply_feature_map(phi, head_slice(q_eff, head, hd));
            fk = apply_feature_map(phi, head_slice(k_eff, head, hd));
        }
        const int r = fq.cols();

        Mat s = matmul(transpose(fk), vh); // r x hd
        std::vector<double> z(r, 0.0);
        for (int t = 0; t < n; ++t)
            for (int p = 0; p < r; ++p) z[p] += fk.at(t, p);

        Mat num = matmul(fq, s); // n x hd
        for (int t = 0; t < n; ++t) {
            double den = 1.0;
            if (cfg.normalize_spatial) {
                den = 0.0;
                const float* fqt = fq.row(t);
                for (int p = 0; p < r; ++p) den += double(fqt[p]) * z[p];
                if (std::abs(den) < kDenomGuardEps) {
                    ins::hit_denom_guard();
                    den += kDenomGuardEps;
                }
            }
            const double inv = 1.0 / den;
            for (int p = 0; p < hd; ++p)
                spatial.at(t, head * hd + p) = static_cast<float>(num.at(t, p) * inv);
        }
        ins::add_elementwise(std::int64_t(n) * (r + hd));

        if (phi_q_out) (*phi_q_out)[head] = std::move(fq);
        if (phi_k_out) (*phi_k_out)[head] = std::move(fk);
    }

    // local complement: depthwise 3x3 over V in image layout
    Tensor v_img = tokens_to_tensor(v, cb, h, w);
    Tensor v_local = conv2d(v_img, wts.w_d, std::nullopt, {1, {1, 1}, cb});
    Mat v_local_tokens = tensor_to_tokens(v_local);
    Mat f_sb = add(spatial, v_local_tokens);

    Mat f_cb = channel_attention(q_eff, k_eff, v);
    return {std::move(f_sb), std::move(f_cb)};
}

namespace {

void check_dfl_input(const Tensor& x, const DflConfig& cfg) {
    const Shape& s = x.shape();
    if (s.n != 1)
        throw DimensionError("dfl: expects a single-item tensor; batch is the caller's loop");
    if (s.c % 2 != 0)
        throw ConfigError("dfl: channel count " + std::to_string(s.c) + " must be even");
    if ((s.c / 2) % cfg.heads != 0)
        throw ConfigError("dfl: C/2 = " + std::to_string(s.c / 2) +
                          " not divisible by heads " + std::to_string(cfg.heads));
}

Mat concat_cols(const Mat& a, const Mat& b) {
    Mat out(a.rows(), a.cols() + b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < b.cols(); ++j) out.at(i, a.cols() + j) = b.at(i, j);
    }
    return out;
}

} // namespace

std::pair<Tensor, AttentionShare> dfl_forward_shared(const Tensor& x,
                                                     const DflWeights& wts,
                                                     const DflConfig& cfg) {
    check_dfl_input(x, cfg);
    const Shape& s = x.shape();

    Mat tokens = tensor_to_tokens(x);
    Mat q = matmul(tokens, wts.w_q);
    Mat k = matmul(tokens, wts.w_k);
    Mat v = matmul(tokens, wts.w_v);

    AttentionShare share;
    share.c = s.c;
    share.h = s.h;
    share.w = s.w;

    auto [f_sb, f_cb] =
        fusion_branches(q, k, v, s.h, s.w, wts, cfg, &share.phi_q, &share.phi_k);
    share.q = std::move(q);
    share.k = std::move(k);

    Mat fused = matmul(concat_cols(f_sb, f_cb), wts.w_out);
    return {tokens_to_tensor(fused, s.c, s.h, s.w), std::move(share)};
}

Tensor dfl_forward_receiver(const Tensor& x, const DflWeights& wts,
                            const DflConfig& cfg, const AttentionShare& share,
                            bool full_sharing) {
    check_dfl_input(x, cfg);
    const Shape& s = x.shape();
    if (share.c != s.c || share.h != s.h || share.w != s.w)
        throw ContractError("dfl receiver: share recorded for (" +
                            std::to_string(share.c) + ", " + std::to_string(share.h) +
                            ", " + std::to_string(share.w) + ") but input is (" +
                            std::to_string(s.c) + ", " + std::to_string(s.h) + ", " +
                            std::to_string(s.w) + ")");
    if (share.q.rows() != s.h * s.w || share.q.cols() != s.c / 2)
        throw ContractError("dfl receiver: shared Q/K projection shape mismatch");
    if (full_sharing &&
        (share.phi_q.size() != std::size_t(cfg.heads) ||
         share.phi_k.size() != std::size_t(cfg.heads)))
        throw ContractError("dfl receiver: share carries no phi outputs for full sharing");

    Mat tokens = tensor_to_tokens(x);
    Mat v = matmul(tokens, wts.w_v);

    auto [f_sb, f_cb] = fusion_branches(
        share.q, share.k, v, s.h, s.w, wts, cfg, nullptr, nullptr,
        full_sharing ? &share.phi_q : nullptr, full_sharing ? &share.phi_k : nullptr);

    Mat fused = matmul(concat_cols(f_sb, f_cb), wts.w_out);
    return tokens_to_tensor(fused, s.c, s.h, s.w);
}

std::int64_t dfl_mac_count(int c, int h, int w, int d) {
    if (c < 1 || h < 1 || w < 1 || d < 1)
        throw ConfigError("dfl_mac_count: dimensions must be positive");
    if (c % d != 0)
        throw ConfigError("dfl_mac_count: width " + std::to_string(c) +
                          " not divisible by heads " + std::to_string(d));
    const std::int64_t hw = std::int64_t(h) * w;
    const std::int64_t c2 = std::int64_t(c) * c;
    return 2 * c2 * hw + 6 * hw * c2 / d + 9 * hw * c;
}

} // namespace ucan
