#include "ucan/large_kernel.hpp"

#include <cmath>

#include "ucan/instrument.hpp"
#include "ucan/ops.hpp"

namespace ucan {

int fine_channels(int c) {
    if (c < 16)
        throw ConfigError("lkd: needs at least 16 channels, got " + std::to_string(c));
    const int fg = std::max(c / 4, 16);
    return std::min(fg, c);
}

namespace {

void check_kernels(const LkdConfig& cfg) {
    if (cfg.k_core < 1 || cfg.k_core % 2 == 0)
        throw ConfigError("lkd: k_core must be odd and positive, got " +
                          std::to_string(cfg.k_core));
    if (cfg.dilation < 1) throw ConfigError("lkd: dilation must be >= 1");
    if (cfg.k_extra && (*cfg.k_extra < 1 || *cfg.k_extra % 2 == 0))
        throw ConfigError("lkd: k_extra must be odd and positive, got " +
                          std::to_string(*cfg.k_extra));
    if (cfg.reduction < 1) throw ConfigError("lkd: reduction must be >= 1");
}

Tensor dw_kernel_row(int channels, int k, float v) {
    return Tensor::full({channels, 1, 1, k}, v);
}
Tensor dw_kernel_col(int channels, int k, float v) {
    return Tensor::full({channels, 1, k, 1}, v);
}

Tensor dw_identity_row(int channels, int k) {
    Tensor t({channels, 1, 1, k});
    for (int c = 0; c < channels; ++c) t.at(c, 0, 0, (k - 1) / 2) = 1.0f;
    return t;
}
Tensor dw_identity_col(int channels, int k) {
    Tensor t({channels, 1, k, 1});
    for (int c = 0; c < channels; ++c) t.at(c, 0, (k - 1) / 2, 0) = 1.0f;
    return t;
}

} // namespace

int predict_erf(const LkdConfig& cfg) {
    check_kernels(cfg);
    int erf = cfg.k_core + (cfg.k_core - 1) * cfg.dilation;
    if (cfg.k_extra) erf += (*cfg.k_extra - 1) * cfg.dilation;
    return erf;
}

HlkWeights HlkWeights::ones(const LkdConfig& cfg, int channels) {
    check_kernels(cfg);
    HlkWeights w;
    w.s1_row = dw_kernel_row(channels, cfg.k_core, 1.0f);
    w.s1_col = dw_kernel_col(channels, cfg.k_core, 1.0f);
    w.s2_row = dw_kernel_row(channels, cfg.k_core, 1.0f);
    w.s2_col = dw_kernel_col(channels, cfg.k_core, 1.0f);
    if (cfg.k_extra) {
        w.s3_row = dw_kernel_row(channels, *cfg.k_extra, 1.0f);
        w.s3_col = dw_kernel_col(channels, *cfg.k_extra, 1.0f);
    }
    return w;
}

HlkWeights HlkWeights::identity(const LkdConfig& cfg, int channels) {
    check_kernels(cfg);
    HlkWeights w;
    w.s1_row = dw_identity_row(channels, cfg.k_core);
    w.s1_col = dw_identity_col(channels, cfg.k_core);
    w.s2_row = dw_identity_row(channels, cfg.k_core);
    w.s2_col = dw_identity_col(channels, cfg.k_core);
    if (cfg.k_extra) {
        w.s3_row = dw_identity_row(channels, *cfg.k_extra);
        w.s3_col = dw_identity_col(channels, *cfg.k_extra);
    }
    return w;
}

HlkWeights HlkWeights::seeded(const LkdConfig& cfg, int channels, std::uint64_t seed) {
    check_kernels(cfg);
    Rng rng(seed);
    auto fill = [&rng](Tensor& t) {
        const float std = 1.0f / std::sqrt(float(t.shape().h * t.shape().w));
        rng.fill_gaussian(t.data(), t.numel(), std);
    };
    HlkWeights w = HlkWeights::ones(cfg, channels);
    fill(w.s1_row);
    fill(w.s1_col);
    fill(w.s2_row);
    fill(w.s2_col);
    if (w.s3_row) {
        fill(*w.s3_row);
        fill(*w.s3_col);
    }
    return w;
}

Tensor hlk_branch(const Tensor& x, const LkdConfig& cfg, const HlkWeights& w) {
    check_kernels(cfg);
    const int c = x.shape().c;
    if (w.s1_row.shape().n != c)
        throw DimensionError("hlk: weights built for " + std::to_string(w.s1_row.shape().n) +
                             " channels, input has " + std::to_string(c));
    const int d = cfg.dilation;
    ConvOptions dw_plain{1, {1, 1}, c};
    ConvOptions dw_row_dil{1, {1, d}, c};
    ConvOptions dw_col_dil{1, {d, 1}, c};

    // dense core, then one (or two) dilated separable stages
    Tensor y = conv2d(x, w.s1_row, std::nullopt, dw_plain);
    y = conv2d(y, w.s1_col, std::nullopt, dw_plain);
    y = conv2d(y, w.s2_row, std::nullopt, dw_row_dil);
    y = conv2d(y, w.s2_col, std::nullopt, dw_col_dil);
    if (cfg.k_extra) {
        if (!w.s3_row || !w.s3_col)
            throw ConfigError("hlk: large configuration selected but stage-3 weights missing");
        y = conv2d(y, *w.s3_row, std::nullopt, dw_row_dil);
        y = conv2d(y, *w.s3_col, std::nullopt, dw_col_dil);
    }
    return y;
}

LocalWeights LocalWeights::seeded(int channels, int reduction, std::uint64_t seed) {
    if (reduction < 1 || channels % reduction != 0)
        throw ConfigError("local branch: reduction " + std::to_string(reduction) +
                          " does not divide channels " + std::to_string(channels));
    const int mid = channels / reduction;
    Rng rng(seed);
    LocalWeights w;
    auto fill = [&rng](Tensor& t) {
        const float std =
            1.0f / std::sqrt(float(t.shape().c * t.shape().h * t.shape().w));
        rng.fill_gaussian(t.data(), t.numel(), std);
    };
    w.w1 = Tensor({mid, channels, 1, 1});
    w.w2 = Tensor({mid, mid, 3, 3});
    w.w3 = Tensor({channels, mid, 1, 1});
    fill(w.w1);
    fill(w.w2);
    fill(w.w3);
    w.b1.assign(mid, 0.0f);
    w.b2.assign(mid, 0.0f);
    w.b3.assign(channels, 0.0f);
    return w;
}

Tensor local_branch(const Tensor& x, int reduction, const LocalWeights& w) {
    const int c = x.shape().c;
    if (reduction < 1 || c % reduction != 0)
        throw ConfigError("local branch: reduction " + std::to_string(reduction) +
                          " does not divide channels " + std::to_string(c));
    Tensor y = gelu(conv2d(x, w.w1, w.b1));
    y = gelu(conv2d(y, w.w2, w.b2));
    return conv2d(y, w.w3, w.b3);
}

TfeWeights TfeWeights::seeded(const LkdConfig& cfg, int c_fg, std::uint64_t seed) {
    TfeWeights w;
    Rng rng(seed);
    w.hlk = HlkWeights::seeded(cfg, c_fg, rng.next_u64());
    w.local = LocalWeights::seeded(c_fg, cfg.reduction, rng.next_u64());
    // gate initialised at identity: the block is multiplicative in its own
    // input, so a unit-scale random gate squares activations layer by layer
    // and overflows float within one block stack
    w.channel_w = Mat(c_fg, c_fg);
    rng.fill_gaussian(w.channel_w.data(), w.channel_w.numel(),
                      0.02f / std::sqrt(float(c_fg)));
    w.channel_b.assign(c_fg, 1.0f);
    return w;
}

Tensor tfe_forward(const Tensor& fine, const LkdConfig& cfg, const TfeWeights& w) {
    const Shape& s = fine.shape();

    // channel branch: pooled features through a linear projection,
    // broadcast back over space
    Mat pooled = global_avg_pool(fine);                 // n x C_fg
    Mat xc = linear(pooled, w.channel_w, &w.channel_b); // n x C_fg

    Tensor spatial = add(local_branch(fine, cfg.reduction, w.local),
                         hlk_branch(fine, cfg, w.hlk));

    Tensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float g = xc.at(n, c);
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2)
                    out.at(n, c, y, x2) = g * spatial.at(n, c, y, x2);
        }
    instrument::add_elementwise(s.numel());
    return out;
}

Tensor lkd_forward(const Tensor& x, const LkdConfig& cfg, const TfeWeights& w) {
    const int c = x.shape().c;
    const int c_fg = fine_channels(c);
    if (w.channel_w.rows() != c_fg)
        throw DimensionError("lkd: TFE weights sized for " +
                             std::to_string(w.channel_w.rows()) + " channels, need " +
                             std::to_string(c_fg));
    if (c_fg == c) {
        // degenerate split: no coarse subset, the TFE output is the result
        return tfe_forward(x, cfg, w);
    }
    auto [fine, coarse] = channel_split(x, c_fg);
    Tensor refined = tfe_forward(fine, cfg, w);
    return channel_concat(refined, coarse);
}

} // namespace ucan
