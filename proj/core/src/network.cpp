#include "ucan/network.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

namespace ucan {

void ModelConfig::validate() const {
    if (channels < 16) throw ConfigError("config: channels must be >= 16");
    if (channels % 2 != 0) throw ConfigError("config: channels must be even");
    if (heads < 1 || channels % heads != 0)
        throw ConfigError("config: heads must divide channels");
    if ((channels / 2) % heads != 0)
        throw ConfigError("config: heads must divide the half width C/2");
    if (groups < 1 || ha_depth < 1 || lkd_depth < 0)
        throw ConfigError("config: groups/ha_depth/lkd_depth out of range");
    if (wmsa_window < 1 || hpa_window < 1)
        throw ConfigError("config: window sizes must be >= 1");
    if (scale < 2 || scale > 4) throw ConfigError("config: scale must be 2, 3 or 4");
    if (channels % 4 != 0) throw ConfigError("config: channels must be divisible by 4");
    predict_erf(lkd); // validates the kernel configuration
    if (fine_channels(channels) % lkd.reduction != 0)
        throw ConfigError("config: lkd reduction must divide the fine channel count");
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

} // namespace

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    auto kv = parse_kv(text);
    auto geti = [&kv](const char* key, int dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError(std::string("config: bad integer for ") + key + ": '" +
                              it->second + "'");
        }
    };
    cfg.channels = geti("channels", cfg.channels);
    cfg.groups = geti("groups", cfg.groups);
    cfg.ha_depth = geti("ha_depth", cfg.ha_depth);
    cfg.heads = geti("heads", cfg.heads);
    cfg.wmsa_window = geti("wmsa_window", cfg.wmsa_window);
    cfg.hpa_window = geti("hpa_window", cfg.hpa_window);
    cfg.lkd_depth = geti("lkd_depth", cfg.lkd_depth);
    cfg.lkd.k_core = geti("lkd_k_core", cfg.lkd.k_core);
    cfg.lkd.dilation = geti("lkd_dilation", cfg.lkd.dilation);
    const int kx = geti("lkd_k_extra", cfg.lkd.k_extra.value_or(0));
    cfg.lkd.k_extra = kx > 0 ? std::optional<int>(kx) : std::nullopt;
    cfg.lkd.reduction = geti("lkd_reduction", cfg.lkd.reduction);
    cfg.scale = geti("scale", cfg.scale);
    if (auto it = kv.find("seed"); it != kv.end()) cfg.seed = std::stoull(it->second);
    cfg.use_hpa = geti("use_hpa", cfg.use_hpa ? 1 : 0) != 0;
    cfg.full_sharing = geti("full_sharing", cfg.full_sharing ? 1 : 0) != 0;
    cfg.validate();
    return cfg;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "channels=" << channels << "\n"
       << "groups=" << groups << "\n"
       << "ha_depth=" << ha_depth << "\n"
       << "heads=" << heads << "\n"
       << "wmsa_window=" << wmsa_window << "\n"
       << "hpa_window=" << hpa_window << "\n"
       << "lkd_depth=" << lkd_depth << "\n"
       << "lkd_k_core=" << lkd.k_core << "\n"
       << "lkd_dilation=" << lkd.dilation << "\n"
       << "lkd_k_extra=" << lkd.k_extra.value_or(0) << "\n"
       << "lkd_reduction=" << lkd.reduction << "\n"
       << "scale=" << scale << "\n"
       << "seed=" << seed << "\n"
       << "use_hpa=" << (use_hpa ? 1 : 0) << "\n"
       << "full_sharing=" << (full_sharing ? 1 : 0) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Weight construction
// ---------------------------------------------------------------------------

namespace {

// Kaiming-style fan-in scaled init for conv weights
ConvLayer conv_seeded(Rng& rng, int c_out, int c_in, int k, int groups = 1,
                      int stride = 1, std::pair<int, int> dilation = {1, 1}) {
    ConvLayer layer;
    layer.w = Tensor({c_out, c_in / groups, k, k});
    const float std = std::sqrt(2.0f / float((c_in / groups) * k * k));
    rng.fill_gaussian(layer.w.data(), layer.w.numel(), std);
    layer.b.assign(c_out, 0.0f);
    layer.opt = ConvOptions{stride, dilation, groups};
    return layer;
}

Mat mat_seeded(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    rng.fill_gaussian(m.data(), m.numel(), std::sqrt(2.0f / float(rows)));
    return m;
}

LnParams ln_default(int c) {
    return {std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f)};
}

WmsaWeights wmsa_seeded(Rng& rng, int c) {
    return {mat_seeded(rng, c, c), mat_seeded(rng, c, c), mat_seeded(rng, c, c),
            mat_seeded(rng, c, c)};
}

HpaWeights hpa_seeded(Rng& rng, const ModelConfig& cfg) {
    const int c = cfg.channels;
    HpaWeights w;
    w.ln1 = ln_default(c);
    w.ln2 = ln_default(c);
    w.mlp.expand = conv_seeded(rng, 2 * c, c, 1);
    w.mlp.depthwise = conv_seeded(rng, 2 * c, 2 * c, 7, 2 * c);
    w.mlp.project = conv_seeded(rng, c, 2 * c, 1);
    w.attn = wmsa_seeded(rng, c);
    return w;
}

ShaWeights sha_seeded(Rng& rng, const ModelConfig& cfg) {
    const int c = cfg.channels;
    ShaWeights w;
    w.ln_wmsa = ln_default(c);
    w.ln_dfl = ln_default(c);
    w.wmsa = wmsa_seeded(rng, c);
    w.dfl = DflWeights::seeded(c, cfg.heads, rng.next_u64());
    return w;
}

EsaWeights esa_seeded(Rng& rng, int c) {
    const int cr = std::max(1, c / 4);
    EsaWeights w;
    w.reduce = conv_seeded(rng, cr, c, 1);
    w.stride3 = conv_seeded(rng, cr, cr, 3, 1, 2);
    w.group3 = conv_seeded(rng, cr, cr, 3);
    w.restore = conv_seeded(rng, c, cr, 1);
    return w;
}

BlockWeights block_seeded(Rng& rng, const ModelConfig& cfg) {
    BlockWeights w;
    w.hpa = hpa_seeded(rng, cfg);
    w.lm.dw = conv_seeded(rng, cfg.channels, cfg.channels, 3, cfg.channels);
    w.lm.pw = conv_seeded(rng, cfg.channels, cfg.channels, 1);
    for (int i = 0; i < cfg.ha_depth; ++i) w.ha.push_back(sha_seeded(rng, cfg));
    const int c_fg = fine_channels(cfg.channels);
    for (int i = 0; i < cfg.lkd_depth; ++i)
        w.lkd.push_back(TfeWeights::seeded(cfg.lkd, c_fg, rng.next_u64()));
    w.esa = esa_seeded(rng, cfg.channels);
    return w;
}

} // namespace

UcanWeights ucan_weights_seeded(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    UcanWeights w;
    w.shallow = conv_seeded(rng, cfg.channels, 3, 3);
    for (int g = 0; g < cfg.groups; ++g)
        w.groups.push_back({block_seeded(rng, cfg), block_seeded(rng, cfg)});
    w.fuse = conv_seeded(rng, cfg.channels, cfg.channels, 3);
    w.recon = conv_seeded(rng, 3 * cfg.scale * cfg.scale, cfg.channels, 3);
    return w;
}

// ---------------------------------------------------------------------------
// Visitor
// ---------------------------------------------------------------------------

namespace {

void visit_conv(const std::string& p, ConvLayer& l, const WeightVisitor& v) {
    v.on_tensor(p + ".w", l.w);
    v.on_vector(p + ".b", l.b);
}

void visit_ln(const std::string& p, LnParams& ln, const WeightVisitor& v) {
    v.on_vector(p + ".gamma", ln.gamma);
    v.on_vector(p + ".beta", ln.beta);
}

void visit_wmsa(const std::string& p, WmsaWeights& w, const WeightVisitor& v) {
    v.on_mat(p + ".wq", w.w_q);
    v.on_mat(p + ".wk", w.w_k);
    v.on_mat(p + ".wv", w.w_v);
    v.on_mat(p + ".wo", w.w_o);
}

void visit_block(const std::string& p, BlockWeights& b, const WeightVisitor& v) {
    visit_ln(p + ".hpa.ln1", b.hpa.ln1, v);
    visit_ln(p + ".hpa.ln2", b.hpa.ln2, v);
    visit_conv(p + ".hpa.mlp.expand", b.hpa.mlp.expand, v);
    visit_conv(p + ".hpa.mlp.dw", b.hpa.mlp.depthwise, v);
    visit_conv(p + ".hpa.mlp.project", b.hpa.mlp.project, v);
    visit_wmsa(p + ".hpa.attn", b.hpa.attn, v);
    visit_conv(p + ".lm.dw", b.lm.dw, v);
    visit_conv(p + ".lm.pw", b.lm.pw, v);
    for (std::size_t i = 0; i < b.ha.size(); ++i) {
        const std::string hp = p + ".ha" + std::to_string(i);
        visit_ln(hp + ".ln_wmsa", b.ha[i].ln_wmsa, v);
        visit_ln(hp + ".ln_dfl", b.ha[i].ln_dfl, v);
        visit_wmsa(hp + ".wmsa", b.ha[i].wmsa, v);
        v.on_mat(hp + ".dfl.wq", b.ha[i].dfl.w_q);
        v.on_mat(hp + ".dfl.wk", b.ha[i].dfl.w_k);
        v.on_mat(hp + ".dfl.wv", b.ha[i].dfl.w_v);
        v.on_tensor(hp + ".dfl.wd", b.ha[i].dfl.w_d);
        v.on_feature_map(hp + ".dfl.phi", b.ha[i].dfl.hedgehog);
        v.on_mat(hp + ".dfl.wout", b.ha[i].dfl.w_out);
    }
    for (std::size_t i = 0; i < b.lkd.size(); ++i) {
        const std::string lp = p + ".lkd" + std::to_string(i);
        v.on_tensor(lp + ".hlk.s1r", b.lkd[i].hlk.s1_row);
        v.on_tensor(lp + ".hlk.s1c", b.lkd[i].hlk.s1_col);
        v.on_tensor(lp + ".hlk.s2r", b.lkd[i].hlk.s2_row);
        v.on_tensor(lp + ".hlk.s2c", b.lkd[i].hlk.s2_col);
        if (b.lkd[i].hlk.s3_row) {
            v.on_tensor(lp + ".hlk.s3r", *b.lkd[i].hlk.s3_row);
            v.on_tensor(lp + ".hlk.s3c", *b.lkd[i].hlk.s3_col);
        }
        v.on_tensor(lp + ".local.w1", b.lkd[i].local.w1);
        v.on_vector(lp + ".local.b1", b.lkd[i].local.b1);
        v.on_tensor(lp + ".local.w2", b.lkd[i].local.w2);
        v.on_vector(lp + ".local.b2", b.lkd[i].local.b2);
        v.on_tensor(lp + ".local.w3", b.lkd[i].local.w3);
        v.on_vector(lp + ".local.b3", b.lkd[i].local.b3);
        v.on_mat(lp + ".chan.w", b.lkd[i].channel_w);
        v.on_vector(lp + ".chan.b", b.lkd[i].channel_b);
    }
    visit_conv(p + ".esa.reduce", b.esa.reduce, v);
    visit_conv(p + ".esa.stride3", b.esa.stride3, v);
    visit_conv(p + ".esa.group3", b.esa.group3, v);
    visit_conv(p + ".esa.restore", b.esa.restore, v);
}

} // namespace

void visit_weights(UcanWeights& w, const WeightVisitor& v) {
    visit_conv("shallow", w.shallow, v);
    for (std::size_t g = 0; g < w.groups.size(); ++g) {
        const std::string gp = "g" + std::to_string(g);
        visit_block(gp + ".sb", w.groups[g].sb, v);
        visit_block(gp + ".rb", w.groups[g].rb, v);
    }
    visit_conv("fuse", w.fuse, v);
    visit_conv("recon", w.recon, v);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

namespace {

Tensor conv_mlp(const Tensor& x, const ConvMlpWeights& w) {
    Tensor y = w.expand(x);
    y = w.depthwise(y);
    y = gelu(y);
    return w.project(y);
}

} // namespace

Tensor hpa_forward(const Tensor& x, const HpaWeights& w, const ModelConfig& cfg) {
    if (!cfg.use_hpa) return x;
    Tensor f_mlp = add(x, conv_mlp(layer_norm(x, w.ln1.gamma, w.ln1.beta), w.mlp));
    AttentionConfig attn_cfg = cfg.hpa_config();
    Tensor attended = windowed_mhsa(layer_norm(f_mlp, w.ln2.gamma, w.ln2.beta), attn_cfg,
                                    w.attn, nullptr, TileConfig{64, 64});
    return add(f_mlp, attended);
}

Tensor esa_forward(const Tensor& x, const EsaWeights& w) {
    const Shape& s = x.shape();
    Tensor t = w.reduce(x);
    t = w.stride3(t);
    t = max_pool(t, 7, 3);
    t = w.group3(t);
    t = resize_bilinear(t, s.h, s.w);
    Tensor gate = sigmoid(w.restore(t));
    return mul(x, gate);
}

namespace {

std::pair<Tensor, AttentionShare> sha_forward(const Tensor& x, const ShaWeights& w,
                                              const ModelConfig& cfg) {
    AttentionShare share;
    Tensor normed = layer_norm(x, w.ln_wmsa.gamma, w.ln_wmsa.beta);
    Tensor attended = windowed_mhsa(normed, cfg.wmsa_config(), w.wmsa, &share.a_map);
    Tensor x1 = add(x, attended);

    Tensor normed2 = layer_norm(x1, w.ln_dfl.gamma, w.ln_dfl.beta);
    auto [dfl_out, dfl_share] = dfl_forward_shared(normed2, w.dfl, cfg.dfl_config());
    dfl_share.a_map = std::move(share.a_map);
    return {add(x1, dfl_out), std::move(dfl_share)};
}

Tensor rha_forward(const Tensor& x, const ShaWeights& w, const ModelConfig& cfg,
                   const AttentionShare& share) {
    Tensor normed = layer_norm(x, w.ln_wmsa.gamma, w.ln_wmsa.beta);
    Tensor attended = windowed_mhsa_reuse(normed, cfg.wmsa_config(), w.wmsa, share.a_map);
    Tensor x1 = add(x, attended);

    Tensor normed2 = layer_norm(x1, w.ln_dfl.gamma, w.ln_dfl.beta);
    Tensor dfl_out = dfl_forward_receiver(normed2, w.dfl, cfg.dfl_config(), share,
                                          cfg.full_sharing);
    return add(x1, dfl_out);
}

} // namespace

std::pair<Tensor, std::vector<AttentionShare>> sharing_block(const Tensor& x,
                                                             const BlockWeights& w,
                                                             const ModelConfig& cfg) {
    Tensor f = hpa_forward(x, w.hpa, cfg);
    f = add(f, gelu(w.lm.pw(w.lm.dw(f)))); // local module
    std::vector<AttentionShare> shares;
    shares.reserve(w.ha.size());
    for (const ShaWeights& sha : w.ha) {
        auto [next, share] = sha_forward(f, sha, cfg);
        f = std::move(next);
        shares.push_back(std::move(share));
    }
    for (const TfeWeights& tfe : w.lkd) f = lkd_forward(f, cfg.lkd, tfe);
    f = add(f, x);
    return {esa_forward(f, w.esa), std::move(shares)};
}

Tensor receiving_block(const Tensor& x, const BlockWeights& w, const ModelConfig& cfg,
                       const std::vector<AttentionShare>& shares) {
    if (shares.size() != w.ha.size())
        throw ContractError("receiving block: got " + std::to_string(shares.size()) +
                            " shares for " + std::to_string(w.ha.size()) + " modules");
    Tensor f = hpa_forward(x, w.hpa, cfg);
    f = add(f, gelu(w.lm.pw(w.lm.dw(f))));
    for (std::size_t i = 0; i < w.ha.size(); ++i)
        f = rha_forward(f, w.ha[i], cfg, shares[i]);
    for (const TfeWeights& tfe : w.lkd) f = lkd_forward(f, cfg.lkd, tfe);
    f = add(f, x);
    return esa_forward(f, w.esa);
}

Tensor ucan_forward(const Tensor& img, const UcanWeights& w, const ModelConfig& cfg) {
    const Shape& s = img.shape();
    if (s.c != 3) throw DimensionError("ucan: expected a 3-channel image");

    Tensor out({s.n, 3, s.h * cfg.scale, s.w * cfg.scale});
    for (int item = 0; item < s.n; ++item) {
        Tensor x({1, 3, s.h, s.w});
        std::int64_t clamped = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2) {
                    float v = img.at(item, c, y, x2);
                    if (v < 0.0f || v > 1.0f) {
                        v = std::min(1.0f, std::max(0.0f, v));
                        ++clamped;
                    }
                    x.at(0, c, y, x2) = v;
                }
        if (clamped > 0)
            std::cerr << "ucan: clamped " << clamped
                      << " out-of-range input values to [0, 1]\n";

        Tensor f0 = w.shallow(x);
        Tensor f = f0;
        for (const GroupWeights& g : w.groups) {
            auto [sb_out, shares] = sharing_block(f, g.sb, cfg);
            f = receiving_block(sb_out, g.rb, cfg, shares);
        }
        Tensor fused = add(f0, w.fuse(f));
        Tensor up = pixel_shuffle(w.recon(fused), cfg.scale);

        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < up.shape().h; ++y)
                for (int x2 = 0; x2 < up.shape().w; ++x2)
                    out.at(item, c, y, x2) = up.at(0, c, y, x2);
    }
    if (!out.all_finite())
        throw NumericError("ucan: forward produced non-finite values");
    return out;
}

} // namespace ucan
