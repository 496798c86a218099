#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "ucan/analysis.hpp"
#include "ucan/network.hpp"
#include "ucan/serialization.hpp"

#include "test_support.hpp"

using namespace ucan;
using test::bitwise_equal;
using test::max_abs_diff;
using test::max_rel_diff;
using test::random_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.channels = 16;
    cfg.groups = 1;
    cfg.ha_depth = 1;
    cfg.heads = 2;
    cfg.wmsa_window = 8;
    cfg.hpa_window = 8;
    cfg.lkd_depth = 1;
    cfg.lkd = LkdConfig{3, 1, std::nullopt, 4};
    cfg.scale = 2;
    cfg.seed = 5;
    cfg.validate();
    return cfg;
}

Tensor image_01(Shape s, std::uint64_t seed) {
    Tensor img(s);
    Rng rng(seed);
    for (auto& v : img.vec()) v = float(rng.next_uniform());
    return img;
}

void zero_block(BlockWeights& b) {
    for (auto& t : {&b.hpa.mlp.expand.w, &b.hpa.mlp.depthwise.w, &b.hpa.mlp.project.w,
                    &b.lm.dw.w, &b.lm.pw.w, &b.esa.reduce.w, &b.esa.stride3.w,
                    &b.esa.group3.w, &b.esa.restore.w})
        for (auto& x : t->vec()) x = 0.0f;
    for (auto& l : {&b.hpa.ln1, &b.hpa.ln2}) {
        std::fill(l->gamma.begin(), l->gamma.end(), 0.0f);
        std::fill(l->beta.begin(), l->beta.end(), 0.0f);
    }
    for (auto& m : {&b.hpa.attn.w_q, &b.hpa.attn.w_k, &b.hpa.attn.w_v, &b.hpa.attn.w_o})
        for (auto& x : m->vec()) x = 0.0f;
    for (auto& sha : b.ha) {
        std::fill(sha.ln_wmsa.gamma.begin(), sha.ln_wmsa.gamma.end(), 0.0f);
        std::fill(sha.ln_dfl.gamma.begin(), sha.ln_dfl.gamma.end(), 0.0f);
        for (auto& m : {&sha.wmsa.w_q, &sha.wmsa.w_k, &sha.wmsa.w_v, &sha.wmsa.w_o,
                        &sha.dfl.w_q, &sha.dfl.w_k, &sha.dfl.w_v, &sha.dfl.w_out})
            for (auto& x : m->vec()) x = 0.0f;
        for (auto& x : sha.dfl.w_d.vec()) x = 0.0f;
    }
    for (auto& tfe : b.lkd) {
        for (auto& x : tfe.channel_w.vec()) x = 0.0f;
        std::fill(tfe.channel_b.begin(), tfe.channel_b.end(), 0.0f);
    }
}

} // namespace

TEST_CASE("hpa forward") {
    ModelConfig cfg = tiny_config();
    Rng master(1);
    UcanWeights w = ucan_weights_seeded(cfg);
    const HpaWeights& hpa = w.groups[0].sb.hpa;

    SUBCASE("shape preservation") {
        Tensor x = random_tensor({1, 16, 16, 16}, 2);
        CHECK(hpa_forward(x, hpa, cfg).shape() == x.shape());
    }
    SUBCASE("identity bypass reproduces the ablation wiring") {
        ModelConfig no_hpa = cfg;
        no_hpa.use_hpa = false;
        Tensor x = random_tensor({1, 16, 16, 16}, 3);
        CHECK(bitwise_equal(hpa_forward(x, hpa, no_hpa), x));
    }
    SUBCASE("window covering the image equals the unwindowed tiled path") {
        ModelConfig full = cfg;
        full.hpa_window = 16; // one window over a 16x16 input
        Tensor x = random_tensor({1, 16, 16, 16}, 4);
        Tensor got = hpa_forward(x, hpa, full);

        // oracle: same ConvMLP stage, then plain tiled attention on the
        // flattened image
        Tensor f_mlp = add(x, [&] {
            Tensor t = hpa.mlp.expand(layer_norm(x, hpa.ln1.gamma, hpa.ln1.beta));
            t = gelu(hpa.mlp.depthwise(t));
            return hpa.mlp.project(t);
        }());
        Tensor normed = layer_norm(f_mlp, hpa.ln2.gamma, hpa.ln2.beta);
        Mat tokens = tensor_to_tokens(normed);
        Mat qm = matmul(tokens, hpa.attn.w_q), km = matmul(tokens, hpa.attn.w_k),
            vm = matmul(tokens, hpa.attn.w_v);
        const int hd = 8;
        Mat merged(256, 16);
        for (int head = 0; head < 2; ++head) {
            Mat qh(256, hd), kh(256, hd), vh(256, hd);
            for (int t = 0; t < 256; ++t)
                for (int p = 0; p < hd; ++p) {
                    qh.at(t, p) = qm.at(t, head * hd + p);
                    kh.at(t, p) = km.at(t, head * hd + p);
                    vh.at(t, p) = vm.at(t, head * hd + p);
                }
            Mat oh = tiled_exact_attention(qh, kh, vh, 1.0f / std::sqrt(float(hd)),
                                           TileConfig{64, 64});
            for (int t = 0; t < 256; ++t)
                for (int p = 0; p < hd; ++p) merged.at(t, head * hd + p) = oh.at(t, p);
        }
        Tensor attended = tokens_to_tensor(matmul(merged, hpa.attn.w_o), 16, 16, 16);
        Tensor want = add(f_mlp, attended);
        CHECK(max_rel_diff(got, want) < 1e-5);
    }
}

TEST_CASE("conv mlp stage uses gelu between depthwise and projection") {
    // zero depthwise makes the MLP output the projected gelu(0) = 0 map,
    // so the first residual stage becomes the identity
    ModelConfig cfg = tiny_config();
    UcanWeights w = ucan_weights_seeded(cfg);
    HpaWeights hpa = w.groups[0].sb.hpa;
    for (auto& x : hpa.mlp.depthwise.w.vec()) x = 0.0f;
    for (auto& x : hpa.attn.w_v.vec()) x = 0.0f;
    for (auto& x : hpa.attn.w_o.vec()) x = 0.0f;
    Tensor in = random_tensor({1, 16, 8, 8}, 5);
    CHECK(max_abs_diff(hpa_forward(in, hpa, cfg), in) < 1e-6);
}

TEST_CASE("esa gate") {
    ModelConfig cfg = tiny_config();
    UcanWeights w = ucan_weights_seeded(cfg);
    EsaWeights esa = w.groups[0].sb.esa;
    Tensor x = random_tensor({1, 16, 16, 16}, 6);

    SUBCASE("shape preservation") {
        CHECK(esa_forward(x, esa).shape() == x.shape());
    }
    SUBCASE("zeroed weights gate everything to one half") {
        EsaWeights zeroed = esa;
        for (auto& v : zeroed.reduce.w.vec()) v = 0.0f;
        for (auto& v : zeroed.stride3.w.vec()) v = 0.0f;
        for (auto& v : zeroed.group3.w.vec()) v = 0.0f;
        for (auto& v : zeroed.restore.w.vec()) v = 0.0f;
        Tensor y = esa_forward(x, zeroed);
        CHECK(max_rel_diff(y, scale(x, 0.5f)) < 1e-6);
    }
    SUBCASE("saturated gate passes the input through") {
        EsaWeights sat = esa;
        std::fill(sat.restore.b.begin(), sat.restore.b.end(), 50.0f);
        for (auto& v : sat.restore.w.vec()) v = 0.0f;
        Tensor y = esa_forward(x, sat);
        CHECK(max_rel_diff(y, x) < 1e-6);
    }
}

TEST_CASE("sharing and receiving blocks") {
    ModelConfig cfg = tiny_config();
    cfg.ha_depth = 2;
    cfg.validate();
    UcanWeights w = ucan_weights_seeded(cfg);
    Tensor x = random_tensor({1, 16, 16, 16}, 7, 0.5f);

    auto [sb_out, shares] = sharing_block(x, w.groups[0].sb, cfg);

    SUBCASE("share list length equals the attention depth") {
        CHECK(shares.size() == 2);
        CHECK(sb_out.shape() == x.shape());
        CHECK(shares[0].a_map.windows == 4);
        CHECK(shares[0].q.rows() == 256);
    }
    SUBCASE("receiving block consumes shares and is cheaper") {
        Tensor rb_out = receiving_block(sb_out, w.groups[0].rb, cfg, shares);
        CHECK(rb_out.shape() == x.shape());
        auto sb_macs = analysis::count_macs(
            [&]() { sharing_block(x, w.groups[0].sb, cfg); });
        auto rb_macs = analysis::count_macs(
            [&]() { receiving_block(sb_out, w.groups[0].rb, cfg, shares); });
        CHECK(rb_macs.mac_total() < sb_macs.mac_total());
    }
    SUBCASE("wrong share count is a contract error") {
        std::vector<AttentionShare> missing(shares.begin(), shares.begin() + 1);
        CHECK_THROWS_AS(receiving_block(sb_out, w.groups[0].rb, cfg, missing),
                        ContractError);
    }
    SUBCASE("deep-zero weights leave only the residual into the gate") {
        BlockWeights zeroed = w.groups[0].sb;
        zero_block(zeroed);
        auto [out, sh] = sharing_block(x, zeroed, cfg);
        // the block collapses to esa(x) with an all-zero gate path: x / 2
        CHECK(max_rel_diff(out, scale(x, 0.5f)) < 1e-5);
        // with live weights the deep path moves the output away from esa(x)
        Tensor esa_only = esa_forward(x, w.groups[0].sb.esa);
        CHECK(max_abs_diff(sb_out, esa_only) > 1e-3);
    }
}

TEST_CASE("ucan forward end to end") {
    ModelConfig cfg = tiny_config();
    UcanWeights w = ucan_weights_seeded(cfg);

    SUBCASE("shape law across scales and awkward sizes") {
        for (int s : {2, 3, 4}) {
            ModelConfig c2 = cfg;
            c2.scale = s;
            UcanWeights w2 = ucan_weights_seeded(c2);
            for (auto [h, wd] : {std::pair{16, 16}, std::pair{20, 12}, std::pair{9, 21}}) {
                Tensor img = image_01({1, 3, h, wd}, 10 + s);
                Tensor out = ucan_forward(img, w2, c2);
                CHECK(out.shape() == Shape{1, 3, h * s, wd * s});
                CHECK(out.all_finite());
            }
        }
    }
    SUBCASE("bitwise deterministic") {
        Tensor img = image_01({1, 3, 16, 16}, 11);
        Tensor a = ucan_forward(img, w, cfg);
        Tensor b = ucan_forward(img, w, cfg);
        CHECK(bitwise_equal(a, b));
    }
    SUBCASE("global residual: zero deep weights reduce to shallow recon") {
        UcanWeights wz = ucan_weights_seeded(cfg);
        for (auto& g : wz.groups) {
            zero_block(g.sb);
            zero_block(g.rb);
        }
        for (auto& v : wz.fuse.w.vec()) v = 0.0f;
        std::fill(wz.fuse.b.begin(), wz.fuse.b.end(), 0.0f);
        Tensor img = image_01({1, 3, 16, 16}, 12);
        Tensor got = ucan_forward(img, wz, cfg);
        Tensor want = pixel_shuffle(wz.recon(wz.shallow(img)), cfg.scale);
        CHECK(bitwise_equal(got, want));
    }
    SUBCASE("full sharing changes the output") {
        ModelConfig full = cfg;
        full.full_sharing = true;
        Tensor img = image_01({1, 3, 16, 16}, 13);
        Tensor semi = ucan_forward(img, w, cfg);
        Tensor fullshare = ucan_forward(img, w, full);
        CHECK(max_abs_diff(semi, fullshare) > 1e-7);
    }
    SUBCASE("MAC count grows with the configuration") {
        ModelConfig big = cfg;
        big.channels = 32;
        big.heads = 4;
        big.validate();
        UcanWeights wb = ucan_weights_seeded(big);
        Tensor img = image_01({1, 3, 16, 16}, 14);
        auto base = analysis::count_macs([&]() { ucan_forward(img, w, cfg); });
        auto bigger = analysis::count_macs([&]() { ucan_forward(img, wb, big); });
        CHECK(bigger.mac_total() > base.mac_total());
    }
    SUBCASE("batch of two processes each item independently") {
        Tensor pair_img = image_01({2, 3, 16, 16}, 15);
        Tensor single({1, 3, 16, 16});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) single.at(0, c, y, x) = pair_img.at(1, c, y, x);
        Tensor both = ucan_forward(pair_img, w, cfg);
        Tensor one = ucan_forward(single, w, cfg);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    CHECK(both.at(1, c, y, x) == one.at(0, c, y, x));
    }
}

TEST_CASE("desk-config MACs scale linearly with the pixel count") {
    // resolutions kept window-divisible so no padding inflates the counts
    ModelConfig cfg; // desk defaults
    cfg.validate();
    UcanWeights w = ucan_weights_seeded(cfg);
    std::vector<double> macs, pixels;
    for (int side : {32, 64, 96}) {
        Tensor img = image_01({1, 3, side, side}, 40 + side);
        auto r = analysis::count_macs([&]() { ucan_forward(img, w, cfg); });
        macs.push_back(double(r.mac_total()));
        pixels.push_back(double(side) * side);
    }
    for (int i = 1; i < 3; ++i) {
        const double slope = std::log(macs[i] / macs[i - 1]) /
                             std::log(pixels[i] / pixels[i - 1]);
        CHECK(slope > 0.98);
        CHECK(slope < 1.02);
    }
}

TEST_CASE("weight save/load round trip preserves the forward bitwise") {
    ModelConfig cfg = tiny_config();
    UcanWeights w = ucan_weights_seeded(cfg);
    Tensor img = image_01({1, 3, 16, 16}, 16);
    Tensor before = ucan_forward(img, w, cfg);

    const std::string path =
        (std::filesystem::temp_directory_path() / "ucan_test_weights.bin").string();
    save_weights(path, w, cfg);
    auto [loaded, loaded_cfg] = load_weights(path);
    CHECK(loaded_cfg.channels == cfg.channels);
    CHECK(loaded_cfg.seed == cfg.seed);
    Tensor after = ucan_forward(img, loaded, loaded_cfg);
    CHECK(bitwise_equal(before, after));
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_weights("/nonexistent/definitely_missing.bin"), IoError);
}
