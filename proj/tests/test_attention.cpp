#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ucan/analysis.hpp"
#include "ucan/attention.hpp"
#include "ucan/ops.hpp"

#include "test_support.hpp"

using namespace ucan;
using test::max_abs_diff;
using test::max_rel_diff;
using test::random_mat;

// literal two-loop softmax attention, the reference for every engine
static Mat softmax_attention_oracle(const Mat& q, const Mat& k, const Mat& v,
                                    float scale) {
    const int n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
    Mat out(n, dv);
    for (int i = 0; i < n; ++i) {
        std::vector<double> logits(m);
        double mx = -1e300;
        for (int j = 0; j < m; ++j) {
            double dot = 0.0;
            for (int p = 0; p < d; ++p) dot += double(q.at(i, p)) * k.at(j, p);
            logits[j] = dot * scale;
            mx = std::max(mx, logits[j]);
        }
        double den = 0.0;
        for (int j = 0; j < m; ++j) den += std::exp(logits[j] - mx);
        for (int c = 0; c < dv; ++c) {
            double acc = 0.0;
            for (int j = 0; j < m; ++j)
                acc += std::exp(logits[j] - mx) / den * double(v.at(j, c));
            out.at(i, c) = float(acc);
        }
    }
    return out;
}

static std::vector<FeatureMap> all_maps(int d, std::uint64_t seed) {
    return {FeatureMap::relu(), FeatureMap::elu_plus_one(), FeatureMap::sym_relu(),
            FeatureMap::hedgehog_map(HedgehogParams::seeded(d, 1, seed))};
}

TEST_CASE("softmax attention basics") {
    SUBCASE("single key returns V") {
        Mat q = random_mat(1, 4, 1), k = random_mat(1, 4, 2), v = random_mat(1, 4, 3);
        Mat out = softmax_attention(q, k, v, 0.5f);
        CHECK(max_abs_diff(out, v) < 1e-7);
    }
    SUBCASE("identical keys give the column mean of V") {
        Mat q = random_mat(5, 4, 4);
        Mat k(6, 4);
        Mat k_row = random_mat(1, 4, 5);
        for (int j = 0; j < 6; ++j)
            for (int p = 0; p < 4; ++p) k.at(j, p) = k_row.at(0, p);
        Mat v = random_mat(6, 4, 6);
        Mat out = softmax_attention(q, k, v, 0.5f);
        for (int i = 0; i < 5; ++i)
            for (int c = 0; c < 4; ++c) {
                double mean = 0.0;
                for (int j = 0; j < 6; ++j) mean += v.at(j, c);
                mean /= 6;
                CHECK(out.at(i, c) == doctest::Approx(mean).epsilon(1e-5));
            }
    }
    SUBCASE("matches the two-loop oracle") {
        Mat q = random_mat(8, 4, 7), k = random_mat(8, 4, 8), v = random_mat(8, 4, 9);
        Mat out = softmax_attention(q, k, v, 0.5f);
        Mat want = softmax_attention_oracle(q, k, v, 0.5f);
        CHECK(max_abs_diff(out, want) < 1e-6);
    }
}

TEST_CASE("softmax attention permutation properties") {
    const int n = 12, d = 6;
    Mat q = random_mat(n, d, 10), k = random_mat(n, d, 11), v = random_mat(n, d, 12);
    Mat base = softmax_attention(q, k, v, 0.4f);

    // a fixed permutation
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = (i * 5 + 3) % n;

    SUBCASE("permuting queries permutes outputs") {
        Mat qp(n, d);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < d; ++p) qp.at(i, p) = q.at(perm[i], p);
        Mat out = softmax_attention(qp, k, v, 0.4f);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < d; ++p)
                CHECK(out.at(i, p) == doctest::Approx(base.at(perm[i], p)).epsilon(1e-6));
    }
    SUBCASE("jointly permuting keys and values changes nothing") {
        Mat kp(n, d), vp(n, d);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < d; ++p) {
                kp.at(i, p) = k.at(perm[i], p);
                vp.at(i, p) = v.at(perm[i], p);
            }
        Mat out = softmax_attention(q, kp, vp, 0.4f);
        CHECK(max_abs_diff(out, base) < 1e-5);
    }
}

TEST_CASE("scaling logits preserves each query's argmax") {
    const int n = 16, d = 8;
    Mat q = random_mat(n, d, 13), k = random_mat(n, d, 14);
    Mat logits = matmul(q, transpose(k));
    for (float c : {1.0f, 3.0f, 0.25f}) {
        Mat scaled = logits;
        for (auto& x : scaled.vec()) x *= c;
        Mat probs = softmax_lastdim(scaled);
        Mat ref = softmax_lastdim(logits);
        for (int i = 0; i < n; ++i) {
            int arg_ref = 0, arg_scaled = 0;
            for (int j = 1; j < n; ++j) {
                if (ref.at(i, j) > ref.at(i, arg_ref)) arg_ref = j;
                if (probs.at(i, j) > probs.at(i, arg_scaled)) arg_scaled = j;
            }
            CHECK(arg_ref == arg_scaled);
        }
    }
}

TEST_CASE("quadratic linear attention") {
    SUBCASE("single token normalises to V") {
        // positive q/k so every kernel value is nonzero (the all-zero ReLU
        // row is the guard's business, tested separately)
        for (const auto& fm : all_maps(4, 21)) {
            Mat q = random_mat(1, 4, 22), k = random_mat(1, 4, 23), v = random_mat(1, 4, 24);
            for (auto& x : q.vec()) x = std::abs(x) + 0.1f;
            for (auto& x : k.vec()) x = std::abs(x) + 0.1f;
            Mat out = linear_attention_quadratic(q, k, v, fm);
            CHECK(max_abs_diff(out, v) < 1e-5);
            Mat out_linear = linear_attention_linear(q, k, v, fm);
            CHECK(max_abs_diff(out_linear, v) < 1e-5);
        }
    }
    SUBCASE("identity map with positive entries matches the direct oracle") {
        const int n = 10, d = 5;
        Mat q(n, d), k(n, d), v = random_mat(n, d, 25);
        Rng rng(26);
        for (auto& x : q.vec()) x = float(rng.next_uniform()) + 0.1f;
        for (auto& x : k.vec()) x = float(rng.next_uniform()) + 0.1f;
        Mat out = linear_attention_quadratic(q, k, v, FeatureMap::identity());
        for (int i = 0; i < n; ++i) {
            std::vector<double> w(n);
            double den = 0.0;
            for (int j = 0; j < n; ++j) {
                double dot = 0.0;
                for (int p = 0; p < d; ++p) dot += double(q.at(i, p)) * k.at(j, p);
                w[j] = dot;
                den += dot;
            }
            for (int c = 0; c < d; ++c) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += w[j] / den * double(v.at(j, c));
                CHECK(out.at(i, c) == doctest::Approx(acc).epsilon(1e-5));
            }
        }
    }
    SUBCASE("hedgehog attention weights are a proper distribution") {
        const int n = 32, d = 8;
        auto fm = FeatureMap::hedgehog_map(HedgehogParams::seeded(d, 1, 27));
        Mat q = random_mat(n, d, 28), k = random_mat(n, d, 29);
        Mat fq = apply_feature_map(fm, q), fk = apply_feature_map(fm, k);
        Mat kernel = matmul(fq, transpose(fk));
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) sum += kernel.at(i, j);
            for (int j = 0; j < n; ++j) {
                const double w = kernel.at(i, j) / sum;
                CHECK(w > 0.0);
                CHECK(w < 1.0);
            }
        }
    }
}

TEST_CASE("linear path equals the quadratic oracle across N and maps") {
    const int d = 48;
    for (int n : {1, 2, 8, 64, 256}) {
        for (const auto& fm : all_maps(d, 31)) {
            Mat q = random_mat(n, d, 1000 + n);
            Mat k = random_mat(n, d, 2000 + n);
            Mat v = random_mat(n, d, 3000 + n);
            Mat fast = linear_attention_linear(q, k, v, fm);
            Mat slow = linear_attention_quadratic(q, k, v, fm);
            CHECK(max_rel_diff(fast, slow) < 1e-5);
        }
    }
}

TEST_CASE("linear path is cheaper and never materialises N x N") {
    const int n = 256, d = 48;
    auto fm = FeatureMap::hedgehog_map(HedgehogParams::seeded(d, 1, 33));
    const int r = feature_output_dim(fm, d);
    REQUIRE(n > 2 * r);
    Mat q = random_mat(n, d, 34), k = random_mat(n, d, 35), v = random_mat(n, d, 36);

    auto linear_macs = analysis::count_macs([&]() { linear_attention_linear(q, k, v, fm); });
    auto quad_macs =
        analysis::count_macs([&]() { linear_attention_quadratic(q, k, v, fm); });
    CHECK(linear_macs.mac_total() < quad_macs.mac_total());

    CHECK(linear_macs.peak_alloc_elems < std::int64_t(n) * n);
    CHECK(quad_macs.peak_alloc_elems >= std::int64_t(n) * n);
}

TEST_CASE("relu can zero whole rows; the guard reports and recovers") {
    const int n = 8, d = 4;
    Mat q(n, d), k(n, d), v = random_mat(n, d, 37);
    for (auto& x : q.vec()) x = -1.0f; // ReLU(q) = 0 for every row
    for (auto& x : k.vec()) x = 1.0f;
    auto macs = analysis::count_macs([&]() {
        Mat out = linear_attention_linear(q, k, v, FeatureMap::relu());
        for (float val : out.vec()) CHECK(val == 0.0f);
    });
    CHECK(macs.denom_guard_hits == n);
}

TEST_CASE("tiled exact attention equals naive for every tiling") {
    const int n = 96, d = 16;
    Mat q = random_mat(n, d, 41), k = random_mat(n, d, 42), v = random_mat(n, d, 43);
    const float scale = 1.0f / std::sqrt(float(d));
    Mat naive = softmax_attention(q, k, v, scale);

    SUBCASE("degenerate full tiling is bit-compatible up to reduction order") {
        Mat tiled = tiled_exact_attention(q, k, v, scale, {n, n});
        CHECK(max_abs_diff(tiled, naive) < 1e-6);
    }
    SUBCASE("tile grid sweep") {
        for (int tr : {1, 5, 32, 96, 200})
            for (int tc : {1, 7, 64, 96, 200}) {
                Mat tiled = tiled_exact_attention(q, k, v, scale, {tr, tc});
                CHECK(max_rel_diff(tiled, naive) < 1e-5);
            }
    }
}

TEST_CASE("tiled attention allocation stays constant in N at fixed tiles") {
    const int d = 32;
    const TileConfig tiles{64, 64};
    std::int64_t alloc_256 = 0, alloc_1024 = 0, naive_256 = 0, naive_1024 = 0;
    for (int n : {256, 1024}) {
        Mat q = random_mat(n, d, 50 + n), k = random_mat(n, d, 60 + n),
            v = random_mat(n, d, 70 + n);
        const float scale = 1.0f / std::sqrt(float(d));
        auto tiled_macs =
            analysis::count_macs([&]() { tiled_exact_attention(q, k, v, scale, tiles); });
        auto naive_macs =
            analysis::count_macs([&]() { softmax_attention(q, k, v, scale); });
        if (n == 256) {
            alloc_256 = tiled_macs.peak_alloc_elems;
            naive_256 = naive_macs.peak_alloc_elems;
        } else {
            alloc_1024 = tiled_macs.peak_alloc_elems;
            naive_1024 = naive_macs.peak_alloc_elems;
        }
    }
    CHECK(alloc_256 == alloc_1024); // constant in N
    CHECK(alloc_1024 < std::int64_t(1024) * 1024 / 8);
    const double ratio = double(naive_1024) / double(naive_256);
    CHECK(ratio > 14.0); // Theta(N^2)
    CHECK(ratio < 18.0);
}

TEST_CASE("tiled attention at N = 1024 matches naive") {
    const int n = 1024, d = 32;
    Mat q = random_mat(n, d, 81), k = random_mat(n, d, 82), v = random_mat(n, d, 83);
    const float scale = 1.0f / std::sqrt(float(d));
    Mat naive = softmax_attention(q, k, v, scale);
    Mat tiled = tiled_exact_attention(q, k, v, scale, {64, 64});
    CHECK(max_rel_diff(tiled, naive) < 1e-5);
}

TEST_CASE("windowed multi-head self attention") {
    SUBCASE("full-image window equals unwindowed attention") {
        const int c = 8, h = 8, w = 8, heads = 2;
        Tensor x = test::random_tensor({1, c, h, w}, 91);
        WmsaWeights wt{random_mat(c, c, 92), random_mat(c, c, 93), random_mat(c, c, 94),
                       random_mat(c, c, 95)};
        AttentionConfig cfg{heads, c / heads, h, 0.0f};
        Tensor got = windowed_mhsa(x, cfg, wt);

        // unwindowed oracle over the flattened image
        Mat tokens = tensor_to_tokens(x);
        Mat qm = matmul(tokens, wt.w_q), km = matmul(tokens, wt.w_k),
            vm = matmul(tokens, wt.w_v);
        const int hd = c / heads;
        Mat merged(h * w, c);
        for (int head = 0; head < heads; ++head) {
            Mat qh(h * w, hd), kh(h * w, hd), vh(h * w, hd);
            for (int t = 0; t < h * w; ++t)
                for (int p = 0; p < hd; ++p) {
                    qh.at(t, p) = qm.at(t, head * hd + p);
                    kh.at(t, p) = km.at(t, head * hd + p);
                    vh.at(t, p) = vm.at(t, head * hd + p);
                }
            Mat oh = softmax_attention(qh, kh, vh, 1.0f / std::sqrt(float(hd)));
            for (int t = 0; t < h * w; ++t)
                for (int p = 0; p < hd; ++p) merged.at(t, head * hd + p) = oh.at(t, p);
        }
        Tensor want = tokens_to_tensor(matmul(merged, wt.w_o), c, h, w);
        CHECK(max_rel_diff(got, want) < 1e-5);
    }
    SUBCASE("zero logits broadcast the window token mean") {
        const int c = 4, h = 8, w = 8, ws = 4;
        Tensor x = test::random_tensor({1, c, h, w}, 96);
        WmsaWeights wt{Mat(c, c), Mat(c, c), Mat::identity(c), Mat::identity(c)};
        AttentionConfig cfg{1, c, ws, 0.0f};
        Tensor out = windowed_mhsa(x, cfg, wt);
        for (int wy = 0; wy < h / ws; ++wy)
            for (int wx = 0; wx < w / ws; ++wx)
                for (int ch = 0; ch < c; ++ch) {
                    double mean = 0.0;
                    for (int y = 0; y < ws; ++y)
                        for (int xx = 0; xx < ws; ++xx)
                            mean += x.at(0, ch, wy * ws + y, wx * ws + xx);
                    mean /= ws * ws;
                    for (int y = 0; y < ws; ++y)
                        for (int xx = 0; xx < ws; ++xx)
                            CHECK(out.at(0, ch, wy * ws + y, wx * ws + xx) ==
                                  doctest::Approx(mean).epsilon(1e-4));
                }
    }
    SUBCASE("recorded maps have the contracted shape") {
        Tensor x = test::random_tensor({1, 8, 32, 32}, 97);
        WmsaWeights wt{random_mat(8, 8, 98), random_mat(8, 8, 99), random_mat(8, 8, 100),
                       random_mat(8, 8, 101)};
        AttentionConfig cfg{2, 4, 16, 0.0f};
        WindowAttentionMaps maps;
        windowed_mhsa(x, cfg, wt, &maps);
        CHECK(maps.windows == 4);
        CHECK(maps.heads == 2);
        CHECK(maps.tokens == 256);
        CHECK(maps.maps.size() == 8);
        CHECK(maps.maps[0].rows() == 256);
        CHECK(maps.maps[0].cols() == 256);
    }
    SUBCASE("non-divisible inputs are padded and cropped") {
        Tensor x = test::random_tensor({1, 4, 10, 13}, 102);
        WmsaWeights wt{random_mat(4, 4, 103), random_mat(4, 4, 104), random_mat(4, 4, 105),
                       random_mat(4, 4, 106)};
        AttentionConfig cfg{2, 2, 8, 0.0f};
        Tensor out = windowed_mhsa(x, cfg, wt);
        CHECK(out.shape() == x.shape());
        CHECK(out.all_finite());
    }
    SUBCASE("channel/head mismatch raises a config error") {
        Tensor x = test::random_tensor({1, 6, 8, 8}, 107);
        WmsaWeights wt{Mat(6, 6), Mat(6, 6), Mat(6, 6), Mat(6, 6)};
        AttentionConfig cfg{4, 2, 8, 0.0f};
        CHECK_THROWS_AS(windowed_mhsa(x, cfg, wt), ConfigError);
    }
    SUBCASE("map reuse matches recomputation on the same input") {
        Tensor x = test::random_tensor({1, 8, 16, 16}, 108);
        WmsaWeights wt{random_mat(8, 8, 109), random_mat(8, 8, 110), random_mat(8, 8, 111),
                       random_mat(8, 8, 112)};
        AttentionConfig cfg{2, 4, 8, 0.0f};
        WindowAttentionMaps maps;
        Tensor shared = windowed_mhsa(x, cfg, wt, &maps);
        Tensor reused = windowed_mhsa_reuse(x, cfg, wt, maps);
        CHECK(max_rel_diff(reused, shared) < 1e-5);

        // mismatched shapes are a contract violation
        Tensor other = test::random_tensor({1, 8, 24, 24}, 113);
        CHECK_THROWS_AS(windowed_mhsa_reuse(other, cfg, wt, maps), ContractError);
    }
}
