#ifndef UCAN_FEATURE_MAPS_HPP
#define UCAN_FEATURE_MAPS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "ucan/tensor.hpp"

namespace ucan {

// Hedgehog map parameters: a shared C x C projection and m bias vectors.
// phi_H(x) = [exp(W^T x + b_1), ..., exp(W^T x + b_m),
//             exp(-W^T x - b_1), ..., exp(-W^T x - b_m)]
// giving a strictly positive feature of dimension 2*m*C.
struct HedgehogParams {
    Mat w;                              // C x C
    std::vector<std::vector<float>> b;  // m vectors, each length C
    bool post_normalize = false;        // divide phi output by its sum (off by default)

    int pairs() const { return static_cast<int>(b.size()); }
    int input_dim() const { return w.rows(); }
    int output_dim() const { return 2 * pairs() * w.rows(); }

    // identity-anchored init: W = I + sigma*N(0,1), b_i evenly spaced in
    // [-0.5, 0.5] (a single pair sits at 0)
    static HedgehogParams seeded(int dim, int m, std::uint64_t seed, float noise = 0.02f);
};

enum class FeatureMapTag : std::uint8_t {
    Identity = 0,
    Relu = 1,
    EluPlusOne = 2,
    SymRelu = 3,
    Hedgehog = 4,
};

const char* feature_map_name(FeatureMapTag tag);

struct FeatureMap {
    FeatureMapTag tag = FeatureMapTag::Identity;
    HedgehogParams hedgehog; // used only when tag == Hedgehog

    static FeatureMap identity() { return {FeatureMapTag::Identity, {}}; }
    static FeatureMap relu() { return {FeatureMapTag::Relu, {}}; }
    static FeatureMap elu_plus_one() { return {FeatureMapTag::EluPlusOne, {}}; }
    static FeatureMap sym_relu() { return {FeatureMapTag::SymRelu, {}}; }
    static FeatureMap hedgehog_map(HedgehogParams p) {
        return {FeatureMapTag::Hedgehog, std::move(p)};
    }
};

// Output dimension of the map for input dimension d:
//   Identity -> d, Relu -> d, EluPlusOne -> d, SymRelu -> 2d, Hedgehog -> 2mC
int feature_output_dim(const FeatureMap& fm, int d);

// Row-wise application: X is N x d, result is N x feature_output_dim(d).
Mat apply_feature_map(const FeatureMap& fm, const Mat& x);

void apply_feature_map_row(const FeatureMap& fm, const float* x, int d, float* out);

// phi(q) . phi(k); equals the dot product of the mapped vectors exactly.
double kernel_value(const FeatureMap& fm, std::span<const float> q,
                    std::span<const float> k);

// The four additive parts of the ELU+1 kernel:
//   phi(q).phi(k) = <sigma(q), sigma(k)> + 1^T sigma(q) + 1^T sigma(k) + d
// with sigma = ELU. `similarity` carries the pairwise signal; the other
// three are global biases.
struct EluKernelParts {
    double similarity = 0.0;
    double q_bias = 0.0;
    double k_bias = 0.0;
    double dim = 0.0;

    double sum() const { return similarity + q_bias + k_bias + dim; }
};

EluKernelParts elu_kernel_decomposition(std::span<const float> q,
                                        std::span<const float> k);

// Analytic Jacobian d phi / d x, shape (output dim) x d. ReLU-family rows
// are undefined at kinks; callers keep |x_i| away from zero there.
Mat feature_map_jacobian(const FeatureMap& fm, std::span<const float> x);

// exponent clamp for Hedgehog, keeps untrained-weight stress tests finite
inline constexpr float kHedgehogExpClamp = 30.0f;

} // namespace ucan

#endif
