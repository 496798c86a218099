#include "ucan/feature_maps.hpp"

#include <cmath>

#include "ucan/instrument.hpp"

namespace ucan {

namespace {

inline float elu(float x) { return x > 0.0f ? x : std::expm1(x); }

inline float clamped_exp(double a) {
    if (a > kHedgehogExpClamp) a = kHedgehogExpClamp;
    if (a < -kHedgehogExpClamp) a = -kHedgehogExpClamp;
    return static_cast<float>(std::exp(a));
}

} // namespace

HedgehogParams HedgehogParams::seeded(int dim, int m, std::uint64_t seed, float noise) {
    if (dim < 1 || m < 1) throw ConfigError("hedgehog: dim and pair count must be >= 1");
    HedgehogParams p;
    p.w = Mat::identity(dim);
    Rng rng(seed);
    for (auto& v : p.w.vec()) v += noise * rng.next_gaussian();
    p.b.resize(m);
    for (int i = 0; i < m; ++i) {
        const float bi = (m == 1) ? 0.0f : -0.5f + float(i) / float(m - 1);
        p.b[i].assign(dim, bi);
    }
    return p;
}

const char* feature_map_name(FeatureMapTag tag) {
    switch (tag) {
        case FeatureMapTag::Identity: return "identity";
        case FeatureMapTag::Relu: return "relu";
        case FeatureMapTag::EluPlusOne: return "elu1";
        case FeatureMapTag::SymRelu: return "symrelu";
        case FeatureMapTag::Hedgehog: return "hedgehog";
    }
    return "?";
}

int feature_output_dim(const FeatureMap& fm, int d) {
    switch (fm.tag) {
        case FeatureMapTag::Identity:
        case FeatureMapTag::Relu:
        case FeatureMapTag::EluPlusOne:
            return d;
        case FeatureMapTag::SymRelu:
            return 2 * d;
        case FeatureMapTag::Hedgehog:
            if (fm.hedgehog.input_dim() != d)
                throw ConfigError("hedgehog: input dim " + std::to_string(d) +
                                  " does not match W (" +
                                  std::to_string(fm.hedgehog.input_dim()) + ")");
            return fm.hedgehog.output_dim();
    }
    throw ConfigError("unknown feature map tag");
}

void apply_feature_map_row(const FeatureMap& fm, const float* x, int d, float* out) {
    switch (fm.tag) {
        case FeatureMapTag::Identity:
            for (int i = 0; i < d; ++i) out[i] = x[i];
            return;
        case FeatureMapTag::Relu:
            for (int i = 0; i < d; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
            return;
        case FeatureMapTag::EluPlusOne:
            for (int i = 0; i < d; ++i) out[i] = elu(x[i]) + 1.0f;
            return;
        case FeatureMapTag::SymRelu:
            // [ReLU(x), ReLU(-x)]
            for (int i = 0; i < d; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
            for (int i = 0; i < d; ++i) out[d + i] = x[i] < 0.0f ? -x[i] : 0.0f;
            return;
        case FeatureMapTag::Hedgehog: {
            const HedgehogParams& hp = fm.hedgehog;
            if (hp.input_dim() != d)
                throw ConfigError("hedgehog: input dim mismatch");
            const int m = hp.pairs();
            // u = W^T x, computed once and shared by the +/- halves
            std::vector<double> u(d, 0.0);
            for (int i = 0; i < d; ++i) {
                const double xi = x[i];
                const float* wrow = hp.w.row(i);
                for (int j = 0; j < d; ++j) u[j] += xi * double(wrow[j]);
            }
            instrument::add_matmul_macs(std::int64_t(d) * d);
            for (int p = 0; p < m; ++p)
                for (int j = 0; j < d; ++j)
                    out[p * d + j] = clamped_exp(u[j] + hp.b[p][j]);
            for (int p = 0; p < m; ++p)
                for (int j = 0; j < d; ++j)
                    out[(m + p) * d + j] = clamped_exp(-u[j] - hp.b[p][j]);
            instrument::add_elementwise(2LL * m * d);
            if (hp.post_normalize) {
                double s = 0.0;
                const int r = 2 * m * d;
                for (int j = 0; j < r; ++j) s += out[j];
                const double inv = 1.0 / s;
                for (int j = 0; j < r; ++j) out[j] = static_cast<float>(out[j] * inv);
                instrument::add_elementwise(r);
            }
            return;
        }
    }
    throw ConfigError("unknown feature map tag");
}

Mat apply_feature_map(const FeatureMap& fm, const Mat& x) {
    const int r = feature_output_dim(fm, x.cols());
    Mat out(x.rows(), r);
    for (int i = 0; i < x.rows(); ++i)
        apply_feature_map_row(fm, x.row(i), x.cols(), out.row(i));
    if (fm.tag != FeatureMapTag::Hedgehog)
        instrument::add_elementwise(std::int64_t(x.rows()) * r);
    return out;
}

namespace {

// double-precision map evaluation for the scalar kernel identities; the
// matrix path stays in the tensor element type
void apply_feature_map_row_f64(const FeatureMap& fm, const float* x, int d,
                               double* out) {
    switch (fm.tag) {
        case FeatureMapTag::Identity:
            for (int i = 0; i < d; ++i) out[i] = x[i];
            return;
        case FeatureMapTag::Relu:
            for (int i = 0; i < d; ++i) out[i] = x[i] > 0.0f ? double(x[i]) : 0.0;
            return;
        case FeatureMapTag::EluPlusOne:
            for (int i = 0; i < d; ++i)
                out[i] = x[i] > 0.0f ? double(x[i]) + 1.0 : std::exp(double(x[i]));
            return;
        case FeatureMapTag::SymRelu:
            for (int i = 0; i < d; ++i) {
                out[i] = x[i] > 0.0f ? double(x[i]) : 0.0;
                out[d + i] = x[i] < 0.0f ? -double(x[i]) : 0.0;
            }
            return;
        case FeatureMapTag::Hedgehog: {
            const HedgehogParams& hp = fm.hedgehog;
            const int m = hp.pairs();
            std::vector<double> u(d, 0.0);
            for (int i = 0; i < d; ++i) {
                const double xi = x[i];
                for (int j = 0; j < d; ++j) u[j] += xi * double(hp.w.at(i, j));
            }
            auto cexp = [](double a) {
                a = std::min(double(kHedgehogExpClamp), std::max(-double(kHedgehogExpClamp), a));
                return std::exp(a);
            };
            for (int p = 0; p < m; ++p)
                for (int j = 0; j < d; ++j) {
                    out[p * d + j] = cexp(u[j] + hp.b[p][j]);
                    out[(m + p) * d + j] = cexp(-u[j] - hp.b[p][j]);
                }
            return;
        }
    }
    throw ConfigError("unknown feature map tag");
}

} // namespace

double kernel_value(const FeatureMap& fm, std::span<const float> q,
                    std::span<const float> k) {
    if (q.size() != k.size()) throw DimensionError("kernel_value: dims differ");
    const int d = static_cast<int>(q.size());
    const int r = feature_output_dim(fm, d);
    std::vector<double> fq(r), fk(r);
    apply_feature_map_row_f64(fm, q.data(), d, fq.data());
    apply_feature_map_row_f64(fm, k.data(), d, fk.data());
    double acc = 0.0;
    for (int i = 0; i < r; ++i) acc += fq[i] * fk[i];
    return acc;
}

EluKernelParts elu_kernel_decomposition(std::span<const float> q,
                                        std::span<const float> k) {
    if (q.size() != k.size()) throw DimensionError("elu decomposition: dims differ");
    EluKernelParts parts;
    parts.dim = static_cast<double>(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double sq = elu(q[i]);
        const double sk = elu(k[i]);
        parts.similarity += sq * sk;
        parts.q_bias += sq;
        parts.k_bias += sk;
    }
    return parts;
}

Mat feature_map_jacobian(const FeatureMap& fm, std::span<const float> x) {
    const int d = static_cast<int>(x.size());
    const int r = feature_output_dim(fm, d);
    Mat jac(r, d);
    switch (fm.tag) {
        case FeatureMapTag::Identity:
            for (int i = 0; i < d; ++i) jac.at(i, i) = 1.0f;
            return jac;
        case FeatureMapTag::Relu:
            for (int i = 0; i < d; ++i) jac.at(i, i) = x[i] > 0.0f ? 1.0f : 0.0f;
            return jac;
        case FeatureMapTag::EluPlusOne:
            for (int i = 0; i < d; ++i)
                jac.at(i, i) = x[i] > 0.0f ? 1.0f : std::exp(x[i]);
            return jac;
        case FeatureMapTag::SymRelu:
            for (int i = 0; i < d; ++i) {
                jac.at(i, i) = x[i] > 0.0f ? 1.0f : 0.0f;
                jac.at(d + i, i) = x[i] < 0.0f ? -1.0f : 0.0f;
            }
            return jac;
        case FeatureMapTag::Hedgehog: {
            const HedgehogParams& hp = fm.hedgehog;
            if (hp.input_dim() != d) throw ConfigError("hedgehog: input dim mismatch");
            const int m = hp.pairs();
            std::vector<double> u(d, 0.0);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) u[j] += double(x[i]) * double(hp.w.at(i, j));
            // rows p*d+j:     exp(u_j + b_pj) * W_ij
            // rows (m+p)*d+j: -exp(-u_j - b_pj) * W_ij
            for (int p = 0; p < m; ++p)
                for (int j = 0; j < d; ++j) {
                    const float ep = clamped_exp(u[j] + hp.b[p][j]);
                    const float en = clamped_exp(-u[j] - hp.b[p][j]);
                    for (int i = 0; i < d; ++i) {
                        jac.at(p * d + j, i) = ep * hp.w.at(i, j);
                        jac.at((m + p) * d + j, i) = -en * hp.w.at(i, j);
                    }
                }
            return jac;
        }
    }
    throw ConfigError("unknown feature map tag");
}

} // namespace ucan
