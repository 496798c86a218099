#ifndef UCAN_TENSOR_HPP
#define UCAN_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ucan/errors.hpp"

namespace ucan {

struct Shape {
    int n = 1; // batch
    int c = 1; // channels
    int h = 1; // rows
    int w = 1; // cols

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Dense rank-4 float tensor, row-major (n, c, h, w). The universal value
// type of the library. Treated as immutable once an op has produced it;
// ops return fresh tensors.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<float> data);

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, float v);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& at(int n, int c, int h, int w) {
        return data_[idx(n, c, h, w)];
    }
    float at(int n, int c, int h, int w) const {
        return data_[idx(n, c, h, w)];
    }

    std::int64_t idx(int n, int c, int h, int w) const {
        return ((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Row-major 2-D float matrix for token-space math (N tokens x d features).
// Conversions between Tensor and Mat are explicit copies, never aliased
// reinterpretation.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols);
    Mat(int rows, int cols, std::vector<float> data);

    static Mat zeros(int rows, int cols) { return Mat(rows, cols); }
    static Mat identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t numel() const { return std::int64_t(rows_) * cols_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& at(int r, int c) { return data_[std::int64_t(r) * cols_ + c]; }
    float at(int r, int c) const { return data_[std::int64_t(r) * cols_ + c]; }

    float* row(int r) { return data_.data() + std::int64_t(r) * cols_; }
    const float* row(int r) const { return data_.data() + std::int64_t(r) * cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<float> data_;
};

// Counter-based deterministic generator (splitmix64 core). The same seed
// produces the same stream on every platform; gaussians come from an
// explicit Box-Muller transform rather than std::normal_distribution,
// whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double next_uniform();
    // standard normal
    float next_gaussian();

    void fill_gaussian(float* dst, std::int64_t n, float stddev = 1.0f, float mean = 0.0f);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// token-matrix view: (1, c, h, w) tensor -> (h*w) x c matrix, row per pixel
Mat tensor_to_tokens(const Tensor& t, int batch_index = 0);
// inverse of tensor_to_tokens
Tensor tokens_to_tensor(const Mat& m, int c, int h, int w);

} // namespace ucan

#endif
