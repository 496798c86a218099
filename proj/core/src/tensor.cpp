#include "ucan/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ucan {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
    return os.str();
}

Tensor::Tensor(Shape s) : shape_(s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
        throw DimensionError("tensor dimensions must all be >= 1, got " + s.str());
    data_.assign(static_cast<std::size_t>(s.numel()), 0.0f);
}

Tensor::Tensor(Shape s, std::vector<float> data) : shape_(s), data_(std::move(data)) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
        throw DimensionError("tensor dimensions must all be >= 1, got " + s.str());
    if (static_cast<std::int64_t>(data_.size()) != s.numel())
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + s.str());
}

Tensor Tensor::full(Shape s, float v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

bool Tensor::all_finite() const {
    for (float x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Mat::Mat(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0)
        throw DimensionError("matrix dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(std::int64_t(rows) * cols), 0.0f);
}

Mat::Mat(int rows, int cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != std::int64_t(rows) * cols)
        throw DimensionError("matrix data length does not match " +
                             std::to_string(rows) + "x" + std::to_string(cols));
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
    return m;
}

std::uint64_t Rng::next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return static_cast<float>(spare_);
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    while (u1 <= 1e-300) u1 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return static_cast<float>(r * std::cos(theta));
}

void Rng::fill_gaussian(float* dst, std::int64_t n, float stddev, float mean) {
    for (std::int64_t i = 0; i < n; ++i)
        dst[i] = mean + stddev * next_gaussian();
}

Mat tensor_to_tokens(const Tensor& t, int batch_index) {
    const Shape& s = t.shape();
    if (batch_index < 0 || batch_index >= s.n)
        throw DimensionError("batch index out of range");
    Mat m(s.h * s.w, s.c);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x)
                m.at(y * s.w + x, c) = t.at(batch_index, c, y, x);
    return m;
}

Tensor tokens_to_tensor(const Mat& m, int c, int h, int w) {
    if (m.rows() != h * w || m.cols() != c)
        throw DimensionError("token matrix " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + " does not reshape to (1, " +
                             std::to_string(c) + ", " + std::to_string(h) + ", " +
                             std::to_string(w) + ")");
    Tensor t({1, c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                t.at(0, ch, y, x) = m.at(y * w + x, ch);
    return t;
}

} // namespace ucan
