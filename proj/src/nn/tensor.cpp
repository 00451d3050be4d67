#include "sll/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sll::nn {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_)
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_string(shape_));
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    for (auto d : shape_)
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_string(shape_));
    if (shape_size(shape_) != data_.size())
        throw std::invalid_argument("tensor buffer length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(shape_));
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::sample_size() const {
    return shape_.empty() ? 0 : data_.size() / shape_[0];
}

Shape Tensor::sample_shape() const {
    return shape_.empty() ? Shape{} : Shape(shape_.begin() + 1, shape_.end());
}

std::span<double> Tensor::row(std::size_t n) {
    const auto s = sample_size();
    return std::span<double>(data_).subspan(n * s, s);
}

std::span<const double> Tensor::row(std::size_t n) const {
    const auto s = sample_size();
    return std::span<const double>(data_).subspan(n * s, s);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::flattened() const {
    return reshaped({batch(), sample_size()});
}

Tensor Tensor::slice_batch(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > batch()) throw std::out_of_range("batch slice out of range");
    Shape s = shape_;
    s[0] = end - begin;
    const auto stride = sample_size();
    return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                    data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

Tensor Tensor::gather_batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw std::invalid_argument("gather of zero rows");
    Shape s = shape_;
    s[0] = indices.size();
    Tensor out(std::move(s));
    const auto stride = sample_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= batch()) throw std::out_of_range("gather index out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "tensor add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "tensor subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor concat_batch(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    const Shape sample = parts.front().sample_shape();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.sample_shape() != sample) throw std::invalid_argument("concat of mismatched sample shapes");
        rows += p.batch();
    }
    Shape s = parts.front().shape();
    s[0] = rows;
    std::vector<double> values;
    values.reserve(shape_size(s));
    for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
    return Tensor(std::move(s), std::move(values));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

}  // namespace sll::nn
