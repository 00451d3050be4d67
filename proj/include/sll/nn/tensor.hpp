#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sll::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array of doubles. The first dimension is the
/// batch dimension wherever a tensor flows through a network.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor from(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Leading dimension and the flattened size of everything after it.
    std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t sample_size() const;
    Shape sample_shape() const;

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t n);
    std::span<const double> row(std::size_t n) const;

    /// Same buffer viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;
    /// [N, ...] -> [N, prod(...)].
    Tensor flattened() const;
    /// Rows [begin, end) along the batch dimension.
    Tensor slice_batch(std::size_t begin, std::size_t end) const;
    /// Rows picked by index along the batch dimension.
    Tensor gather_batch(std::span<const std::size_t> indices) const;

    bool all_finite() const;
    void fill(double v);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

/// Concatenate tensors along the batch dimension.
Tensor concat_batch(std::span<const Tensor> parts);

double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace sll::nn
