#pragma once

#include <vector>

#include "sll/nn/tensor.hpp"

namespace sll::attack {

/// Gaussian kernel mixture. Each kernel is exp(-|x-y|^2 / s_j) with
/// s_j = 2 sigma_j^2 stored directly.
struct KernelSet {
    std::vector<double> two_sigma_sq;
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
    /// Throws unless the weights lie on the simplex and the scales are
    /// positive and distinct.
    void validate() const;

    /// m kernels at s_j = base * 2^(j - ceil(m/2)), j = 1..m, equal weights.
    static KernelSet ladder(double base, std::size_t m = 5);
};

/// Median of the pairwise Euclidean distances between rows of [n, ...].
double median_distance(const nn::Tensor& points);

/// Squared median distance of the pooled rows of a and b, the base 2 sigma^2
/// of the ladder. Returns 1.0 when every point coincides.
double median_bandwidth(const nn::Tensor& a, const nn::Tensor& b);

/// Ladder built around the median bandwidth of a and b.
KernelSet median_kernels(const nn::Tensor& a, const nn::Tensor& b, std::size_t m = 5);

struct MmdResult {
    double value = 0.0;
    nn::Tensor grad_a;  // d value / d a, shaped like a; empty unless requested
};

/// Biased squared MMD between the rows of a and b (flattened per sample).
MmdResult mmd2(const nn::Tensor& a, const nn::Tensor& b, const KernelSet& k, bool want_grad = false);

}  // namespace sll::attack
