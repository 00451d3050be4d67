#pragma once

#include <span>
#include <vector>

#include "sll/nn/tensor.hpp"

namespace sll::nn {

/// Scalar loss together with its gradient with respect to the first argument.
struct Loss {
    double value = 0.0;
    Tensor grad;
};

/// Mean over all elements of (a - b)^2.
Loss mse(const Tensor& a, const Tensor& b);

/// Batch-mean softmax cross entropy; logits are [N, K].
Loss cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Batch-mean binary cross entropy on raw scores ([N] or [N,1]) with targets
/// in [0,1].
Loss bce_logit(const Tensor& scores, std::span<const double> targets);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

double sigmoid(double x);

}  // namespace sll::nn
