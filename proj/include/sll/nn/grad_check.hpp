#pragma once

#include <string>
#include <vector>

#include "sll/nn/network.hpp"

namespace sll::nn {

enum class CheckLossKind {
    mse,            // mean squared error against `target`
    cross_entropy,  // softmax cross entropy against `labels` (output must be [N,K])
    projection,     // sum(output * target): a fixed random linear readout
};

struct CheckLoss {
    CheckLossKind kind = CheckLossKind::mse;
    Tensor target;
    std::vector<int> labels;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "<param index>/<name>[<element>]" or "input[<element>]"
    std::size_t checked = 0;
};

double evaluate_check_loss(const Tensor& output, const CheckLoss& loss);

/// Compares backward() against central differences for every parameter
/// element and every input element. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). The network's mode is used as-is, so a
/// batchnorm layer in train mode is checked through its batch statistics.
GradCheckResult grad_check(Network& net, const Tensor& x, const CheckLoss& loss, double step = 1e-5);

}  // namespace sll::nn
