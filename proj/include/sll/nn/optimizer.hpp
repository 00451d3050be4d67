#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sll/nn/network.hpp"

namespace sll::nn {

enum class OptimizerKind { sgd_momentum, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.0;  // sgd only
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;   // adam
    double epsilon = 1e-8;  // adam
};

/// Optimizer state bound to one network's parameter layout.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, Network& net);

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t steps() const { return steps_; }

    /// Applies one update from the gradients currently held by the network.
    /// Parameters without a gradient are skipped.
    void step(Network& net);

private:
    OptimizerConfig config_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    std::uint64_t steps_ = 0;
};

}  // namespace sll::nn
