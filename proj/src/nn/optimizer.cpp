#include "sll/nn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace sll::nn {

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd" || name == "sgd-momentum") return OptimizerKind::sgd_momentum;
    throw std::invalid_argument("unknown optimizer: " + name);
}

Optimizer::Optimizer(OptimizerConfig config, Network& net) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (config_.momentum < 0.0 || config_.momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
    for (const auto* p : net.parameters()) {
        first_.emplace_back(p->value.shape());
        if (config_.kind == OptimizerKind::adam) second_.emplace_back(p->value.shape());
    }
}

void Optimizer::step(Network& net) {
    auto params = net.parameters();
    if (params.size() != first_.size()) throw std::invalid_argument("optimizer bound to a different network");
    ++steps_;
    const double lr = config_.learning_rate;
    const double t = static_cast<double>(steps_);
    const double bias1 = 1.0 - std::pow(config_.beta1, t);
    const double bias2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (p.grad.empty()) continue;
        if (p.grad.shape() != p.value.shape()) throw std::invalid_argument("gradient shape mismatch for " + p.name);
        auto& m = first_[k];
        if (config_.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                m[i] = config_.momentum * m[i] + p.grad[i];
                p.value[i] -= lr * m[i];
            }
        } else {
            auto& v = second_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
                v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
                p.value[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config_.epsilon);
            }
        }
    }
}

}  // namespace sll::nn
