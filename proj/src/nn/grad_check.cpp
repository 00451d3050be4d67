#include "sll/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sll/nn/losses.hpp"

namespace sll::nn {
namespace {

Loss loss_and_grad(const Tensor& output, const CheckLoss& loss) {
    switch (loss.kind) {
        case CheckLossKind::mse: {
            const Tensor target = loss.target.empty() ? Tensor(output.shape()) : loss.target;
            return mse(output, target);
        }
        case CheckLossKind::cross_entropy: return cross_entropy(output, loss.labels);
        case CheckLossKind::projection: {
            require_same_shape(output, loss.target, "projection loss");
            Loss out{0.0, loss.target};
            for (std::size_t i = 0; i < output.size(); ++i) out.value += output[i] * loss.target[i];
            return out;
        }
    }
    throw std::invalid_argument("unknown check loss");
}

double rel_error(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    return std::abs(a - n) / denom;
}

}  // namespace

double evaluate_check_loss(const Tensor& output, const CheckLoss& loss) {
    return loss_and_grad(output, loss).value;
}

GradCheckResult grad_check(Network& net, const Tensor& x, const CheckLoss& loss, double step) {
    const Loss base = loss_and_grad(net.forward(x), loss);
    if (!std::isfinite(base.value)) throw std::runtime_error("grad_check: non-finite loss");
    const Tensor input_grad = net.backward(base.grad);

    auto params = net.parameters();
    std::vector<Tensor> analytic;
    for (auto* p : params) analytic.push_back(p->grad.empty() ? Tensor(p->value.shape()) : p->grad);

    auto central = [&](double& slot) {
        const double saved = slot;
        slot = saved + step;
        const double up = evaluate_check_loss(net.forward(x), loss);
        slot = saved - step;
        const double down = evaluate_check_loss(net.forward(x), loss);
        slot = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) throw std::runtime_error("grad_check: non-finite loss");
        return (up - down) / (2.0 * step);
    };

    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k]->value.size(); ++i) {
            const double numeric = central(params[k]->value[i]);
            const double err = rel_error(analytic[k][i], numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = std::to_string(k) + "/" + params[k]->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    Tensor probe = x;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double up = evaluate_check_loss(net.forward(probe), loss);
        probe[i] = saved - step;
        const double down = evaluate_check_loss(net.forward(probe), loss);
        probe[i] = saved;
        const double err = rel_error(input_grad[i], (up - down) / (2.0 * step));
        ++result.checked;
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst = "input[" + std::to_string(i) + "]";
        }
    }
    // Leave the network's caches consistent with the unperturbed input.
    net.forward(x);
    return result;
}

}  // namespace sll::nn
