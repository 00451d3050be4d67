#include "sll/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sll::nn {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Loss mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) throw std::invalid_argument("mse of empty batch");
    const double n = static_cast<double>(a.size());
    Loss out{0.0, Tensor(a.shape())};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        out.value += d * d;
        out.grad[i] = 2.0 * d / n;
    }
    out.value /= n;
    return out;
}

Loss cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw std::invalid_argument("cross_entropy expects [N,K] logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (n == 0) throw std::invalid_argument("cross_entropy of empty batch");
    if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
    Loss out{0.0, Tensor(logits.shape())};
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
            throw std::invalid_argument("cross_entropy: label out of range");
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        out.value += log_z - row[static_cast<std::size_t>(labels[r])];
        for (std::size_t c = 0; c < k; ++c) {
            const double p = std::exp(row[c] - log_z);
            out.grad[r * k + c] = (p - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    out.value /= static_cast<double>(n);
    return out;
}

Loss bce_logit(const Tensor& scores, std::span<const double> targets) {
    if (scores.empty()) throw std::invalid_argument("bce of empty batch");
    if (scores.size() != scores.batch() || targets.size() != scores.batch())
        throw std::invalid_argument("bce_logit expects one score and one target per row");
    const double n = static_cast<double>(scores.size());
    Loss out{0.0, Tensor(scores.shape())};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i], t = targets[i];
        // log(1 + exp(-|s|)) formulation avoids overflow.
        out.value += std::max(s, 0.0) - s * t + std::log1p(std::exp(-std::abs(s)));
        out.grad[i] = (sigmoid(s) - t) / n;
    }
    out.value /= n;
    return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || labels.size() != logits.dim(0) || labels.empty())
        throw std::invalid_argument("accuracy: shape mismatch");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto row = logits.row(r);
        const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        hits += arg == labels[r];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace sll::nn
