#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sll/protocol/hooks.hpp"

namespace sll::detect {

struct GsConfig {
    std::size_t warmup = 450;  // iterations skipped before monitoring
    std::size_t window = 32;   // gap samples per decision
    double tau = -0.05;        // attack iff score < tau
    double lambda = 0.5;       // weight of the overlap fraction

    void validate() const;
};

struct Similarities {
    std::optional<double> same;  // mean cosine over same-label pairs
    std::optional<double> diff;  // mean cosine over cross-label pairs
};

/// Pairwise cosine similarities of the gradient rows of [n, ...], split by
/// whether the two labels agree. Zero-norm rows are skipped; throws when
/// fewer than two rows remain.
Similarities batch_similarities(const nn::Tensor& grads, std::span<const int> labels);

struct WindowStats {
    double mean_gap = 0.0;  // G
    double overlap = 0.0;   // O: fraction of gaps <= 0
    double fit_rmse = 0.0;  // E: RMS residual of the least-squares line
    double score = 0.0;     // G - lambda * O - E
};

WindowStats window_score(std::span<const double> gaps, double lambda);

/// Client monitor over returned gradients. After warmup, every batch with
/// both pair kinds contributes gap = same - diff; each full window of gaps
/// yields one verdict and then the window restarts.
class GradientScrutinizer final : public protocol::ClientMonitor {
public:
    explicit GradientScrutinizer(GsConfig cfg);

    std::optional<protocol::MonitorVerdict> on_gradient(const nn::Tensor& grad, std::span<const int> labels) override;
    void annotate(nlohmann::json& record) const override;

    std::size_t iterations() const { return iteration_; }
    const std::vector<double>& window() const { return gaps_; }
    const std::vector<WindowStats>& decisions() const { return decisions_; }

private:
    GsConfig cfg_;
    std::size_t iteration_ = 0;
    std::vector<double> gaps_;
    std::vector<WindowStats> decisions_;
    std::optional<double> last_gap_;
    bool decided_now_ = false;
};

}  // namespace sll::detect
