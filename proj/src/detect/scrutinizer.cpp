#include "sll/detect/scrutinizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sll::detect {

void GsConfig::validate() const {
    if (window < 2) throw std::invalid_argument("gs: window must be at least 2");
    if (!(lambda >= 0.0)) throw std::invalid_argument("gs: lambda must be >= 0");
    if (!std::isfinite(tau)) throw std::invalid_argument("gs: tau must be finite");
}

Similarities batch_similarities(const nn::Tensor& grads, std::span<const int> labels) {
    if (grads.batch() != labels.size()) throw std::invalid_argument("gs: one label per gradient row required");
    std::vector<std::size_t> rows;
    std::vector<double> norms(grads.batch(), 0.0);
    for (std::size_t i = 0; i < grads.batch(); ++i) {
        double s = 0.0;
        for (double v : grads.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        if (norms[i] > 0.0) rows.push_back(i);
    }
    if (rows.size() < 2) throw std::invalid_argument("gs: fewer than two nonzero gradient rows");

    double same = 0.0, diff = 0.0;
    std::size_t n_same = 0, n_diff = 0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const auto ra = grads.row(rows[a]);
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            const auto rb = grads.row(rows[b]);
            double dot = 0.0;
            for (std::size_t k = 0; k < ra.size(); ++k) dot += ra[k] * rb[k];
            const double c = std::clamp(dot / (norms[rows[a]] * norms[rows[b]]), -1.0, 1.0);
            if (labels[rows[a]] == labels[rows[b]]) {
                same += c;
                ++n_same;
            } else {
                diff += c;
                ++n_diff;
            }
        }
    }
    Similarities out;
    if (n_same) out.same = same / static_cast<double>(n_same);
    if (n_diff) out.diff = diff / static_cast<double>(n_diff);
    return out;
}

WindowStats window_score(std::span<const double> gaps, double lambda) {
    if (gaps.size() < 2) throw std::invalid_argument("gs: window needs at least two gaps");
    const double n = static_cast<double>(gaps.size());
    WindowStats s;
    double st = 0, stt = 0, sg = 0, stg = 0;
    for (std::size_t t = 0; t < gaps.size(); ++t) {
        const double x = static_cast<double>(t);
        s.mean_gap += gaps[t];
        s.overlap += gaps[t] <= 0.0 ? 1.0 : 0.0;
        st += x;
        stt += x * x;
        sg += gaps[t];
        stg += x * gaps[t];
    }
    s.mean_gap /= n;
    s.overlap /= n;
    const double slope = (n * stg - st * sg) / (n * stt - st * st);
    const double icept = (sg - slope * st) / n;
    double rss = 0.0;
    for (std::size_t t = 0; t < gaps.size(); ++t) {
        const double r = gaps[t] - (icept + slope * static_cast<double>(t));
        rss += r * r;
    }
    s.fit_rmse = std::sqrt(rss / n);
    s.score = s.mean_gap - lambda * s.overlap - s.fit_rmse;
    return s;
}

GradientScrutinizer::GradientScrutinizer(GsConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::optional<protocol::MonitorVerdict> GradientScrutinizer::on_gradient(const nn::Tensor& grad,
                                                                         std::span<const int> labels) {
    ++iteration_;
    last_gap_.reset();
    decided_now_ = false;
    if (iteration_ <= cfg_.warmup) return std::nullopt;

    Similarities sims;
    try {
        sims = batch_similarities(grad.flattened(), labels);
    } catch (const std::invalid_argument&) {
        return std::nullopt;  // a batch of vanished gradients carries no evidence
    }
    if (!sims.same || !sims.diff) return std::nullopt;
    last_gap_ = *sims.same - *sims.diff;
    gaps_.push_back(*last_gap_);
    if (gaps_.size() < cfg_.window) return std::nullopt;

    const WindowStats stats = window_score(gaps_, cfg_.lambda);
    decisions_.push_back(stats);
    gaps_.clear();
    decided_now_ = true;
    return protocol::MonitorVerdict{stats.score < cfg_.tau, stats.score};
}

void GradientScrutinizer::annotate(nlohmann::json& record) const {
    if (last_gap_) record["gs_gap"] = *last_gap_;
    if (decided_now_) {
        const auto& d = decisions_.back();
        record["gs_mean_gap"] = d.mean_gap;
        record["gs_overlap"] = d.overlap;
        record["gs_fit_rmse"] = d.fit_rmse;
    }
}

}  // namespace sll::detect
