#include "sll/attack/fora.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sll/nn/archive.hpp"
#include "sll/nn/losses.hpp"

namespace sll::attack {
namespace {

// log(clamp(p)) and the derivative of the unclamped log with respect to the
// raw score, where p is sigmoid(score) or 1 - sigmoid(score). The clamp only
// bounds the reported value.
struct LogTerm {
    double value;
    double dscore;
};

LogTerm log_prob(double score, bool complement) {
    const double s = nn::sigmoid(score);
    const double p = complement ? 1.0 - s : s;
    const double pc = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
    // d log(s)/d score = 1 - s; d log(1 - s)/d score = -s.
    return {std::log(pc), complement ? -s : 1.0 - s};
}

void require_scores(const nn::Tensor& scores) {
    if (scores.rank() != 2 || scores.dim(1) != 1)
        throw std::invalid_argument("discriminator must output [N,1], got " + nn::shape_string(scores.shape()));
}

}  // namespace

std::string to_string(DiscObjective o) { return o == DiscObjective::bce ? "bce" : "minimax"; }

DiscObjective disc_objective_from_string(const std::string& name) {
    if (name == "bce") return DiscObjective::bce;
    if (name == "minimax") return DiscObjective::minimax;
    throw std::invalid_argument("unknown discriminator objective: " + name);
}

void AttackConfig::validate() const {
    if (kernel_count == 0) throw std::invalid_argument("attack: kernel_count must be positive");
    if (aux_batch < 2) throw std::invalid_argument("attack: aux_batch must be at least 2");
    if (inverse_batch == 0) throw std::invalid_argument("attack: inverse_batch must be positive");
    if (priv_window == 0) throw std::invalid_argument("attack: priv_window must be positive");
    if (disc_weight < 0.0 || mmd_weight < 0.0) throw std::invalid_argument("attack: loss weights must be >= 0");
}

DiscLoss disc_loss(const nn::Tensor& scores, std::size_t n_priv, DiscObjective objective) {
    require_scores(scores);
    const std::size_t n = scores.batch();
    if (n_priv == 0 || n_priv >= n) throw std::invalid_argument("disc_loss: both batches must be nonempty");
    const double np = static_cast<double>(n_priv), na = static_cast<double>(n - n_priv);
    DiscLoss out;
    out.grad_scores = nn::Tensor(scores.shape());
    double priv = 0.0, aux = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (objective == DiscObjective::bce) {
            const auto t = log_prob(scores[i], i >= n_priv);
            (i < n_priv ? priv : aux) -= t.value;
            out.grad_scores[i] = -t.dscore / (i < n_priv ? np : na);
            continue;
        }
        if (i < n_priv) {
            const auto t = log_prob(scores[i], true);
            priv += t.value;
            out.grad_scores[i] = t.dscore / np;
        } else {
            const auto t = log_prob(scores[i], false);
            aux += t.value;
            out.grad_scores[i] = t.dscore / na;
        }
    }
    out.value = priv / np + aux / na;
    return out;
}

double disc_step(nn::Network& disc, const nn::Tensor& z_priv, const nn::Tensor& z_aux, nn::Optimizer& opt,
                 DiscObjective objective) {
    if (z_priv.sample_shape() != z_aux.sample_shape())
        throw std::invalid_argument("disc_step: private and auxiliary features differ in shape");
    const std::vector<nn::Tensor> parts{z_priv, z_aux};
    const auto loss = disc_loss(disc.forward(nn::concat_batch(parts)), z_priv.batch(), objective);
    disc.backward(loss.grad_scores);
    opt.step(disc);
    return loss.value;
}

SubstituteLosses substitute_step(nn::Network& substitute, nn::Network& disc, const nn::Tensor& z_priv,
                                 const nn::Tensor& x_aux, nn::Optimizer& opt, const AttackConfig& cfg) {
    SubstituteLosses out;
    if (cfg.flags.no_disc && cfg.flags.no_mkmmd) return out;

    const nn::Tensor z = substitute.forward(x_aux);
    if (z.sample_shape() != z_priv.sample_shape())
        throw std::invalid_argument("substitute output " + nn::shape_string(z.sample_shape()) +
                                    " does not match smashed data " + nn::shape_string(z_priv.sample_shape()));
    nn::Tensor grad(z.shape());

    if (!cfg.flags.no_disc) {
        // D sees the same mixed batch layout as in disc_step so its batch
        // statistics match; only the auxiliary half carries a loss.
        const std::vector<nn::Tensor> parts{z_priv, z};
        const nn::Tensor scores = disc.forward(nn::concat_batch(parts));
        require_scores(scores);
        const std::size_t np = z_priv.batch(), n = z.batch();
        nn::Tensor gs(scores.shape());
        double value = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = cfg.saturating_disc ? log_prob(scores[np + i], true) : log_prob(scores[np + i], false);
            const double sign = cfg.saturating_disc ? 1.0 : -1.0;
            value += sign * t.value;
            gs[np + i] = sign * cfg.disc_weight * t.dscore / static_cast<double>(n);
        }
        out.disc = value / static_cast<double>(n);
        const nn::Tensor gin = disc.backward(gs);
        grad += gin.slice_batch(np, np + n);
    }
    if (!cfg.flags.no_mkmmd) {
        const KernelSet k = median_kernels(z, z_priv, cfg.kernel_count);
        auto r = mmd2(z, z_priv, k, true);
        out.mmd = r.value;
        r.grad_a *= cfg.mmd_weight;
        grad += r.grad_a;
    }
    substitute.backward(grad);
    opt.step(substitute);
    return out;
}

std::vector<double> train_inverse(nn::Network& inverse, nn::Network& substitute, const nn::Tensor& x_aux,
                                  std::size_t epochs, std::size_t batch, nn::Optimizer& opt, nn::Rng& rng) {
    if (batch == 0) throw std::invalid_argument("train_inverse: batch must be positive");
    if (inverse.output_shape() != x_aux.sample_shape())
        throw std::invalid_argument("inverse output " + nn::shape_string(inverse.output_shape()) +
                                    " does not match images " + nn::shape_string(x_aux.sample_shape()));
    const nn::Mode saved = substitute.mode();
    substitute.set_mode(nn::Mode::eval);
    const nn::Tensor features = substitute.forward(x_aux);
    substitute.set_mode(saved);
    if (features.sample_shape() != inverse.input_shape())
        throw std::invalid_argument("inverse input does not match substitute output");

    std::vector<double> history;
    const std::size_t n = x_aux.batch();
    for (std::size_t e = 0; e < epochs; ++e) {
        const auto order = rng.permutation(n);
        double total = 0.0;
        for (std::size_t b = 0; b < n; b += batch) {
            const auto idx = std::span(order).subspan(b, std::min(batch, n - b));
            const auto loss = nn::mse(inverse.forward(features.gather_batch(idx)), x_aux.gather_batch(idx));
            inverse.backward(loss.grad);
            opt.step(inverse);
            total += loss.value * static_cast<double>(idx.size());
        }
        history.push_back(total / static_cast<double>(n));
    }
    return history;
}

nn::Tensor reconstruct(nn::Network& inverse, const protocol::SnapshotStore& snapshot) {
    if (snapshot.empty()) throw std::invalid_argument("reconstruct: snapshot is empty");
    const nn::Mode saved = inverse.mode();
    inverse.set_mode(nn::Mode::eval);
    std::vector<nn::Tensor> out;
    for (const auto& e : snapshot.entries()) out.push_back(inverse.forward(e.smashed));
    inverse.set_mode(saved);
    return nn::concat_batch(out);
}

ForaAttacker::ForaAttacker(AttackConfig cfg, nn::Network substitute, nn::Network disc, nn::Network inverse,
                           data::ImageDataset aux, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      substitute_(std::move(substitute)),
      disc_(std::move(disc)),
      inverse_(std::move(inverse)),
      aux_(std::move(aux)),
      rng_(seed, nn::stream_id("attack")),
      sub_opt_(cfg_.substitute_optimizer, substitute_),
      disc_opt_(cfg_.disc_optimizer, disc_),
      inv_opt_(cfg_.inverse_optimizer, inverse_) {
    cfg_.validate();
    if (aux_.size() < cfg_.aux_batch) throw std::invalid_argument("auxiliary set is smaller than aux_batch");
    if (aux_.image_shape() != substitute_.input_shape())
        throw std::invalid_argument("substitute input does not match auxiliary images");
    if (disc_.input_shape() != substitute_.output_shape())
        throw std::invalid_argument("discriminator input does not match substitute output");
    if (inverse_.input_shape() != substitute_.output_shape())
        throw std::invalid_argument("inverse input does not match substitute output");
}

nn::Tensor ForaAttacker::next_aux_batch() {
    std::vector<std::size_t> idx;
    while (idx.size() < cfg_.aux_batch) {
        if (aux_cursor_ == aux_order_.size()) {
            aux_order_ = rng_.permutation(aux_.size());
            aux_cursor_ = 0;
        }
        idx.push_back(aux_order_[aux_cursor_++]);
    }
    return aux_.batch_images(idx);
}

void ForaAttacker::on_message(const protocol::Message& msg) {
    recorder_.on_message(msg);
    if (msg.kind != protocol::MessageKind::smashed_data || !cfg_.train_substitute) return;
    if (phase_ != AttackPhase::collecting) throw std::logic_error("attacker already finished collecting");
    if (msg.payload.batch() < 2) return;
    recent_.push_back(msg.payload);
    while (recent_.size() > cfg_.priv_window) recent_.pop_front();
    const std::vector<nn::Tensor> parts(recent_.begin(), recent_.end());
    const nn::Tensor z_priv = parts.size() == 1 ? parts.front() : nn::concat_batch(parts);

    if (!cfg_.flags.no_disc) {
        for (std::size_t i = 0; i < cfg_.disc_steps; ++i) {
            const nn::Tensor z_aux = substitute_.forward(next_aux_batch());
            disc_history_.push_back(disc_step(disc_, z_priv, z_aux, disc_opt_, cfg_.disc_objective));
        }
    }
    for (std::size_t i = 0; i < cfg_.substitute_steps; ++i)
        sub_history_.push_back(substitute_step(substitute_, disc_, z_priv, next_aux_batch(), sub_opt_, cfg_));
}

std::vector<double> ForaAttacker::train_inverse_phase() {
    if (phase_ != AttackPhase::collecting) throw std::logic_error("inverse network already trained");
    inverse_history_ =
        train_inverse(inverse_, substitute_, aux_.images, cfg_.inverse_epochs, cfg_.inverse_batch, inv_opt_, rng_);
    phase_ = AttackPhase::inverse_trained;
    return inverse_history_;
}

nn::Tensor ForaAttacker::reconstruct_snapshot() {
    if (phase_ != AttackPhase::inverse_trained)
        throw std::logic_error("reconstruction requires a trained inverse network");
    return reconstruct(inverse_, recorder_.store());
}

void ForaAttacker::save_checkpoints(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nn::save_archive(dir / "substitute.slla", nn::network_state(substitute_));
    nn::save_archive(dir / "discriminator.slla", nn::network_state(disc_));
    nn::save_archive(dir / "inverse.slla", nn::network_state(inverse_));
}

void ForaAttacker::load_checkpoints(const std::filesystem::path& dir) {
    nn::load_network_state(substitute_, nn::load_archive(dir / "substitute.slla"));
    nn::load_network_state(disc_, nn::load_archive(dir / "discriminator.slla"));
    nn::load_network_state(inverse_, nn::load_archive(dir / "inverse.slla"));
}

}  // namespace sll::attack
