#pragma once

#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sll/attack/mmd.hpp"
#include "sll/data/dataset.hpp"
#include "sll/nn/network.hpp"
#include "sll/nn/optimizer.hpp"
#include "sll/protocol/hooks.hpp"
#include "sll/protocol/snapshot.hpp"

namespace sll::attack {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] inside logs.
inline constexpr double kProbFloor = 1e-7;

struct AblationFlags {
    bool no_mkmmd = false;
    bool no_disc = false;
};

/// How D is trained. Both push D(z_priv) -> 1 and D(z_aux) -> 0.
///   minimax: minimise log(1 - D(z_priv)) + log D(z_aux)
///   bce:     minimise -log D(z_priv) - log(1 - D(z_aux))
/// The minimax form stops learning once D is confidently wrong on either
/// side; the bce form keeps its gradient there.
enum class DiscObjective { minimax, bce };
std::string to_string(DiscObjective o);
DiscObjective disc_objective_from_string(const std::string& name);

struct AttackConfig {
    nn::OptimizerConfig substitute_optimizer;
    nn::OptimizerConfig disc_optimizer;
    nn::OptimizerConfig inverse_optimizer;
    double disc_weight = 1.0;
    double mmd_weight = 1.0;
    std::size_t kernel_count = 5;
    std::size_t disc_steps = 1;        // per observed SmashedData batch
    std::size_t substitute_steps = 1;  // per observed SmashedData batch
    std::size_t aux_batch = 32;
    /// Number of most recent SmashedData batches pooled as the private
    /// side of D and MMD.
    std::size_t priv_window = 1;
    std::size_t inverse_epochs = 50;
    std::size_t inverse_batch = 32;
    AblationFlags flags;
    /// false replaces log(1 - D) in the substitute objective by -log D,
    /// which has the same optimum but does not vanish when D is confident.
    bool saturating_disc = true;
    DiscObjective disc_objective = DiscObjective::bce;
    /// false leaves the substitute at its initialization (the no-training
    /// baseline); the inverse network is still trained through it.
    bool train_substitute = true;

    void validate() const;
};

/// D's loss under `objective`, each side averaged over its own rows, with
/// D = sigmoid of the network's [N,1] output.
struct DiscLoss {
    double value = 0.0;
    nn::Tensor grad_scores;  // d value / d raw scores, [N_priv + N_aux, 1]
};
DiscLoss disc_loss(const nn::Tensor& scores_priv_then_aux, std::size_t n_priv,
                   DiscObjective objective = DiscObjective::minimax);

/// One optimizer step on D. Returns the loss before the step.
double disc_step(nn::Network& disc, const nn::Tensor& z_priv, const nn::Tensor& z_aux, nn::Optimizer& opt,
                 DiscObjective objective = DiscObjective::minimax);

struct SubstituteLosses {
    double disc = 0.0;  // mean log(1 - D(F_sub(x_aux)))
    double mmd = 0.0;   // mmd2(F_sub(x_aux), z_priv)
};

/// One optimizer step on the substitute against a frozen D and a constant
/// z_priv. With both terms ablated nothing is updated.
SubstituteLosses substitute_step(nn::Network& substitute, nn::Network& disc, const nn::Tensor& z_priv,
                                 const nn::Tensor& x_aux, nn::Optimizer& opt, const AttackConfig& cfg);

/// Trains `inverse` to map substitute features of the auxiliary images back
/// to the images under MSE. The substitute is evaluated once, in eval mode.
/// Returns the mean loss of each epoch.
std::vector<double> train_inverse(nn::Network& inverse, nn::Network& substitute, const nn::Tensor& x_aux,
                                  std::size_t epochs, std::size_t batch, nn::Optimizer& opt, nn::Rng& rng);

/// Maps every snapshot entry through the inverse network, in batch order.
nn::Tensor reconstruct(nn::Network& inverse, const protocol::SnapshotStore& snapshot);

enum class AttackPhase { collecting, inverse_trained };

/// The semi-honest attacker. Attached to the server as an observer, it only
/// reads messages: every SmashedData batch drives one round of D and
/// substitute training on the auxiliary set, and the final epoch's batches
/// form the snapshot.
class ForaAttacker final : public protocol::ServerObserver {
public:
    ForaAttacker(AttackConfig cfg, nn::Network substitute, nn::Network disc, nn::Network inverse,
                 data::ImageDataset aux, std::uint64_t seed);

    void on_message(const protocol::Message& msg) override;

    /// Phase (b). Call once the SL session has finished.
    std::vector<double> train_inverse_phase();
    /// Phase (c). Only valid after train_inverse_phase.
    nn::Tensor reconstruct_snapshot();

    AttackPhase phase() const { return phase_; }
    const AttackConfig& config() const { return cfg_; }
    const protocol::SnapshotStore& snapshot() const { return recorder_.store(); }
    nn::Network& substitute() { return substitute_; }
    nn::Network& discriminator() { return disc_; }
    nn::Network& inverse() { return inverse_; }

    const std::vector<double>& disc_history() const { return disc_history_; }
    const std::vector<SubstituteLosses>& substitute_history() const { return sub_history_; }
    const std::vector<double>& inverse_history() const { return inverse_history_; }

    /// Writes substitute.slla, discriminator.slla and inverse.slla.
    void save_checkpoints(const std::filesystem::path& dir);
    void load_checkpoints(const std::filesystem::path& dir);

private:
    nn::Tensor next_aux_batch();

    AttackConfig cfg_;
    nn::Network substitute_, disc_, inverse_;
    data::ImageDataset aux_;
    nn::Rng rng_;
    nn::Optimizer sub_opt_, disc_opt_, inv_opt_;
    protocol::SnapshotRecorder recorder_;
    std::deque<nn::Tensor> recent_;
    std::vector<std::size_t> aux_order_;
    std::size_t aux_cursor_ = 0;
    AttackPhase phase_ = AttackPhase::collecting;
    std::vector<double> disc_history_;
    std::vector<SubstituteLosses> sub_history_;
    std::vector<double> inverse_history_;
};

}  // namespace sll::attack
