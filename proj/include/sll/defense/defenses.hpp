#pragma once

#include <memory>
#include <string>

#include "sll/nn/rng.hpp"
#include "sll/nn/tensor.hpp"
#include "sll/protocol/hooks.hpp"

namespace sll::defense {

enum class DefenseKind { none, dcor, dp, noise };
std::string to_string(DefenseKind k);
DefenseKind defense_kind_from_string(const std::string& name);

struct DefenseConfig {
    DefenseKind kind = DefenseKind::none;
    double alpha = 0.0;          // dcor weight in [0, 1]
    double clip = 1.0;           // dp per-sample clip norm C > 0
    double laplace_scale = 0.0;  // dp noise scale b >= 0
    double sigma = 0.0;          // noise scale on smashed data

    void validate() const;
    /// C / b, reported as a label only; infinite when b == 0.
    double nominal_epsilon() const;
};

/// Sample distance correlation between the rows of x [n, ...] and z [n, ...].
/// Zero when either distance variance is zero. Needs n >= 4.
double distance_correlation(const nn::Tensor& x, const nn::Tensor& z);

struct DcorGrad {
    double value = 0.0;
    nn::Tensor grad_z;  // d dCor / d z, shaped like z
};
DcorGrad distance_correlation_grad(const nn::Tensor& x, const nn::Tensor& z);

/// alpha * d dCor(x, z)/dz + (1 - alpha) * server_grad. alpha == 0 returns
/// server_grad unchanged.
nn::Tensor dcor_combine(const nn::Tensor& x, const nn::Tensor& z, const nn::Tensor& server_grad, double alpha);

/// Rescales each row to norm <= clip, then adds Laplace(0, b) noise per
/// element. Throws on non-finite input.
nn::Tensor dp_sanitize(const nn::Tensor& grad, double clip, double b, nn::Rng& rng);

/// z + Laplace(0, sigma) per element.
nn::Tensor noise_obfuscate(const nn::Tensor& z, double sigma, nn::Rng& rng);

/// Session hook for `cfg`, or nullptr for DefenseKind::none.
std::shared_ptr<protocol::ClientDefense> make_defense(const DefenseConfig& cfg);

}  // namespace sll::defense
