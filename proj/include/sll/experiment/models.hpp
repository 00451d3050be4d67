#pragma once

#include <string>
#include <vector>

#include "sll/nn/network.hpp"
#include "sll/protocol/session.hpp"

namespace sll::experiment {

enum class BlockFamily { vgg, res, dense };
std::string to_string(BlockFamily f);
BlockFamily block_family_from_string(const std::string& name);

/// The target classifier is four VGG-style blocks and a two-layer head:
///   1: conv 3->8,   BN, ReLU, pool   -> 8 x S/2
///   2: conv 8->16,  BN, ReLU, pool   -> 16 x S/4
///   3: conv 16->32, BN, ReLU         -> 32 x S/4
///   4: conv 32->32, BN, ReLU, pool   -> 32 x S/8
///   head: linear -> 64, ReLU, linear -> classes
inline constexpr std::size_t kSplitPoints = 4;

std::vector<nn::LayerSpec> target_block(std::size_t index);
/// Output shape of the first `split_point` blocks for square images of side `image_size`.
nn::Shape smashed_shape(std::size_t split_point, std::size_t image_size);

/// Client gets blocks [1, split_point]; the server the rest. In the
/// label-protected topology the final linear layer moves to the client's
/// top model.
protocol::SplitModel build_target(std::size_t split_point, std::size_t image_size, std::size_t classes,
                                  protocol::Topology topology, nn::Rng& rng);

/// Attacker stand-in for the client: one stage per client block, built from
/// the chosen family, ending in exactly `out` (the observed smashed shape).
nn::Network build_substitute(BlockFamily family, std::size_t split_point, std::size_t image_size,
                             const nn::Shape& out, nn::Rng& rng);

/// Stride-2 conv, a residual block, stride-2 convs down to 1x1, linear -> 1.
nn::Network build_discriminator(const nn::Shape& in, std::size_t width, nn::Rng& rng);

/// One 2x2 transposed conv + ReLU per doubling up to `image_size`, starting
/// at `width` channels and halving each time, then a 3x3 conv to 3 channels
/// and Tanh.
nn::Network build_inverse(const nn::Shape& in, std::size_t image_size, std::size_t width, nn::Rng& rng);

}  // namespace sll::experiment
