#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sll/nn/network.hpp"

namespace sll::nn {

// Tensor archive layout (little-endian throughout):
//   4-byte magic "SLLA"
//   4-byte tensor count
//   per tensor: 4-byte rank, rank x 4-byte dims, fp32 values
// Values are stored as fp32; loading widens back to double.

std::vector<std::uint8_t> encode_archive(std::span<const Tensor> tensors);
std::vector<Tensor> decode_archive(std::span<const std::uint8_t> bytes);

/// Parameters followed by buffers, in layer order.
std::vector<Tensor> network_state(Network& net);
void load_network_state(Network& net, std::span<const Tensor> state);

void save_archive(const std::filesystem::path& path, std::span<const Tensor> tensors);
std::vector<Tensor> load_archive(const std::filesystem::path& path);

}  // namespace sll::nn
