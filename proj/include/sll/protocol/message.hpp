#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sll/nn/tensor.hpp"

namespace sll::protocol {

enum class MessageKind : std::uint8_t {
    smashed_data = 1,
    gradient_return = 2,
    top_forward = 3,
    top_gradient = 4,
    control = 5,
};

std::string to_string(MessageKind kind);

/// Element type of tensor payloads on the wire.
enum class WirePrecision { fp32, fp64 };

enum class ControlCode : int { epoch_begin = 1, stop = 2, abort = 3 };

struct Message {
    MessageKind kind = MessageKind::control;
    std::uint64_t batch_id = 0;
    nn::Tensor payload;
    std::optional<std::vector<int>> labels;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Control messages carry [code, argument] as their payload.
Message control_message(ControlCode code, std::uint64_t batch_id, double argument = 0.0);
ControlCode control_code(const Message& msg);
double control_argument(const Message& msg);

struct FrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Frame layout, little-endian:
//   4-byte magic "SLLF"
//   1-byte kind (bit 7 set => fp64 payload, otherwise fp32)
//   8-byte batch_id
//   4-byte rank (<= 8), rank x 4-byte dims
//   payload values (fp32 or fp64), product(dims) of them; rank 0 carries none
//   1-byte label flag; if 1: 4-byte count then count x 4-byte signed labels
std::vector<std::uint8_t> frame_encode(const Message& msg, WirePrecision precision = WirePrecision::fp32);

/// Decodes exactly one frame occupying the whole buffer.
Message frame_decode(std::span<const std::uint8_t> bytes);

/// Decodes one frame from the front of a stream buffer. Returns nullopt when
/// the buffer holds only a prefix of a frame; throws FrameError on bad magic
/// or an invalid header. On success also reports the bytes consumed.
std::optional<std::pair<Message, std::size_t>> frame_try_decode(std::span<const std::uint8_t> bytes);

/// Payload as it appears after a trip through the wire at `precision`.
nn::Tensor wire_round(const nn::Tensor& t, WirePrecision precision);

}  // namespace sll::protocol
