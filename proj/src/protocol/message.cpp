#include "sll/protocol/message.hpp"

#include <cmath>

#include "sll/nn/byte_io.hpp"

namespace sll::protocol {
namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'L', 'L', 'F'};
constexpr std::uint8_t kFp64Flag = 0x80;
constexpr std::uint32_t kMaxRank = 8;

bool valid_kind(std::uint8_t k) { return k >= 1 && k <= 5; }

Message decode_from(nn::ByteReader& r) {
    r.need(4);
    for (auto m : kMagic)
        if (r.u8() != m) throw FrameError("frame: bad magic");
    const std::uint8_t kind_byte = r.u8();
    const bool fp64 = (kind_byte & kFp64Flag) != 0;
    const std::uint8_t kind = kind_byte & static_cast<std::uint8_t>(~kFp64Flag);
    if (!valid_kind(kind)) throw FrameError("frame: unknown message kind " + std::to_string(kind));
    Message msg;
    msg.kind = static_cast<MessageKind>(kind);
    msg.batch_id = r.u64();
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) throw FrameError("frame: rank " + std::to_string(rank) + " > 8");
    nn::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = r.u32();
        if (d == 0) throw FrameError("frame: zero dimension");
        shape.push_back(d);
    }
    if (rank > 0) {
        const std::size_t n = nn::shape_size(shape);
        r.need(n * (fp64 ? 8 : 4));
        std::vector<double> values(n);
        for (auto& v : values) v = fp64 ? r.f64() : static_cast<double>(r.f32());
        msg.payload = nn::Tensor(std::move(shape), std::move(values));
    }
    const std::uint8_t has_labels = r.u8();
    if (has_labels > 1) throw FrameError("frame: bad label flag");
    if (has_labels) {
        const std::uint32_t count = r.u32();
        r.need(static_cast<std::size_t>(count) * 4);
        std::vector<int> labels(count);
        for (auto& l : labels) l = r.i32();
        msg.labels = std::move(labels);
    }
    return msg;
}

}  // namespace

std::string to_string(MessageKind kind) {
    switch (kind) {
        case MessageKind::smashed_data: return "SmashedData";
        case MessageKind::gradient_return: return "GradientReturn";
        case MessageKind::top_forward: return "TopForward";
        case MessageKind::top_gradient: return "TopGradient";
        case MessageKind::control: return "Control";
    }
    return "Unknown";
}

Message control_message(ControlCode code, std::uint64_t batch_id, double argument) {
    return Message{MessageKind::control, batch_id,
                   nn::Tensor({2}, {static_cast<double>(static_cast<int>(code)), argument}), std::nullopt};
}

ControlCode control_code(const Message& msg) {
    if (msg.kind != MessageKind::control || msg.payload.size() != 2)
        throw std::invalid_argument("not a coded control message");
    return static_cast<ControlCode>(static_cast<int>(msg.payload[0]));
}

double control_argument(const Message& msg) {
    control_code(msg);
    return msg.payload[1];
}

std::vector<std::uint8_t> frame_encode(const Message& msg, WirePrecision precision) {
    if (!msg.payload.all_finite()) throw FrameError("frame: non-finite payload");
    if (msg.payload.rank() > kMaxRank) throw FrameError("frame: rank > 8");
    const bool fp64 = precision == WirePrecision::fp64;
    nn::ByteWriter w;
    for (auto m : kMagic) w.u8(m);
    w.u8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(msg.kind) | (fp64 ? kFp64Flag : 0)));
    w.u64(msg.batch_id);
    w.u32(static_cast<std::uint32_t>(msg.payload.rank()));
    for (auto d : msg.payload.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : msg.payload.values()) {
        if (fp64)
            w.f64(v);
        else
            w.f32(static_cast<float>(v));
    }
    w.u8(msg.labels ? 1 : 0);
    if (msg.labels) {
        w.u32(static_cast<std::uint32_t>(msg.labels->size()));
        for (int l : *msg.labels) w.i32(l);
    }
    return std::move(w.bytes());
}

Message frame_decode(std::span<const std::uint8_t> bytes) {
    nn::ByteReader r(bytes);
    Message msg;
    try {
        msg = decode_from(r);
    } catch (const nn::TruncatedInput&) {
        throw FrameError("frame: truncated");
    }
    if (r.remaining() != 0) throw FrameError("frame: trailing bytes");
    return msg;
}

std::optional<std::pair<Message, std::size_t>> frame_try_decode(std::span<const std::uint8_t> bytes) {
    nn::ByteReader r(bytes);
    try {
        Message msg = decode_from(r);
        return std::make_pair(std::move(msg), r.position());
    } catch (const nn::TruncatedInput&) {
        return std::nullopt;
    }
}

nn::Tensor wire_round(const nn::Tensor& t, WirePrecision precision) {
    if (precision == WirePrecision::fp64) return t;
    nn::Tensor out = t;
    for (auto& v : out.values()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

}  // namespace sll::protocol
