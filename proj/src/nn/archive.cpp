#include "sll/nn/archive.hpp"

#include <fstream>
#include <iterator>

#include "sll/nn/byte_io.hpp"

namespace sll::nn {
namespace {
constexpr std::uint32_t kArchiveMagic = 0x414C4C53;  // "SLLA" little-endian
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

std::vector<std::uint8_t> encode_archive(std::span<const Tensor> tensors) {
    ByteWriter w;
    w.u32(kArchiveMagic);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.rank() > kMaxRank) throw std::invalid_argument("archive: rank > 8");
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.values()) w.f32(static_cast<float>(v));
    }
    return std::move(w.bytes());
}

std::vector<Tensor> decode_archive(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.u32() != kArchiveMagic) throw std::runtime_error("archive: bad magic");
    const std::uint32_t count = r.u32();
    std::vector<Tensor> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t rank = r.u32();
        if (rank > kMaxRank) throw std::runtime_error("archive: rank > 8");
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
        const std::size_t n = shape_size(shape);
        r.need(n * 4);
        std::vector<double> values(n);
        for (auto& v : values) v = r.f32();
        out.emplace_back(std::move(shape), std::move(values));
    }
    if (r.remaining() != 0) throw std::runtime_error("archive: trailing bytes");
    return out;
}

std::vector<Tensor> network_state(Network& net) {
    std::vector<Tensor> out;
    for (auto* p : net.parameters()) out.push_back(p->value);
    for (auto* b : net.buffers()) out.push_back(*b);
    return out;
}

void load_network_state(Network& net, std::span<const Tensor> state) {
    auto params = net.parameters();
    auto buffers = net.buffers();
    if (state.size() != params.size() + buffers.size())
        throw std::invalid_argument("archive does not match network layout");
    std::size_t k = 0;
    for (auto* p : params) {
        require_same_shape(p->value, state[k], "load_network_state");
        p->value = state[k++];
    }
    for (auto* b : buffers) {
        require_same_shape(*b, state[k], "load_network_state");
        *b = state[k++];
    }
}

void save_archive(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    const auto bytes = encode_archive(tensors);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Tensor> load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_archive(bytes);
}

}  // namespace sll::nn
