#include "sll/experiment/models.hpp"

#include <stdexcept>

namespace sll::experiment {
namespace {

using nn::LayerSpec;

void require_split(std::size_t split_point) {
    if (split_point < 1 || split_point > kSplitPoints)
        throw std::invalid_argument("split point must be in 1.." + std::to_string(kSplitPoints));
}

std::size_t log2_exact(std::size_t v) {
    std::size_t k = 0;
    while ((std::size_t{1} << k) < v) ++k;
    if ((std::size_t{1} << k) != v) throw std::invalid_argument("size ratio must be a power of two");
    return k;
}

}  // namespace

std::string to_string(BlockFamily f) {
    switch (f) {
        case BlockFamily::vgg: return "vgg";
        case BlockFamily::res: return "res";
        case BlockFamily::dense: return "dense";
    }
    return "vgg";
}

BlockFamily block_family_from_string(const std::string& name) {
    if (name == "vgg") return BlockFamily::vgg;
    if (name == "res") return BlockFamily::res;
    if (name == "dense") return BlockFamily::dense;
    throw std::invalid_argument("unknown block family: " + name);
}

std::vector<LayerSpec> target_block(std::size_t index) {
    switch (index) {
        case 1:
            return {LayerSpec::conv2d(3, 8, 3, 1, 1, false), LayerSpec::batchnorm2d(8), LayerSpec::relu(),
                    LayerSpec::maxpool2d(2)};
        case 2:
            return {LayerSpec::conv2d(8, 16, 3, 1, 1, false), LayerSpec::batchnorm2d(16), LayerSpec::relu(),
                    LayerSpec::maxpool2d(2)};
        case 3:
            return {LayerSpec::conv2d(16, 32, 3, 1, 1, false), LayerSpec::batchnorm2d(32), LayerSpec::relu()};
        case 4:
            return {LayerSpec::conv2d(32, 32, 3, 1, 1, false), LayerSpec::batchnorm2d(32), LayerSpec::relu(),
                    LayerSpec::maxpool2d(2)};
        default: throw std::invalid_argument("target block index out of range");
    }
}

nn::Shape smashed_shape(std::size_t split_point, std::size_t image_size) {
    require_split(split_point);
    nn::Shape s{3, image_size, image_size};
    for (std::size_t b = 1; b <= split_point; ++b)
        for (const auto& spec : target_block(b)) s = spec.output_shape(s);
    return s;
}

protocol::SplitModel build_target(std::size_t split_point, std::size_t image_size, std::size_t classes,
                                  protocol::Topology topology, nn::Rng& rng) {
    require_split(split_point);
    std::vector<LayerSpec> client, server;
    for (std::size_t b = 1; b <= kSplitPoints; ++b) {
        auto block = target_block(b);
        (b <= split_point ? client : server).insert((b <= split_point ? client : server).end(), block.begin(),
                                                    block.end());
    }
    const nn::Shape smashed = smashed_shape(split_point, image_size);
    nn::Shape end = smashed;
    for (const auto& spec : server) end = spec.output_shape(end);
    server.push_back(LayerSpec::linear(nn::shape_size(end), 64));
    server.push_back(LayerSpec::relu());

    protocol::SplitModel m;
    m.client = nn::Network({3, image_size, image_size}, client, rng);
    if (topology == protocol::Topology::label_protected) {
        m.server = nn::Network(smashed, server, rng);
        m.top = nn::Network({64}, {LayerSpec::linear(64, classes)}, rng);
    } else {
        server.push_back(LayerSpec::linear(64, classes));
        m.server = nn::Network(smashed, server, rng);
    }
    return m;
}

nn::Network build_substitute(BlockFamily family, std::size_t split_point, std::size_t image_size,
                             const nn::Shape& out, nn::Rng& rng) {
    require_split(split_point);
    if (out.size() != 3) throw std::invalid_argument("substitute output must be [C,H,W]");
    const std::size_t pools = log2_exact(image_size / out[1]);
    const std::size_t stages = std::max(split_point, pools);
    const std::size_t c_out = out[0];
    const std::size_t c_mid = std::max<std::size_t>(8, c_out / 2);

    std::vector<LayerSpec> specs;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < stages; ++i) {
        const std::size_t cout = i + 1 == stages ? c_out : c_mid;
        switch (family) {
            case BlockFamily::vgg:
                specs.push_back(LayerSpec::conv2d(cin, cout, 3, 1, 1, false));
                break;
            case BlockFamily::res:
                specs.push_back(LayerSpec::conv2d(cin, cout, 3, 1, 1, false));
                specs.push_back(LayerSpec::batchnorm2d(cout));
                specs.push_back(LayerSpec::relu());
                specs.push_back(LayerSpec::resblock(cout));
                specs.push_back(LayerSpec::conv2d(cout, cout, 1, 1, 0, false));
                break;
            case BlockFamily::dense:
                specs.push_back(LayerSpec::denseblock(cin, 8));
                specs.push_back(LayerSpec::conv2d(cin + 8, cout, 1, 1, 0, false));
                break;
        }
        specs.push_back(LayerSpec::batchnorm2d(cout));
        specs.push_back(LayerSpec::relu());
        // Pools go to the last stages so early stages see full resolution.
        if (i + pools >= stages) specs.push_back(LayerSpec::maxpool2d(2));
        cin = cout;
    }
    nn::Network net({3, image_size, image_size}, specs, rng);
    if (net.output_shape() != out)
        throw std::logic_error("substitute builder produced " + nn::shape_string(net.output_shape()));
    return net;
}

nn::Network build_discriminator(const nn::Shape& in, std::size_t width, nn::Rng& rng) {
    if (in.size() != 3) throw std::invalid_argument("discriminator input must be [C,H,W]");
    std::vector<LayerSpec> specs;
    nn::Shape s = in;
    auto add = [&](LayerSpec spec) {
        s = spec.output_shape(s);
        specs.push_back(spec);
    };
    add(LayerSpec::conv2d(in[0], width, 3, s[1] > 1 ? 2 : 1, 1));
    add(LayerSpec::relu());
    add(LayerSpec::resblock(width));
    while (s[1] > 1) {
        add(LayerSpec::conv2d(width, width, 3, 2, 1));
        add(LayerSpec::relu());
    }
    add(LayerSpec::linear(nn::shape_size(s), 1));
    return nn::Network(in, specs, rng);
}

nn::Network build_inverse(const nn::Shape& in, std::size_t image_size, std::size_t width, nn::Rng& rng) {
    if (in.size() != 3) throw std::invalid_argument("inverse input must be [C,H,W]");
    const std::size_t ups = log2_exact(image_size / in[1]);
    std::vector<LayerSpec> specs;
    std::size_t c = in[0];
    std::size_t next = std::max<std::size_t>(width, 8);
    for (std::size_t i = 0; i < ups; ++i, next = std::max<std::size_t>(8, next / 2)) {
        specs.push_back(LayerSpec::conv_transpose2d(c, next, 2, 2, 0));
        specs.push_back(LayerSpec::relu());
        c = next;
    }
    specs.push_back(LayerSpec::conv2d(c, 3, 3, 1, 1));
    specs.push_back(LayerSpec::tanh());
    return nn::Network(in, specs, rng);
}

}  // namespace sll::experiment
