#include "sll/nn/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace sll::nn {

Network::Network(Shape input, const std::vector<LayerSpec>& specs, Rng& rng) : input_(std::move(input)) {
    Shape shape = input_;
    for (const auto& spec : specs) {
        layers_.push_back(make_layer(spec, shape, rng));
        shape = spec.output_shape(shape);
    }
    output_ = shape;
}

Network::Network(const Network& other)
    : input_(other.input_), output_(other.output_), mode_(other.mode_), forwarded_(other.forwarded_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
}

Tensor Network::forward(const Tensor& x) {
    Shape expected{x.batch()};
    expected.insert(expected.end(), input_.begin(), input_.end());
    if (x.rank() == 0 || x.batch() == 0 || x.shape() != expected)
        throw std::invalid_argument("network forward: expected [N]" + shape_string(input_) + ", got " +
                                    shape_string(x.shape()));
    Tensor h = x;
    for (auto& l : layers_) {
        h = l->forward(h, mode_);
        if (!h.all_finite()) throw std::runtime_error("non-finite activation after " + to_string(l->spec().kind));
    }
    forwarded_ = true;
    return h;
}

Tensor Network::backward(const Tensor& upstream) {
    if (!forwarded_) throw std::logic_error("network backward called before forward");
    if (upstream.sample_shape() != output_)
        throw std::invalid_argument("network backward: expected upstream [N]" + shape_string(output_) + ", got " +
                                    shape_string(upstream.shape()));
    Tensor g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
        for (auto* p : l->parameters()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> Network::parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& l : layers_)
        for (auto* p : l->parameters()) out.push_back(p);
    return out;
}

std::vector<Tensor*> Network::buffers() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
        for (auto* b : l->buffers()) out.push_back(b);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
}

void Network::zero_grad() {
    for (auto* p : parameters()) p->grad = Tensor();
}

Network Network::split_off(std::size_t index) {
    if (index > layers_.size()) throw std::out_of_range("split index beyond layer count");
    Network tail;
    Shape shape = input_;
    for (std::size_t i = 0; i < index; ++i) shape = layers_[i]->spec().output_shape(shape);
    tail.input_ = shape;
    tail.output_ = output_;
    tail.mode_ = mode_;
    for (std::size_t i = index; i < layers_.size(); ++i) tail.layers_.push_back(std::move(layers_[i]));
    layers_.resize(index);
    output_ = shape;
    return tail;
}

void Network::append(const Network& tail) {
    if (tail.input_ != output_)
        throw std::invalid_argument("cannot append network with input " + shape_string(tail.input_) +
                                    " after output " + shape_string(output_));
    for (const auto& l : tail.layers_) layers_.push_back(l->clone());
    output_ = tail.output_;
}

double max_parameter_diff(Network& a, Network& b) {
    auto pa = a.parameters(), pb = b.parameters();
    auto ba = a.buffers(), bb = b.buffers();
    if (pa.size() != pb.size() || ba.size() != bb.size())
        throw std::invalid_argument("max_parameter_diff: networks differ in structure");
    double m = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) m = std::max(m, max_abs_diff(pa[i]->value, pb[i]->value));
    for (std::size_t i = 0; i < ba.size(); ++i) m = std::max(m, max_abs_diff(*ba[i], *bb[i]));
    return m;
}

}  // namespace sll::nn
