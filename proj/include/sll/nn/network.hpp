#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "sll/nn/layers.hpp"

namespace sll::nn {

/// Ordered chain of layers with a declared per-sample input shape. An empty
/// chain is the identity map.
class Network {
public:
    Network() = default;
    Network(Shape input, const std::vector<LayerSpec>& specs, Rng& rng);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    const Shape& input_shape() const { return input_; }
    const Shape& output_shape() const { return output_; }
    std::vector<LayerSpec> specs() const;
    std::size_t layer_count() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }

    void set_mode(Mode mode) { mode_ = mode; }
    Mode mode() const { return mode_; }

    Tensor forward(const Tensor& x);
    /// Returns the gradient with respect to the last forward input and writes
    /// parameter gradients. Parameters themselves are untouched.
    Tensor backward(const Tensor& upstream);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::vector<Tensor*> buffers();
    std::size_t parameter_count() const;
    void zero_grad();

    /// Moves layers [index, end) into a second network; *this keeps [0, index).
    Network split_off(std::size_t index);
    /// Appends a copy of every layer of `tail`; shapes must chain.
    void append(const Network& tail);

private:
    Shape input_;
    Shape output_;
    std::vector<std::unique_ptr<Layer>> layers_;
    Mode mode_ = Mode::train;
    bool forwarded_ = false;
};

/// Largest |a - b| across all parameters and buffers of two same-shaped networks.
double max_parameter_diff(Network& a, Network& b);

}  // namespace sll::nn
