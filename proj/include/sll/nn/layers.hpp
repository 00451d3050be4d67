#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "sll/nn/rng.hpp"
#include "sll/nn/tensor.hpp"

namespace sll::nn {

enum class LayerKind {
    conv2d,
    conv_transpose2d,
    linear,
    relu,
    tanh,
    maxpool2d,
    batchnorm2d,
    resblock,
    denseblock,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Declarative description of one layer. Which fields matter depends on kind:
///   conv2d / conv_transpose2d: in_channels, out_channels, kernel, stride, padding, bias
///   linear: in_features (0 = infer from input), out_features
///   maxpool2d: window (stride equals window)
///   batchnorm2d / resblock: in_channels
///   denseblock: in_channels, out_channels is the growth (output has in+growth channels)
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    std::size_t window = 2;
    bool bias = true;  // conv2d only; off when a batchnorm follows

    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel = 3, std::size_t stride = 1,
                            std::size_t padding = 1, bool bias = true);
    static LayerSpec conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel = 2,
                                      std::size_t stride = 2, std::size_t padding = 0);
    static LayerSpec linear(std::size_t in, std::size_t out);
    static LayerSpec relu();
    static LayerSpec tanh();
    static LayerSpec maxpool2d(std::size_t window = 2);
    static LayerSpec batchnorm2d(std::size_t channels);
    static LayerSpec resblock(std::size_t channels);
    static LayerSpec denseblock(std::size_t in, std::size_t growth);

    /// Per-sample output shape for a per-sample input shape; throws on
    /// incompatible input or invalid hyperparameters.
    Shape output_shape(const Shape& input) const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class Mode { train, eval };

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// A differentiable stage. forward caches what backward needs; backward
/// writes (not accumulates) parameter gradients and returns the input
/// gradient.
class Layer {
public:
    virtual ~Layer() = default;

    virtual const LayerSpec& spec() const = 0;
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    virtual Tensor backward(const Tensor& upstream) = 0;
    virtual std::vector<Parameter*> parameters() { return {}; }
    /// Non-trainable state that still belongs in a checkpoint (batchnorm
    /// running statistics).
    virtual std::vector<Tensor*> buffers() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
};

/// Builds a layer for the given per-sample input shape with seeded
/// initialization (Kaiming-uniform weights, zero biases, unit batchnorm scale).
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input, Rng& rng);

}  // namespace sll::nn
