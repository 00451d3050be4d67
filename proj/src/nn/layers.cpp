#include "sll/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sll::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::string spec_name(const LayerSpec& s) { return to_string(s.kind); }

void check_input(const LayerSpec& spec, const Shape& expected, const Tensor& x) {
    if (x.rank() != expected.size() + 1 || x.sample_shape() != expected || x.batch() == 0)
        throw std::invalid_argument(spec_name(spec) + ": expected input [N]" + shape_string(expected) + ", got " +
                                    shape_string(x.shape()));
}

void require_cache(bool has, const LayerSpec& spec) {
    if (!has) throw std::logic_error(spec_name(spec) + ": backward called before forward");
}

void kaiming_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.values()) v = rng.uniform(-bound, bound);
}

// Geometry of a strided 2-D window sweep over an image of `channels` x
// `height` x `width`, producing `out_h` x `out_w` window positions.
struct Window {
    std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t positions() const { return out_h * out_w; }
};

// image [N, C, H, W] -> columns [C*k*k, N*out_h*out_w]
void im2col(const double* image, std::size_t batch, const Window& g, double* cols) {
    const std::size_t p_total = batch * g.positions();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * p_total;
                for (std::size_t n = 0; n < batch; ++n) {
                    const double* plane = image + (n * g.channels + c) * g.height * g.width;
                    double* dst = row + n * g.positions();
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                        static_cast<std::ptrdiff_t>(g.padding);
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                            static_cast<std::ptrdiff_t>(g.padding);
                            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.height) &&
                                                iw < static_cast<std::ptrdiff_t>(g.width);
                            dst[oh * g.out_w + ow] =
                                inside ? plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)]
                                       : 0.0;
                        }
                    }
                }
            }
}

// Adjoint of im2col: accumulates columns back into a zeroed image.
void col2im(const double* cols, std::size_t batch, const Window& g, double* image) {
    const std::size_t p_total = batch * g.positions();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * p_total;
                for (std::size_t n = 0; n < batch; ++n) {
                    double* plane = image + (n * g.channels + c) * g.height * g.width;
                    const double* src = row + n * g.positions();
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                        static_cast<std::ptrdiff_t>(g.padding);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                            static_cast<std::ptrdiff_t>(g.padding);
                            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
                            plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)] +=
                                src[oh * g.out_w + ow];
                        }
                    }
                }
            }
}

// [N, C, P] <-> [C, N*P]
void nchw_to_cnp(const double* src, std::size_t n, std::size_t c, std::size_t p, double* dst) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + (b * c + ch) * p, p, dst + ch * n * p + b * p);
}

void cnp_to_nchw(const double* src, std::size_t n, std::size_t c, std::size_t p, double* dst) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + ch * n * p + b * p, p, dst + (b * c + ch) * p);
}

class Conv2d final : public Layer {
public:
    Conv2d(const LayerSpec& spec, const Shape& input, Rng& rng)
        : spec_(spec), input_(input), output_(spec.output_shape(input)) {
        geom_ = {input[0], input[1], input[2], spec.kernel, spec.stride, spec.padding, output_[1], output_[2]};
        weight_ = {"weight", Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}), {}};
        if (spec.bias) bias_ = {"bias", Tensor({spec.out_channels}), {}};
        kaiming_uniform(weight_.value, geom_.rows(), rng);
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        batch_ = x.batch();
        const std::size_t positions = batch_ * geom_.positions();
        cols_.assign(geom_.rows() * positions, 0.0);
        im2col(x.data(), batch_, geom_, cols_.data());

        std::vector<double> out_cnp(spec_.out_channels * positions);
        MatrixMap out(out_cnp.data(), static_cast<Eigen::Index>(spec_.out_channels),
                      static_cast<Eigen::Index>(positions));
        out.noalias() = ConstMatrixMap(weight_.value.data(), static_cast<Eigen::Index>(spec_.out_channels),
                                       static_cast<Eigen::Index>(geom_.rows())) *
                        ConstMatrixMap(cols_.data(), static_cast<Eigen::Index>(geom_.rows()),
                                       static_cast<Eigen::Index>(positions));
        if (spec_.bias)
            for (std::size_t c = 0; c < spec_.out_channels; ++c)
                for (std::size_t p = 0; p < positions; ++p) out_cnp[c * positions + p] += bias_.value[c];

        Shape shape{batch_};
        shape.insert(shape.end(), output_.begin(), output_.end());
        Tensor y(shape);
        cnp_to_nchw(out_cnp.data(), batch_, spec_.out_channels, geom_.positions(), y.data());
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!cols_.empty(), spec_);
        check_input(spec_, output_, upstream);
        if (upstream.batch() != batch_) throw std::invalid_argument("conv2d: upstream batch mismatch");
        const std::size_t positions = batch_ * geom_.positions();
        const auto rows = static_cast<Eigen::Index>(geom_.rows());
        const auto cout = static_cast<Eigen::Index>(spec_.out_channels);
        const auto pos = static_cast<Eigen::Index>(positions);

        std::vector<double> g_cnp(spec_.out_channels * positions);
        nchw_to_cnp(upstream.data(), batch_, spec_.out_channels, geom_.positions(), g_cnp.data());
        ConstMatrixMap g(g_cnp.data(), cout, pos);
        ConstMatrixMap cols(cols_.data(), rows, pos);

        weight_.grad = Tensor(weight_.value.shape());
        MatrixMap(weight_.grad.data(), cout, rows).noalias() = g * cols.transpose();
        if (spec_.bias) {
            bias_.grad = Tensor(bias_.value.shape());
            for (std::size_t c = 0; c < spec_.out_channels; ++c) {
                double s = 0.0;
                for (std::size_t p = 0; p < positions; ++p) s += g_cnp[c * positions + p];
                bias_.grad[c] = s;
            }
        }

        std::vector<double> dcols(geom_.rows() * positions);
        MatrixMap(dcols.data(), rows, pos).noalias() =
            ConstMatrixMap(weight_.value.data(), cout, rows).transpose() * g;
        Shape shape{batch_};
        shape.insert(shape.end(), input_.begin(), input_.end());
        Tensor dx(shape);
        col2im(dcols.data(), batch_, geom_, dx.data());
        return dx;
    }

    std::vector<Parameter*> parameters() override {
        if (!spec_.bias) return {&weight_};
        return {&weight_, &bias_};
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

private:
    LayerSpec spec_;
    Shape input_, output_;
    Window geom_{};
    Parameter weight_, bias_;
    std::size_t batch_ = 0;
    std::vector<double> cols_;
};

class ConvTranspose2d final : public Layer {
public:
    ConvTranspose2d(const LayerSpec& spec, const Shape& input, Rng& rng)
        : spec_(spec), input_(input), output_(spec.output_shape(input)) {
        // The sweep runs over the output image; its window positions are the
        // input pixels.
        geom_ = {spec.out_channels, output_[1], output_[2], spec.kernel, spec.stride, spec.padding, input[1], input[2]};
        weight_ = {"weight", Tensor({spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}), {}};
        bias_ = {"bias", Tensor({spec.out_channels}), {}};
        const std::size_t taps = (spec.kernel + spec.stride - 1) / spec.stride;
        kaiming_uniform(weight_.value, spec.in_channels * taps * taps, rng);
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        batch_ = x.batch();
        const std::size_t positions = batch_ * geom_.positions();
        x_cnp_.assign(spec_.in_channels * positions, 0.0);
        nchw_to_cnp(x.data(), batch_, spec_.in_channels, geom_.positions(), x_cnp_.data());

        std::vector<double> cols(geom_.rows() * positions);
        MatrixMap(cols.data(), static_cast<Eigen::Index>(geom_.rows()), static_cast<Eigen::Index>(positions))
            .noalias() = ConstMatrixMap(weight_.value.data(), static_cast<Eigen::Index>(spec_.in_channels),
                                        static_cast<Eigen::Index>(geom_.rows()))
                             .transpose() *
                         ConstMatrixMap(x_cnp_.data(), static_cast<Eigen::Index>(spec_.in_channels),
                                        static_cast<Eigen::Index>(positions));
        Shape shape{batch_};
        shape.insert(shape.end(), output_.begin(), output_.end());
        Tensor y(shape);
        col2im(cols.data(), batch_, geom_, y.data());
        const std::size_t plane = output_[1] * output_[2];
        for (std::size_t n = 0; n < batch_; ++n)
            for (std::size_t c = 0; c < spec_.out_channels; ++c) {
                double* p = y.data() + (n * spec_.out_channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += bias_.value[c];
            }
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!x_cnp_.empty(), spec_);
        check_input(spec_, output_, upstream);
        if (upstream.batch() != batch_) throw std::invalid_argument("conv_transpose2d: upstream batch mismatch");
        const std::size_t positions = batch_ * geom_.positions();
        const auto rows = static_cast<Eigen::Index>(geom_.rows());
        const auto cin = static_cast<Eigen::Index>(spec_.in_channels);
        const auto pos = static_cast<Eigen::Index>(positions);

        std::vector<double> dcols(geom_.rows() * positions);
        im2col(upstream.data(), batch_, geom_, dcols.data());
        ConstMatrixMap dc(dcols.data(), rows, pos);

        weight_.grad = Tensor(weight_.value.shape());
        MatrixMap(weight_.grad.data(), cin, rows).noalias() =
            ConstMatrixMap(x_cnp_.data(), cin, pos) * dc.transpose();
        bias_.grad = Tensor(bias_.value.shape());
        const std::size_t plane = output_[1] * output_[2];
        for (std::size_t n = 0; n < batch_; ++n)
            for (std::size_t c = 0; c < spec_.out_channels; ++c) {
                const double* p = upstream.data() + (n * spec_.out_channels + c) * plane;
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
                bias_.grad[c] += s;
            }

        std::vector<double> dx_cnp(spec_.in_channels * positions);
        MatrixMap(dx_cnp.data(), cin, pos).noalias() = ConstMatrixMap(weight_.value.data(), cin, rows) * dc;
        Shape shape{batch_};
        shape.insert(shape.end(), input_.begin(), input_.end());
        Tensor dx(shape);
        cnp_to_nchw(dx_cnp.data(), batch_, spec_.in_channels, geom_.positions(), dx.data());
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose2d>(*this); }

private:
    LayerSpec spec_;
    Shape input_, output_;
    Window geom_{};
    Parameter weight_, bias_;
    std::size_t batch_ = 0;
    std::vector<double> x_cnp_;
};

class Linear final : public Layer {
public:
    Linear(const LayerSpec& spec, const Shape& input, Rng& rng) : spec_(spec), input_(input) {
        spec_.in_features = shape_size(input);
        weight_ = {"weight", Tensor({spec_.out_features, spec_.in_features}), {}};
        bias_ = {"bias", Tensor({spec_.out_features}), {}};
        kaiming_uniform(weight_.value, spec_.in_features, rng);
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        x_ = x.flattened();
        const auto n = static_cast<Eigen::Index>(x.batch());
        const auto in = static_cast<Eigen::Index>(spec_.in_features);
        const auto out = static_cast<Eigen::Index>(spec_.out_features);
        Tensor y({x.batch(), spec_.out_features});
        MatrixMap ym(y.data(), n, out);
        ym.noalias() = ConstMatrixMap(x_.data(), n, in) * ConstMatrixMap(weight_.value.data(), out, in).transpose();
        for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index c = 0; c < out; ++c) ym(r, c) += bias_.value[static_cast<std::size_t>(c)];
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!x_.empty(), spec_);
        if (upstream.shape() != Shape{x_.batch(), spec_.out_features})
            throw std::invalid_argument("linear: upstream shape mismatch " + shape_string(upstream.shape()));
        const auto n = static_cast<Eigen::Index>(x_.batch());
        const auto in = static_cast<Eigen::Index>(spec_.in_features);
        const auto out = static_cast<Eigen::Index>(spec_.out_features);
        ConstMatrixMap g(upstream.data(), n, out);
        weight_.grad = Tensor(weight_.value.shape());
        MatrixMap(weight_.grad.data(), out, in).noalias() = g.transpose() * ConstMatrixMap(x_.data(), n, in);
        bias_.grad = Tensor(bias_.value.shape());
        for (Eigen::Index c = 0; c < out; ++c) bias_.grad[static_cast<std::size_t>(c)] = g.col(c).sum();
        Shape shape{x_.batch()};
        shape.insert(shape.end(), input_.begin(), input_.end());
        Tensor dx(shape);
        MatrixMap(dx.data(), n, in).noalias() = g * ConstMatrixMap(weight_.value.data(), out, in);
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

private:
    LayerSpec spec_;
    Shape input_;
    Parameter weight_, bias_;
    Tensor x_;
};

class Relu final : public Layer {
public:
    Relu(const LayerSpec& spec, const Shape& input) : spec_(spec), input_(input) {}
    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        x_ = x;
        Tensor y = x;
        for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!x_.empty(), spec_);
        require_same_shape(upstream, x_, "relu backward");
        Tensor dx = upstream;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(x_[i] > 0.0)) dx[i] = 0.0;
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

private:
    LayerSpec spec_;
    Shape input_;
    Tensor x_;
};

class Tanh final : public Layer {
public:
    Tanh(const LayerSpec& spec, const Shape& input) : spec_(spec), input_(input) {}
    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        y_ = x;
        for (auto& v : y_.values()) v = std::tanh(v);
        return y_;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!y_.empty(), spec_);
        require_same_shape(upstream, y_, "tanh backward");
        Tensor dx = upstream;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y_[i] * y_[i];
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }

private:
    LayerSpec spec_;
    Shape input_;
    Tensor y_;
};

class MaxPool2d final : public Layer {
public:
    MaxPool2d(const LayerSpec& spec, const Shape& input)
        : spec_(spec), input_(input), output_(spec.output_shape(input)) {}
    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode) override {
        check_input(spec_, input_, x);
        const std::size_t n = x.batch(), c = input_[0], h = input_[1], w = input_[2];
        const std::size_t oh = output_[1], ow = output_[2], k = spec_.window;
        Tensor y({n, c, oh, ow});
        argmax_.assign(y.size(), 0);
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            const double* src = x.data() + plane * h * w;
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    std::size_t best = (i * k) * w + j * k;
                    for (std::size_t di = 0; di < k; ++di)
                        for (std::size_t dj = 0; dj < k; ++dj) {
                            const std::size_t idx = (i * k + di) * w + (j * k + dj);
                            // Strict comparison keeps the first row-major maximum.
                            if (src[idx] > src[best]) best = idx;
                        }
                    const std::size_t o = plane * oh * ow + i * ow + j;
                    y[o] = src[best];
                    argmax_[o] = plane * h * w + best;
                }
        }
        batch_ = n;
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(batch_ != 0, spec_);
        if (upstream.size() != argmax_.size()) throw std::invalid_argument("maxpool2d: upstream shape mismatch");
        Shape shape{batch_};
        shape.insert(shape.end(), input_.begin(), input_.end());
        Tensor dx(shape);
        for (std::size_t o = 0; o < argmax_.size(); ++o) dx[argmax_[o]] += upstream[o];
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }

private:
    LayerSpec spec_;
    Shape input_, output_;
    std::size_t batch_ = 0;
    std::vector<std::size_t> argmax_;
};

class BatchNorm2d final : public Layer {
public:
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

    BatchNorm2d(const LayerSpec& spec, const Shape& input) : spec_(spec), input_(input) {
        const std::size_t c = input[0];
        gamma_ = {"gamma", Tensor({c}, 1.0), {}};
        beta_ = {"beta", Tensor({c}, 0.0), {}};
        running_mean_ = Tensor({c}, 0.0);
        running_var_ = Tensor({c}, 1.0);
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode mode) override {
        check_input(spec_, input_, x);
        const std::size_t n = x.batch(), c = input_[0], plane = input_[1] * input_[2];
        const double m = static_cast<double>(n * plane);
        if (mode == Mode::train && n * plane < 2)
            throw std::invalid_argument("batchnorm2d: train mode needs more than one value per channel");
        xhat_ = Tensor(x.shape());
        inv_std_.assign(c, 0.0);
        Tensor y(x.shape());
        for (std::size_t ch = 0; ch < c; ++ch) {
            double mean, var;
            if (mode == Mode::train) {
                double s = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const double* p = x.data() + (b * c + ch) * plane;
                    for (std::size_t i = 0; i < plane; ++i) s += p[i];
                }
                mean = s / m;
                double sq = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const double* p = x.data() + (b * c + ch) * plane;
                    for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
                }
                var = sq / m;
                running_mean_[ch] = (1.0 - kMomentum) * running_mean_[ch] + kMomentum * mean;
                running_var_[ch] = (1.0 - kMomentum) * running_var_[ch] + kMomentum * sq / std::max(m - 1.0, 1.0);
            } else {
                mean = running_mean_[ch];
                var = running_var_[ch];
            }
            const double inv = 1.0 / std::sqrt(var + kEps);
            inv_std_[ch] = inv;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xh = (x[off + i] - mean) * inv;
                    xhat_[off + i] = xh;
                    y[off + i] = gamma_.value[ch] * xh + beta_.value[ch];
                }
            }
        }
        mode_ = mode;
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!xhat_.empty(), spec_);
        require_same_shape(upstream, xhat_, "batchnorm2d backward");
        const std::size_t n = xhat_.batch(), c = input_[0], plane = input_[1] * input_[2];
        const double m = static_cast<double>(n * plane);
        gamma_.grad = Tensor(gamma_.value.shape());
        beta_.grad = Tensor(beta_.value.shape());
        Tensor dx(xhat_.shape());
        for (std::size_t ch = 0; ch < c; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += upstream[off + i];
                    sum_gx += upstream[off + i] * xhat_[off + i];
                }
            }
            gamma_.grad[ch] = sum_gx;
            beta_.grad[ch] = sum_g;
            const double scale = gamma_.value[ch] * inv_std_[ch];
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    if (mode_ == Mode::train)
                        dx[off + i] = scale * (upstream[off + i] - sum_g / m - xhat_[off + i] * sum_gx / m);
                    else
                        dx[off + i] = scale * upstream[off + i];
                }
            }
        }
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

private:
    LayerSpec spec_;
    Shape input_;
    Parameter gamma_, beta_;
    Tensor running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
    Mode mode_ = Mode::train;
};

// Sequential chain used inside composite blocks.
class Chain {
public:
    Chain() = default;
    Chain(const Chain& other) {
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    Chain& operator=(const Chain&) = delete;

    void add(const LayerSpec& spec, Shape& shape, Rng& rng) {
        layers_.push_back(make_layer(spec, shape, rng));
        shape = spec.output_shape(shape);
    }

    Tensor forward(Tensor x, Mode mode) {
        for (auto& l : layers_) x = l->forward(x, mode);
        return x;
    }

    Tensor backward(Tensor g) {
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    void collect(std::vector<Parameter*>& params, std::vector<Tensor*>& buffers) {
        for (auto& l : layers_) {
            for (auto* p : l->parameters()) params.push_back(p);
            for (auto* b : l->buffers()) buffers.push_back(b);
        }
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// relu(bn(conv(relu(bn(conv(x))))) + x) with 3x3 same-padding convolutions.
class ResBlock final : public Layer {
public:
    ResBlock(const LayerSpec& spec, const Shape& input, Rng& rng) : spec_(spec), input_(input) {
        const std::size_t c = input[0];
        Shape s = input;
        main_.add(LayerSpec::conv2d(c, c, 3, 1, 1, false), s, rng);
        main_.add(LayerSpec::batchnorm2d(c), s, rng);
        main_.add(LayerSpec::relu(), s, rng);
        main_.add(LayerSpec::conv2d(c, c, 3, 1, 1, false), s, rng);
        main_.add(LayerSpec::batchnorm2d(c), s, rng);
        name_parameters();
    }

    ResBlock(const ResBlock& other) : Layer(other), spec_(other.spec_), input_(other.input_), main_(other.main_) {
        name_parameters();
        sum_ = other.sum_;
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode mode) override {
        check_input(spec_, input_, x);
        sum_ = main_.forward(x, mode);
        sum_ += x;
        Tensor y = sum_;
        for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(!sum_.empty(), spec_);
        require_same_shape(upstream, sum_, "resblock backward");
        Tensor g = upstream;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(sum_[i] > 0.0)) g[i] = 0.0;
        Tensor dx = main_.backward(g);
        dx += g;
        return dx;
    }

    std::vector<Parameter*> parameters() override { return params_; }
    std::vector<Tensor*> buffers() override { return buffers_; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ResBlock>(*this); }

private:
    void name_parameters() {
        params_.clear();
        buffers_.clear();
        main_.collect(params_, buffers_);
    }

    LayerSpec spec_;
    Shape input_;
    Chain main_;
    std::vector<Parameter*> params_;
    std::vector<Tensor*> buffers_;
    Tensor sum_;
};

/// Channel concatenation of x with relu(bn(conv3x3(x))).
class DenseBlock final : public Layer {
public:
    DenseBlock(const LayerSpec& spec, const Shape& input, Rng& rng)
        : spec_(spec), input_(input), output_(spec.output_shape(input)) {
        Shape s = input;
        branch_.add(LayerSpec::conv2d(input[0], spec.out_channels, 3, 1, 1, false), s, rng);
        branch_.add(LayerSpec::batchnorm2d(spec.out_channels), s, rng);
        branch_.add(LayerSpec::relu(), s, rng);
        branch_.collect(params_, buffers_);
    }

    DenseBlock(const DenseBlock& other)
        : Layer(other), spec_(other.spec_), input_(other.input_), output_(other.output_), branch_(other.branch_),
          batch_(other.batch_) {
        branch_.collect(params_, buffers_);
    }

    const LayerSpec& spec() const override { return spec_; }

    Tensor forward(const Tensor& x, Mode mode) override {
        check_input(spec_, input_, x);
        batch_ = x.batch();
        const Tensor h = branch_.forward(x, mode);
        const std::size_t plane = input_[1] * input_[2];
        const std::size_t cin = input_[0], growth = spec_.out_channels;
        Tensor y({batch_, cin + growth, input_[1], input_[2]});
        for (std::size_t n = 0; n < batch_; ++n) {
            std::copy_n(x.data() + n * cin * plane, cin * plane, y.data() + n * (cin + growth) * plane);
            std::copy_n(h.data() + n * growth * plane, growth * plane,
                        y.data() + (n * (cin + growth) + cin) * plane);
        }
        return y;
    }

    Tensor backward(const Tensor& upstream) override {
        require_cache(batch_ != 0, spec_);
        const std::size_t plane = input_[1] * input_[2];
        const std::size_t cin = input_[0], growth = spec_.out_channels;
        if (upstream.size() != batch_ * (cin + growth) * plane)
            throw std::invalid_argument("denseblock: upstream shape mismatch");
        Tensor gx({batch_, cin, input_[1], input_[2]});
        Tensor gh({batch_, growth, input_[1], input_[2]});
        for (std::size_t n = 0; n < batch_; ++n) {
            std::copy_n(upstream.data() + n * (cin + growth) * plane, cin * plane, gx.data() + n * cin * plane);
            std::copy_n(upstream.data() + (n * (cin + growth) + cin) * plane, growth * plane,
                        gh.data() + n * growth * plane);
        }
        gx += branch_.backward(std::move(gh));
        return gx;
    }

    std::vector<Parameter*> parameters() override { return params_; }
    std::vector<Tensor*> buffers() override { return buffers_; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseBlock>(*this); }

private:
    LayerSpec spec_;
    Shape input_, output_;
    Chain branch_;
    std::vector<Parameter*> params_;
    std::vector<Tensor*> buffers_;
    std::size_t batch_ = 0;
};

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                     const LayerSpec& spec) {
    const std::size_t padded = in + 2 * padding;
    require(padded >= kernel, spec_name(spec) + ": kernel larger than padded input");
    return (padded - kernel) / stride + 1;
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::conv_transpose2d: return "conv_transpose2d";
        case LayerKind::linear: return "linear";
        case LayerKind::relu: return "relu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::batchnorm2d: return "batchnorm2d";
        case LayerKind::resblock: return "resblock";
        case LayerKind::denseblock: return "denseblock";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (auto k : {LayerKind::conv2d, LayerKind::conv_transpose2d, LayerKind::linear, LayerKind::relu,
                   LayerKind::tanh, LayerKind::maxpool2d, LayerKind::batchnorm2d, LayerKind::resblock,
                   LayerKind::denseblock})
        if (to_string(k) == name) return k;
    throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.bias = bias;
    return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
    LayerSpec s = conv2d(in, out, kernel, stride, padding);
    s.kind = LayerKind::conv_transpose2d;
    return s;
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.in_features = in;
    s.out_features = out;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::tanh() {
    LayerSpec s;
    s.kind = LayerKind::tanh;
    return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.window = window;
    return s;
}

LayerSpec LayerSpec::batchnorm2d(std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm2d;
    s.in_channels = channels;
    return s;
}

LayerSpec LayerSpec::resblock(std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::resblock;
    s.in_channels = channels;
    return s;
}

LayerSpec LayerSpec::denseblock(std::size_t in, std::size_t growth) {
    LayerSpec s;
    s.kind = LayerKind::denseblock;
    s.in_channels = in;
    s.out_channels = growth;
    return s;
}

Shape LayerSpec::output_shape(const Shape& input) const {
    require(!input.empty(), to_string(kind) + ": empty input shape");
    for (auto d : input) require(d > 0, to_string(kind) + ": zero-sized input dimension");
    auto image = [&] {
        require(input.size() == 3, to_string(kind) + ": expected [C,H,W] input, got " + shape_string(input));
    };
    switch (kind) {
        case LayerKind::conv2d: {
            image();
            require(kernel >= 1 && stride >= 1, "conv2d: kernel and stride must be >= 1");
            require(input[0] == in_channels, "conv2d: expected " + std::to_string(in_channels) +
                                                 " input channels, got " + std::to_string(input[0]));
            require(out_channels >= 1, "conv2d: out_channels must be >= 1");
            return {out_channels, conv_out(input[1], kernel, stride, padding, *this),
                    conv_out(input[2], kernel, stride, padding, *this)};
        }
        case LayerKind::conv_transpose2d: {
            image();
            require(kernel >= 1 && stride >= 1, "conv_transpose2d: kernel and stride must be >= 1");
            require(input[0] == in_channels, "conv_transpose2d: input channel mismatch");
            require(out_channels >= 1, "conv_transpose2d: out_channels must be >= 1");
            const std::size_t h = (input[1] - 1) * stride + kernel, w = (input[2] - 1) * stride + kernel;
            require(h > 2 * padding && w > 2 * padding, "conv_transpose2d: padding consumes the output");
            return {out_channels, h - 2 * padding, w - 2 * padding};
        }
        case LayerKind::linear: {
            const std::size_t in = shape_size(input);
            require(in_features == 0 || in_features == in,
                    "linear: expected " + std::to_string(in_features) + " input features, got " + std::to_string(in));
            require(out_features >= 1, "linear: out_features must be >= 1");
            return {out_features};
        }
        case LayerKind::relu:
        case LayerKind::tanh: return input;
        case LayerKind::maxpool2d: {
            image();
            require(window >= 1, "maxpool2d: window must be >= 1");
            require(input[1] >= window && input[2] >= window, "maxpool2d: window larger than input");
            return {input[0], input[1] / window, input[2] / window};
        }
        case LayerKind::batchnorm2d:
        case LayerKind::resblock: {
            image();
            require(input[0] == in_channels, to_string(kind) + ": channel mismatch");
            return input;
        }
        case LayerKind::denseblock: {
            image();
            require(input[0] == in_channels, "denseblock: channel mismatch");
            require(out_channels >= 1, "denseblock: growth must be >= 1");
            return {input[0] + out_channels, input[1], input[2]};
        }
    }
    throw std::invalid_argument("unknown layer kind");
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input, Rng& rng) {
    spec.output_shape(input);
    switch (spec.kind) {
        case LayerKind::conv2d: return std::make_unique<Conv2d>(spec, input, rng);
        case LayerKind::conv_transpose2d: return std::make_unique<ConvTranspose2d>(spec, input, rng);
        case LayerKind::linear: return std::make_unique<Linear>(spec, input, rng);
        case LayerKind::relu: return std::make_unique<Relu>(spec, input);
        case LayerKind::tanh: return std::make_unique<Tanh>(spec, input);
        case LayerKind::maxpool2d: return std::make_unique<MaxPool2d>(spec, input);
        case LayerKind::batchnorm2d: return std::make_unique<BatchNorm2d>(spec, input);
        case LayerKind::resblock: return std::make_unique<ResBlock>(spec, input, rng);
        case LayerKind::denseblock: return std::make_unique<DenseBlock>(spec, input, rng);
    }
    throw std::invalid_argument("unknown layer kind");
}

}  // namespace sll::nn
