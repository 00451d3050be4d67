#include "sll/defense/defenses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace sll::defense {
namespace {

using Mat = Eigen::MatrixXd;

Mat distances(const nn::Tensor& t) {
    const Eigen::Index n = static_cast<Eigen::Index>(t.batch());
    const Eigen::Index d = static_cast<Eigen::Index>(t.sample_size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> p(t.data(), n, d);
    Mat out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i) = (p.row(i) - p.row(j)).norm();
    }
    return out;
}

Mat double_center(const Mat& a) {
    const Eigen::VectorXd row = a.rowwise().mean();
    const Eigen::RowVectorXd col = a.colwise().mean();
    const double all = a.mean();
    Mat c = a;
    c.colwise() -= row;
    c.rowwise() -= col;
    c.array() += all;
    return c;
}

void require_pair(const nn::Tensor& x, const nn::Tensor& z) {
    if (x.batch() != z.batch()) throw std::invalid_argument("dcor: sample counts differ");
    if (x.batch() < 4) throw std::invalid_argument("dcor needs at least 4 samples");
}

class DcorDefense final : public protocol::ClientDefense {
public:
    explicit DcorDefense(double alpha) : alpha_(alpha) {}
    nn::Tensor on_gradient(const nn::Tensor& x, const nn::Tensor& z, const nn::Tensor& grad, nn::Rng&) override {
        last_ = distance_correlation_grad(x, z).value;
        return dcor_combine(x, z, grad, alpha_);
    }
    void annotate(nlohmann::json& r) const override {
        r["defense"] = "dcor";
        r["dcor"] = last_;
        r["alpha"] = alpha_;
    }

private:
    double alpha_;
    double last_ = 0.0;
};

class DpDefense final : public protocol::ClientDefense {
public:
    explicit DpDefense(DefenseConfig cfg) : cfg_(cfg) {}
    nn::Tensor on_gradient(const nn::Tensor&, const nn::Tensor&, const nn::Tensor& grad, nn::Rng& rng) override {
        return dp_sanitize(grad, cfg_.clip, cfg_.laplace_scale, rng);
    }
    void annotate(nlohmann::json& r) const override {
        r["defense"] = "dp";
        r["clip"] = cfg_.clip;
        r["laplace_scale"] = cfg_.laplace_scale;
        if (cfg_.laplace_scale > 0) r["nominal_epsilon"] = cfg_.nominal_epsilon();
    }

private:
    DefenseConfig cfg_;
};

class NoiseDefense final : public protocol::ClientDefense {
public:
    explicit NoiseDefense(double sigma) : sigma_(sigma) {}
    nn::Tensor on_smashed(const nn::Tensor& z, nn::Rng& rng) override { return noise_obfuscate(z, sigma_, rng); }
    void annotate(nlohmann::json& r) const override {
        r["defense"] = "noise";
        r["sigma"] = sigma_;
    }

private:
    double sigma_;
};

}  // namespace

std::string to_string(DefenseKind k) {
    switch (k) {
        case DefenseKind::none: return "none";
        case DefenseKind::dcor: return "dcor";
        case DefenseKind::dp: return "dp";
        case DefenseKind::noise: return "noise";
    }
    return "none";
}

DefenseKind defense_kind_from_string(const std::string& name) {
    for (auto k : {DefenseKind::none, DefenseKind::dcor, DefenseKind::dp, DefenseKind::noise})
        if (to_string(k) == name) return k;
    throw std::invalid_argument("unknown defense: " + name);
}

void DefenseConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("defense: alpha must be in [0, 1]");
    if (!(clip > 0.0)) throw std::invalid_argument("defense: clip must be positive");
    if (!(laplace_scale >= 0.0)) throw std::invalid_argument("defense: laplace_scale must be >= 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("defense: sigma must be >= 0");
}

double DefenseConfig::nominal_epsilon() const {
    return laplace_scale > 0.0 ? clip / laplace_scale : std::numeric_limits<double>::infinity();
}

double distance_correlation(const nn::Tensor& x, const nn::Tensor& z) {
    return distance_correlation_grad(x, z).value;
}

DcorGrad distance_correlation_grad(const nn::Tensor& x, const nn::Tensor& z) {
    require_pair(x, z);
    const double n2 = static_cast<double>(x.batch() * x.batch());
    const Mat bz = distances(z);
    const Mat A = double_center(distances(x)), B = double_center(bz);
    const double vxz = (A.array() * B.array()).sum() / n2;
    const double vxx = A.squaredNorm() / n2, vzz = B.squaredNorm() / n2;

    DcorGrad out;
    out.grad_z = nn::Tensor(z.shape());
    if (vxx <= 0.0 || vzz <= 0.0) return out;
    const double r = std::max(0.0, vxz / std::sqrt(vxx * vzz));
    out.value = std::min(1.0, std::sqrt(r));
    if (out.value == 0.0) return out;

    // dR/db_ij, using d vxz/db = A/n^2 and d vzz/db = 2B/n^2; then the chain
    // through b_ij = |z_i - z_j|.
    const double inv = 1.0 / std::sqrt(vxx * vzz);
    const Mat g = (A * inv - B * (vxz * inv / vzz)) / n2 / (2.0 * out.value);
    const std::size_t n = z.batch(), d = z.sample_size();
    for (std::size_t i = 0; i < n; ++i) {
        double* gi = out.grad_z.data() + i * d;
        const double* zi = z.data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
            const double dist = bz(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (j == i || dist == 0.0) continue;
            const double c = 2.0 * g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / dist;
            const double* zj = z.data() + j * d;
            for (std::size_t k = 0; k < d; ++k) gi[k] += c * (zi[k] - zj[k]);
        }
    }
    return out;
}

nn::Tensor dcor_combine(const nn::Tensor& x, const nn::Tensor& z, const nn::Tensor& server_grad, double alpha) {
    nn::require_same_shape(z, server_grad, "dcor_combine");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("dcor_combine: alpha must be in [0, 1]");
    if (alpha == 0.0) return server_grad;
    nn::Tensor g = distance_correlation_grad(x, z).grad_z;
    g *= alpha;
    if (alpha < 1.0) g += server_grad * (1.0 - alpha);
    return g;
}

nn::Tensor dp_sanitize(const nn::Tensor& grad, double clip, double b, nn::Rng& rng) {
    if (!(clip > 0.0)) throw std::invalid_argument("dp_sanitize: clip must be positive");
    if (!(b >= 0.0)) throw std::invalid_argument("dp_sanitize: noise scale must be >= 0");
    if (!grad.all_finite()) throw std::invalid_argument("dp_sanitize: non-finite gradient");
    nn::Tensor out = grad;
    for (std::size_t n = 0; n < out.batch(); ++n) {
        auto row = out.row(n);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        const double norm = std::sqrt(sq);
        // Rows already clipped may sit an ulp above C; leave them alone so
        // clipping is idempotent.
        if (norm > clip * (1.0 + 1e-12)) {
            const double s = clip / norm;
            for (double& v : row) v *= s;
        }
    }
    if (b > 0.0)
        for (double& v : out.values()) v += rng.laplace(b);
    return out;
}

nn::Tensor noise_obfuscate(const nn::Tensor& z, double sigma, nn::Rng& rng) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("noise_obfuscate: sigma must be >= 0");
    nn::Tensor out = z;
    if (sigma > 0.0)
        for (double& v : out.values()) v += rng.laplace(sigma);
    return out;
}

std::shared_ptr<protocol::ClientDefense> make_defense(const DefenseConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case DefenseKind::none: return nullptr;
        case DefenseKind::dcor: return std::make_shared<DcorDefense>(cfg.alpha);
        case DefenseKind::dp: return std::make_shared<DpDefense>(cfg);
        case DefenseKind::noise: return std::make_shared<NoiseDefense>(cfg.sigma);
    }
    return nullptr;
}

}  // namespace sll::defense
