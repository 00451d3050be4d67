#include "sll/attack/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace sll::attack {
namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Mat> rows_of(const nn::Tensor& t) {
    return {t.data(), static_cast<Eigen::Index>(t.batch()), static_cast<Eigen::Index>(t.sample_size())};
}

Mat squared_distances(const Mat& a, const Mat& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    Mat d = (-2.0 * a * b.transpose()).eval();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

}  // namespace

void KernelSet::validate() const {
    if (weights.empty() || weights.size() != two_sigma_sq.size())
        throw std::invalid_argument("kernel set: need one weight per bandwidth");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("kernel set: weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("kernel set: weights must sum to 1");
    for (std::size_t i = 0; i < two_sigma_sq.size(); ++i) {
        if (!(two_sigma_sq[i] > 0.0) || !std::isfinite(two_sigma_sq[i]))
            throw std::invalid_argument("kernel set: degenerate bandwidth");
        for (std::size_t j = 0; j < i; ++j)
            if (two_sigma_sq[i] == two_sigma_sq[j]) throw std::invalid_argument("kernel set: bandwidths must be distinct");
    }
}

KernelSet KernelSet::ladder(double base, std::size_t m) {
    if (m == 0) throw std::invalid_argument("kernel set: m must be positive");
    KernelSet k;
    const int mid = static_cast<int>((m + 1) / 2);
    for (std::size_t j = 1; j <= m; ++j) {
        k.two_sigma_sq.push_back(base * std::ldexp(1.0, static_cast<int>(j) - mid));
        k.weights.push_back(1.0 / static_cast<double>(m));
    }
    k.validate();
    return k;
}

double median_distance(const nn::Tensor& points) {
    if (points.batch() < 2) throw std::invalid_argument("median distance needs at least 2 points");
    const Mat p = rows_of(points);
    const Mat d2 = squared_distances(p, p);
    std::vector<double> d;
    for (Eigen::Index i = 0; i < d2.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d2.cols(); ++j) d.push_back(std::sqrt(d2(i, j)));
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (d.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(d.begin(), mid);
    return 0.5 * (lower + upper);
}

double median_bandwidth(const nn::Tensor& a, const nn::Tensor& b) {
    const std::vector<nn::Tensor> parts{a.flattened(), b.flattened()};
    const double med = median_distance(nn::concat_batch(parts));
    return med > 0.0 ? med * med : 1.0;
}

KernelSet median_kernels(const nn::Tensor& a, const nn::Tensor& b, std::size_t m) {
    return KernelSet::ladder(median_bandwidth(a, b), m);
}

MmdResult mmd2(const nn::Tensor& a, const nn::Tensor& b, const KernelSet& k, bool want_grad) {
    k.validate();
    if (a.batch() < 2 || b.batch() < 2) throw std::invalid_argument("mmd2 needs at least 2 rows per set");
    if (a.sample_size() != b.sample_size())
        throw std::invalid_argument("mmd2: feature dimension mismatch " + nn::shape_string(a.shape()) + " vs " +
                                    nn::shape_string(b.shape()));
    const Mat A = rows_of(a), B = rows_of(b);
    const double n = static_cast<double>(A.rows()), m = static_cast<double>(B.rows());
    const Mat daa = squared_distances(A, A), dbb = squared_distances(B, B), dab = squared_distances(A, B);

    MmdResult out;
    Mat ga;
    if (want_grad) ga = Mat::Zero(A.rows(), A.cols());
    for (std::size_t j = 0; j < k.size(); ++j) {
        const double s = k.two_sigma_sq[j], w = k.weights[j];
        const Mat kaa = (-daa / s).array().exp().matrix();
        const Mat kbb = (-dbb / s).array().exp().matrix();
        const Mat kab = (-dab / s).array().exp().matrix();
        out.value += w * (kaa.sum() / (n * n) + kbb.sum() / (m * m) - 2.0 * kab.sum() / (n * m));
        if (want_grad) {
            // d/da_i of k(a_i, y) is -2 k (a_i - y) / s.
            const double caa = -4.0 * w / (s * n * n), cab = 4.0 * w / (s * n * m);
            ga += caa * (kaa.rowwise().sum().asDiagonal() * A - kaa * A);
            ga += cab * (kab.rowwise().sum().asDiagonal() * A - kab * B);
        }
    }
    if (want_grad) {
        out.grad_a = nn::Tensor(a.shape());
        Eigen::Map<Mat>(out.grad_a.data(), ga.rows(), ga.cols()) = ga;
    }
    return out;
}

}  // namespace sll::attack
