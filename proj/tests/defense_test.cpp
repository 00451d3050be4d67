#include <gtest/gtest.h>

#include <cmath>

#include "sll/defense/defenses.hpp"
#include "sll/experiment/models.hpp"
#include "sll/protocol/session.hpp"
#include "test_util.hpp"

using namespace sll;
using namespace sll::defense;
using nn::Tensor;
using sll::testing::random_tensor;

namespace {

// Textbook double-centred distance covariance with plain loops.
double dcor_reference(const Tensor& x, const Tensor& z) {
    const std::size_t n = x.batch();
    auto centred = [n](const Tensor& t) {
        std::vector<double> d(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                const auto a = t.row(i), b = t.row(j);
                for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
                d[i * n + j] = std::sqrt(s);
            }
        std::vector<double> row(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) row[i] += d[i * n + j];
            all += row[i];
            row[i] /= static_cast<double>(n);
        }
        all /= static_cast<double>(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] += all - row[i] - row[j];
        return d;
    };
    const auto a = centred(x), b = centred(z);
    double xz = 0, xx = 0, zz = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        xz += a[i] * b[i];
        xx += a[i] * a[i];
        zz += b[i] * b[i];
    }
    if (xx == 0 || zz == 0) return 0.0;
    return std::sqrt(std::max(0.0, xz / std::sqrt(xx * zz)));
}

}  // namespace

TEST(Dcor, SelfCorrelationIsOne) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::Rng rng(seed);
        const Tensor x = random_tensor({32, 6}, rng);
        EXPECT_NEAR(distance_correlation(x, x), 1.0, 1e-10);
    }
}

TEST(Dcor, ConstantSideGivesZero) {
    nn::Rng rng(1);
    const Tensor x = random_tensor({16, 3}, rng);
    const Tensor c({16, 5}, 2.5);
    EXPECT_EQ(distance_correlation(x, c), 0.0);
    EXPECT_EQ(distance_correlation(c, x), 0.0);
    const auto g = distance_correlation_grad(x, c);
    for (double v : g.grad_z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Dcor, IndependentNormalsScoreLow) {
    std::size_t below = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng rng(seed);
        const Tensor x = random_tensor({256, 1}, rng), z = random_tensor({256, 1}, rng);
        below += distance_correlation(x, z) < 0.15;
    }
    EXPECT_GE(below, 19u);
}

TEST(Dcor, MatchesDirectEvaluation) {
    nn::Rng rng(2);
    const Tensor x = random_tensor({11, 3}, rng);
    Tensor z = random_tensor({11, 2, 2}, rng);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.7 * x[i % x.size()];
    EXPECT_NEAR(distance_correlation(x, z), dcor_reference(x, z), 1e-12);
}

TEST(Dcor, SymmetricAndInUnitInterval) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng rng(seed);
        const Tensor x = random_tensor({10, 3}, rng);
        Tensor z = random_tensor({10, 4}, rng);
        for (std::size_t i = 0; i < 10; ++i) z[i * 4] += seed * 0.2 * x[i * 3];
        const double xz = distance_correlation(x, z), zx = distance_correlation(z, x);
        EXPECT_NEAR(xz, zx, 1e-12);
        EXPECT_GE(xz, 0.0);
        EXPECT_LE(xz, 1.0);
    }
}

TEST(Dcor, GradientMatchesFiniteDifferences) {
    nn::Rng rng(3);
    const Tensor x = random_tensor({8, 3}, rng);
    Tensor z = random_tensor({8, 2, 2}, rng);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.5 * x[i % x.size()];
    const Tensor g = distance_correlation_grad(x, z).grad_z;
    const double h = 1e-6;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double keep = z[i];
        z[i] = keep + h;
        const double up = distance_correlation(x, z);
        z[i] = keep - h;
        const double down = distance_correlation(x, z);
        z[i] = keep;
        EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-7);
    }
}

TEST(Dcor, NeedsFourSamples) {
    nn::Rng rng(4);
    EXPECT_THROW(distance_correlation(random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)), std::invalid_argument);
    EXPECT_THROW(distance_correlation(random_tensor({5, 2}, rng), random_tensor({4, 2}, rng)), std::invalid_argument);
}

TEST(DcorCombine, AlphaZeroPassesServerGradientThrough) {
    nn::Rng rng(5);
    const Tensor x = random_tensor({6, 3}, rng), z = random_tensor({6, 4}, rng), g = random_tensor({6, 4}, rng);
    const Tensor out = dcor_combine(x, z, g, 0.0);
    EXPECT_EQ(out, g);
}

TEST(DcorCombine, AlphaOneIgnoresServerGradient) {
    nn::Rng rng(6);
    const Tensor x = random_tensor({6, 3}, rng), z = random_tensor({6, 4}, rng);
    const Tensor a = dcor_combine(x, z, random_tensor({6, 4}, rng), 1.0);
    const Tensor b = dcor_combine(x, z, random_tensor({6, 4}, rng, 100.0), 1.0);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, distance_correlation_grad(x, z).grad_z);
}

TEST(DcorCombine, BlendsLinearly) {
    nn::Rng rng(7);
    const Tensor x = random_tensor({6, 3}, rng), z = random_tensor({6, 4}, rng), g = random_tensor({6, 4}, rng);
    const Tensor d = distance_correlation_grad(x, z).grad_z;
    const Tensor out = dcor_combine(x, z, g, 0.3);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 0.3 * d[i] + 0.7 * g[i], 1e-15);
    EXPECT_THROW(dcor_combine(x, z, g, 1.5), std::invalid_argument);
}

TEST(DcorCombine, AlphaZeroSessionEqualsVanillaSession) {
    nn::Rng drng(8);
    data::SyntheticSpec spec;
    const auto ds = data::gen_synthetic(spec, 40, drng);
    auto build = [] {
        nn::Rng rng(9);
        return experiment::build_target(2, 16, 4, protocol::Topology::label_share, rng);
    };
    protocol::SessionConfig cfg;
    cfg.batch_size = 10;
    cfg.epochs = 2;
    auto plain = protocol::run_training(cfg, build(), ds);
    DefenseConfig dc;
    dc.kind = DefenseKind::dcor;
    dc.alpha = 0.0;
    cfg.client_defense = make_defense(dc);
    auto defended = protocol::run_training(cfg, build(), ds);
    EXPECT_EQ(nn::max_parameter_diff(plain.model.client, defended.model.client), 0.0);
    EXPECT_EQ(plain.wire, defended.wire);
}

TEST(Dp, ClipsLongRowsToExactlyC) {
    nn::Rng rng(10);
    Tensor g({2, 4}, {6.0, 8.0, 0.0, 0.0, 0.1, 0.2, 0.0, 0.0});
    const Tensor out = dp_sanitize(g, 1.0, 0.0, rng);
    double n0 = 0.0;
    for (double v : out.row(0)) n0 += v * v;
    EXPECT_NEAR(std::sqrt(n0), 1.0, 1e-15);
    EXPECT_EQ(out[4], 0.1);
    EXPECT_EQ(out[5], 0.2);
}

TEST(Dp, ShortRowsPassUnchangedWithoutNoise) {
    nn::Rng rng(11);
    const Tensor g = random_tensor({5, 3}, rng, 0.1);
    const Tensor out = dp_sanitize(g, 10.0, 0.0, rng);
    EXPECT_EQ(out, g);
}

TEST(Dp, ClippingIsIdempotent) {
    nn::Rng rng(12);
    const Tensor g = random_tensor({8, 6}, rng, 3.0);
    const Tensor once = dp_sanitize(g, 1.5, 0.0, rng);
    const Tensor twice = dp_sanitize(once, 1.5, 0.0, rng);
    EXPECT_EQ(once, twice);
}

TEST(Dp, LaplaceNoiseHasVarianceTwoBSquared) {
    nn::Rng rng(13);
    const Tensor zero({1000, 100});
    const Tensor out = dp_sanitize(zero, 1.0, 0.5, rng);
    double m = 0.0, v = 0.0;
    for (double x : out.values()) m += x;
    m /= static_cast<double>(out.size());
    for (double x : out.values()) v += (x - m) * (x - m);
    v /= static_cast<double>(out.size());
    EXPECT_NEAR(v, 0.5, 0.05);
}

TEST(Dp, RejectsBadInput) {
    nn::Rng rng(14);
    Tensor g({1, 2}, {1.0, NAN});
    EXPECT_THROW(dp_sanitize(g, 1.0, 0.0, rng), std::invalid_argument);
    EXPECT_THROW(dp_sanitize(Tensor({1, 2}), 0.0, 0.0, rng), std::invalid_argument);
    EXPECT_THROW(dp_sanitize(Tensor({1, 2}), 1.0, -1.0, rng), std::invalid_argument);
}

TEST(Noise, ZeroSigmaIsIdentity) {
    nn::Rng rng(15);
    const Tensor z = random_tensor({4, 5}, rng);
    EXPECT_EQ(noise_obfuscate(z, 0.0, rng), z);
}

TEST(Noise, PerturbationIsCentred) {
    nn::Rng rng(16);
    const Tensor z = random_tensor({1000, 100}, rng);
    const double sigma = 2.0;
    const Tensor out = noise_obfuscate(z, sigma, rng);
    double m = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) m += out[i] - z[i];
    m /= static_cast<double>(z.size());
    EXPECT_LT(std::abs(m), 3.0 * sigma * std::sqrt(2.0 / static_cast<double>(z.size())));
}

TEST(DefenseConfig, ValidatesRanges) {
    DefenseConfig c;
    c.alpha = 1.2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.clip = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.sigma = -1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.kind = DefenseKind::dp;
    c.laplace_scale = 0.5;
    EXPECT_DOUBLE_EQ(c.nominal_epsilon(), 2.0);
    EXPECT_EQ(make_defense(DefenseConfig{}), nullptr);
    EXPECT_EQ(defense_kind_from_string("noise"), DefenseKind::noise);
    EXPECT_THROW(defense_kind_from_string("bogus"), std::invalid_argument);
}
