#include <gtest/gtest.h>

#include <cmath>

#include "sll/detect/scrutinizer.hpp"
#include "test_util.hpp"

using namespace sll;
using namespace sll::detect;
using nn::Tensor;
using sll::testing::random_tensor;

TEST(Similarities, IdenticalRowsAgreeEverywhere) {
    Tensor g({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        g[i * 3] = 1.0;
        g[i * 3 + 1] = -2.0;
        g[i * 3 + 2] = 0.5;
    }
    const std::vector<int> labels{0, 0, 1, 1};
    const auto s = batch_similarities(g, labels);
    EXPECT_NEAR(*s.same, 1.0, 1e-15);
    EXPECT_NEAR(*s.diff, 1.0, 1e-15);
}

TEST(Similarities, OneHotRowsSeparateByLabel) {
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    Tensor g({6, 3});
    for (std::size_t i = 0; i < 6; ++i) g[i * 3 + labels[i]] = 1.0 + static_cast<double>(i);
    const auto s = batch_similarities(g, labels);
    EXPECT_DOUBLE_EQ(*s.same, 1.0);
    EXPECT_DOUBLE_EQ(*s.diff, 0.0);
}

TEST(Similarities, IsotropicGradientsShowNoGap) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng rng(seed);
        const Tensor g = random_tensor({32, 64}, rng);
        std::vector<int> labels(32);
        for (std::size_t i = 0; i < 32; ++i) labels[i] = static_cast<int>(i % 4);
        const auto s = batch_similarities(g, labels);
        EXPECT_LT(std::abs(*s.same - *s.diff), 0.1) << "seed " << seed;
    }
}

TEST(Similarities, MissingPairKindsAreAbsent) {
    nn::Rng rng(1);
    const Tensor g = random_tensor({3, 4}, rng);
    const std::vector<int> distinct{0, 1, 2}, same{5, 5, 5};
    EXPECT_FALSE(batch_similarities(g, distinct).same.has_value());
    EXPECT_FALSE(batch_similarities(g, same).diff.has_value());
}

TEST(Similarities, ZeroRowsAreSkippedUntilTooFewRemain) {
    Tensor g({3, 2}, {1.0, 0.0, 0.0, 0.0, 2.0, 0.0});
    const std::vector<int> labels{0, 1, 0};
    const auto s = batch_similarities(g, labels);
    EXPECT_DOUBLE_EQ(*s.same, 1.0);
    EXPECT_FALSE(s.diff.has_value());
    EXPECT_THROW(batch_similarities(Tensor({3, 2}), labels), std::invalid_argument);
}

TEST(Similarities, ScaleInvariant) {
    nn::Rng rng(2);
    const Tensor g = random_tensor({8, 5}, rng);
    const std::vector<int> labels{0, 1, 0, 1, 2, 2, 0, 1};
    const auto a = batch_similarities(g, labels);
    const auto b = batch_similarities(g * 37.0, labels);
    EXPECT_NEAR(*a.same, *b.same, 1e-14);
    EXPECT_NEAR(*a.diff, *b.diff, 1e-14);
}

TEST(WindowScore, LinearSeriesHasNoFitError) {
    std::vector<double> gaps;
    for (int t = 0; t < 10; ++t) gaps.push_back(0.3 + 0.01 * t);
    const auto s = window_score(gaps, 0.5);
    EXPECT_NEAR(s.fit_rmse, 0.0, 1e-14);
    EXPECT_EQ(s.overlap, 0.0);
    EXPECT_NEAR(s.mean_gap, 0.345, 1e-14);
    EXPECT_NEAR(s.score, 0.345, 1e-14);
}

TEST(WindowScore, AlternatingSeriesIsPenalised) {
    const std::vector<double> gaps{0.1, -0.1, 0.1, -0.1};
    const auto s = window_score(gaps, 0.5);
    EXPECT_NEAR(s.mean_gap, 0.0, 1e-15);
    EXPECT_EQ(s.overlap, 0.5);
    // Least-squares line through (0,.1),(1,-.1),(2,.1),(3,-.1): slope -0.04, intercept 0.06.
    const double r[] = {0.04, -0.12, 0.12, -0.04};
    double rss = 0.0;
    for (double v : r) rss += v * v;
    EXPECT_NEAR(s.fit_rmse, std::sqrt(rss / 4.0), 1e-14);
    EXPECT_NEAR(s.score, -0.25 - s.fit_rmse, 1e-14);
}

namespace {

Tensor one_hot_grads(const std::vector<int>& labels, nn::Rng& rng, double noise) {
    Tensor g({labels.size(), 8});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        g[i * 8 + static_cast<std::size_t>(labels[i])] = 1.0;
        for (std::size_t k = 0; k < 8; ++k) g[i * 8 + k] += noise * rng.normal();
    }
    return g;
}

}  // namespace

TEST(Scrutinizer, SilentDuringWarmupAndUntilWindowFills) {
    GsConfig cfg;
    cfg.warmup = 3;
    cfg.window = 4;
    GradientScrutinizer gs(cfg);
    nn::Rng rng(3);
    const std::vector<int> labels{0, 1, 0, 1};
    for (int i = 0; i < 3 + 3; ++i) EXPECT_FALSE(gs.on_gradient(one_hot_grads(labels, rng, 0.1), labels));
    EXPECT_EQ(gs.window().size(), 3u);
    const auto v = gs.on_gradient(one_hot_grads(labels, rng, 0.1), labels);
    ASSERT_TRUE(v.has_value());
    EXPECT_FALSE(v->attack);
    EXPECT_TRUE(gs.window().empty());
    EXPECT_EQ(gs.decisions().size(), 1u);
}

TEST(Scrutinizer, LabelBlindGradientsTriggerAnAttackVerdict) {
    GsConfig cfg;
    cfg.warmup = 0;
    GradientScrutinizer gs(cfg);
    nn::Rng rng(4);
    std::vector<int> labels(16);
    for (std::size_t i = 0; i < 16; ++i) labels[i] = static_cast<int>(i % 4);
    std::optional<protocol::MonitorVerdict> v;
    for (std::size_t i = 0; i < cfg.window; ++i) v = gs.on_gradient(random_tensor({16, 32}, rng), labels);
    ASSERT_TRUE(v.has_value());
    EXPECT_TRUE(v->attack);
    EXPECT_NEAR(gs.decisions().back().mean_gap, 0.0, 0.05);
    EXPECT_NEAR(gs.decisions().back().overlap, 0.5, 0.3);
}

TEST(Scrutinizer, VerdictIsScaleInvariant) {
    GsConfig cfg;
    cfg.warmup = 0;
    cfg.window = 5;
    GradientScrutinizer a(cfg), b(cfg);
    nn::Rng rng(5);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    for (int i = 0; i < 5; ++i) {
        const Tensor g = one_hot_grads(labels, rng, 0.5);
        const auto va = a.on_gradient(g, labels), vb = b.on_gradient(g * 0.001, labels);
        ASSERT_EQ(va.has_value(), vb.has_value());
        if (va) {
            EXPECT_EQ(va->attack, vb->attack);
            EXPECT_NEAR(va->score, vb->score, 1e-12);
        }
    }
}

TEST(GsConfig, RejectsBadValues) {
    GsConfig c;
    c.window = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.lambda = -0.1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
