#include <gtest/gtest.h>

#include <cmath>

#include "sll/attack/fora.hpp"
#include "sll/nn/losses.hpp"
#include "sll/experiment/models.hpp"
#include "sll/protocol/session.hpp"
#include "test_util.hpp"

using namespace sll;
using namespace sll::attack;
using nn::LayerSpec;
using nn::Tensor;
using sll::testing::random_tensor;

namespace {

nn::OptimizerConfig sgd(double lr) {
    nn::OptimizerConfig c;
    c.kind = nn::OptimizerKind::sgd_momentum;
    c.learning_rate = lr;
    return c;
}

nn::OptimizerConfig adam(double lr) {
    nn::OptimizerConfig c;
    c.learning_rate = lr;
    return c;
}

// Direct O(n^2) evaluation, written independently of the library.
double mmd2_reference(const Tensor& a, const Tensor& b, const KernelSet& k) {
    auto kmean = [&](const Tensor& x, const Tensor& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.batch(); ++i)
            for (std::size_t j = 0; j < y.batch(); ++j) {
                double d2 = 0.0;
                const auto xi = x.row(i), yj = y.row(j);
                for (std::size_t t = 0; t < xi.size(); ++t) d2 += (xi[t] - yj[t]) * (xi[t] - yj[t]);
                for (std::size_t m = 0; m < k.size(); ++m) s += k.weights[m] * std::exp(-d2 / k.two_sigma_sq[m]);
            }
        return s / static_cast<double>(x.batch() * y.batch());
    };
    return kmean(a, a) + kmean(b, b) - 2.0 * kmean(a, b);
}

}  // namespace

TEST(Mmd, IdenticalSetsGiveExactlyZero) {
    nn::Rng rng(1);
    const Tensor a = random_tensor({32, 8}, rng);
    EXPECT_EQ(mmd2(a, a, median_kernels(a, a)).value, 0.0);
}

TEST(Mmd, TwoPointClosedForm) {
    const Tensor a({2, 3}, {0.5, -1.0, 2.0, 0.5, -1.0, 2.0});
    const Tensor b({2, 3}, {1.5, 0.0, 1.0, 1.5, 0.0, 1.0});
    const KernelSet k{{1.7}, {1.0}};
    const double d2 = 3.0;
    EXPECT_NEAR(mmd2(a, b, k).value, 2.0 - 2.0 * std::exp(-d2 / 1.7), 1e-12);
}

TEST(Mmd, MatchesDirectEvaluation) {
    nn::Rng rng(2);
    const Tensor a = random_tensor({9, 5}, rng), b = random_tensor({7, 5}, rng, 1.5);
    const KernelSet k = median_kernels(a, b);
    EXPECT_NEAR(mmd2(a, b, k).value, mmd2_reference(a, b, k), 1e-12);
}

TEST(Mmd, SymmetricAndNonNegative) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        nn::Rng rng(seed);
        const Tensor a = random_tensor({12, 4}, rng), b = random_tensor({15, 4}, rng, 2.0);
        const KernelSet k = median_kernels(a, b);
        const double ab = mmd2(a, b, k).value, ba = mmd2(b, a, k).value;
        EXPECT_NEAR(ab, ba, 1e-14);
        EXPECT_GE(ab, 0.0);
        for (std::size_t j = 0; j < k.size(); ++j) {
            const KernelSet single{{k.two_sigma_sq[j]}, {1.0}};
            EXPECT_GE(mmd2(a, b, single).value, -1e-15);
        }
    }
}

TEST(Mmd, SeparatesShiftedGaussians) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng rng(seed);
        const Tensor p = random_tensor({256, 8}, rng), q = random_tensor({256, 8}, rng);
        Tensor shifted = random_tensor({256, 8}, rng);
        for (auto& v : shifted.values()) v += 3.0;
        const double same = mmd2(p, q, median_kernels(p, q)).value;
        const double diff = mmd2(p, shifted, median_kernels(p, shifted)).value;
        EXPECT_GE(diff, 10.0 * same) << "seed " << seed;
    }
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
    nn::Rng rng(3);
    Tensor a = random_tensor({6, 4}, rng);
    const Tensor b = random_tensor({5, 4}, rng, 1.3);
    const KernelSet k = median_kernels(a, b);
    const Tensor g = mmd2(a, b, k, true).grad_a;
    ASSERT_EQ(g.shape(), a.shape());
    const double h = 1e-6;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double keep = a[i];
        a[i] = keep + h;
        const double up = mmd2(a, b, k).value;
        a[i] = keep - h;
        const double down = mmd2(a, b, k).value;
        a[i] = keep;
        EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-7);
    }
}

TEST(Mmd, RejectsMismatchedFeatureSizes) {
    nn::Rng rng(4);
    const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 5}, rng);
    EXPECT_THROW(mmd2(a, b, KernelSet{{1.0}, {1.0}}), std::invalid_argument);
}

TEST(Mmd, MedianDistanceCases) {
    EXPECT_DOUBLE_EQ(median_distance(Tensor({2, 2}, {0.0, 0.0, 2.0, 0.0})), 2.0);
    const Tensor same({4, 3}, 0.7);
    EXPECT_EQ(median_bandwidth(same, same), 1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::Rng rng(seed);
        const double m = median_distance(random_tensor({100, 8}, rng));
        EXPECT_NEAR(m / std::sqrt(16.0), 1.0, 0.1);
    }
}

TEST(Mmd, KernelLadderShape) {
    const KernelSet k = KernelSet::ladder(4.0);
    ASSERT_EQ(k.size(), 5u);
    const double expect[] = {1.0, 2.0, 4.0, 8.0, 16.0};
    for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_DOUBLE_EQ(k.two_sigma_sq[j], expect[j]);
        EXPECT_DOUBLE_EQ(k.weights[j], 0.2);
    }
    EXPECT_NO_THROW(k.validate());
}

TEST(Mmd, KernelSetRejectsOffSimplexWeights) {
    EXPECT_THROW((KernelSet{{1.0, 2.0}, {0.7, 0.7}}).validate(), std::invalid_argument);
    EXPECT_THROW((KernelSet{{1.0, 2.0}, {1.2, -0.2}}).validate(), std::invalid_argument);
    EXPECT_THROW((KernelSet{{1.0, 1.0}, {0.5, 0.5}}).validate(), std::invalid_argument);
    EXPECT_THROW((KernelSet{{0.0, 1.0}, {0.5, 0.5}}).validate(), std::invalid_argument);
    EXPECT_THROW(mmd2(Tensor({2, 1}), Tensor({2, 1}), KernelSet{{1.0}, {0.5}}), std::invalid_argument);
}

TEST(Discriminator, HalfEverywhereGivesTwoLogHalf) {
    const Tensor scores({6, 1}, 0.0);  // sigmoid(0) = 0.5
    EXPECT_NEAR(disc_loss(scores, 3).value, 2.0 * std::log(0.5), 1e-12);
    EXPECT_NEAR(disc_loss(scores, 3).value, -1.3863, 1e-4);
}

TEST(Discriminator, LossFallsAsPrivateScoresRiseAndAuxScoresFall) {
    Tensor scores({4, 1}, 0.0);
    double prev = disc_loss(scores, 2).value;
    for (int step = 1; step <= 5; ++step) {
        scores[0] = scores[1] = step;
        scores[2] = scores[3] = -step;
        const double now = disc_loss(scores, 2).value;
        EXPECT_LT(now, prev);
        prev = now;
    }
}

TEST(Discriminator, GradientMatchesFiniteDifferences) {
    nn::Rng rng(5);
    Tensor s = random_tensor({7, 1}, rng, 2.0);
    const Tensor g = disc_loss(s, 3).grad_scores;
    const double h = 1e-6;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double keep = s[i];
        s[i] = keep + h;
        const double up = disc_loss(s, 3).value;
        s[i] = keep - h;
        const double down = disc_loss(s, 3).value;
        s[i] = keep;
        EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-8);
    }
}

TEST(Discriminator, ValueStaysFiniteWhenSaturated) {
    const Tensor s({2, 1}, {80.0, -80.0});
    const double v = disc_loss(s, 1).value;
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 2.0 * std::log(kProbFloor), 1e-6);
}

TEST(Discriminator, OneStepLowersTheLoss) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        nn::Rng rng(seed);
        nn::Network d({4, 2, 2}, {LayerSpec::conv2d(4, 3), LayerSpec::relu(), LayerSpec::linear(12, 1)}, rng);
        const Tensor zp = random_tensor({8, 4, 2, 2}, rng);
        Tensor za = random_tensor({8, 4, 2, 2}, rng);
        for (auto& v : za.values()) v += 0.5;
        nn::Optimizer opt(sgd(1e-2), d);
        const double before = disc_step(d, zp, za, opt);
        const std::vector<Tensor> parts{zp, za};
        const double after = disc_loss(d.forward(nn::concat_batch(parts)), 8).value;
        EXPECT_LT(after, before) << "seed " << seed;
    }
}

TEST(Discriminator, BceFormIsTheNegatedLogLikelihood) {
    const Tensor half({6, 1}, 0.0);
    EXPECT_NEAR(disc_loss(half, 3, DiscObjective::bce).value, -2.0 * std::log(0.5), 1e-12);
    const Tensor s({3, 1}, {1.5, -0.5, 0.25});
    const double expect = -std::log(nn::sigmoid(1.5)) - (std::log(1.0 - nn::sigmoid(-0.5)) +
                                                         std::log(1.0 - nn::sigmoid(0.25))) / 2.0;
    EXPECT_NEAR(disc_loss(s, 1, DiscObjective::bce).value, expect, 1e-12);
}

TEST(Discriminator, BceGradientMatchesFiniteDifferences) {
    nn::Rng rng(8);
    Tensor s = random_tensor({7, 1}, rng, 2.0);
    const Tensor g = disc_loss(s, 4, DiscObjective::bce).grad_scores;
    const double h = 1e-6;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double keep = s[i];
        s[i] = keep + h;
        const double up = disc_loss(s, 4, DiscObjective::bce).value;
        s[i] = keep - h;
        const double down = disc_loss(s, 4, DiscObjective::bce).value;
        s[i] = keep;
        EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-8);
    }
}

TEST(Discriminator, BceKeepsGradientWhereMinimaxStalls) {
    // D says "private" for everything: right on the private row, wrong on
    // the auxiliary row.
    const Tensor s({2, 1}, {12.0, 12.0});
    const double minimax = disc_loss(s, 1, DiscObjective::minimax).grad_scores[1];
    const double bce = disc_loss(s, 1, DiscObjective::bce).grad_scores[1];
    EXPECT_LT(std::abs(minimax), 1e-5);
    EXPECT_GT(bce, 0.99);
}

TEST(Discriminator, ObjectivesShareTheirOptimumDirection) {
    Tensor scores({4, 1}, 0.0);
    double prev = disc_loss(scores, 2, DiscObjective::bce).value;
    for (int step = 1; step <= 5; ++step) {
        scores[0] = scores[1] = step;
        scores[2] = scores[3] = -step;
        const double now = disc_loss(scores, 2, DiscObjective::bce).value;
        EXPECT_LT(now, prev);
        prev = now;
    }
    EXPECT_EQ(disc_objective_from_string(to_string(DiscObjective::bce)), DiscObjective::bce);
    EXPECT_EQ(disc_objective_from_string("minimax"), DiscObjective::minimax);
    EXPECT_THROW(disc_objective_from_string("wgan"), std::invalid_argument);
}

TEST(Substitute, FullyAblatedStepChangesNothing) {
    nn::Rng rng(6);
    nn::Network sub({2, 4, 4}, {LayerSpec::conv2d(2, 3)}, rng);
    nn::Network d({3, 4, 4}, {LayerSpec::linear(48, 1)}, rng);
    const nn::Network before = sub;
    nn::Optimizer opt(adam(1e-1), sub);
    AttackConfig cfg;
    cfg.flags = {true, true};
    const auto losses = substitute_step(sub, d, random_tensor({5, 3, 4, 4}, rng), random_tensor({5, 2, 4, 4}, rng),
                                        opt, cfg);
    EXPECT_EQ(losses.disc, 0.0);
    EXPECT_EQ(losses.mmd, 0.0);
    nn::Network copy = before;
    EXPECT_EQ(nn::max_parameter_diff(sub, copy), 0.0);
}

TEST(Substitute, DiscriminatorIsLeftUntouched) {
    nn::Rng rng(7);
    nn::Network sub({4}, {LayerSpec::linear(4, 3)}, rng);
    nn::Network d({3}, {LayerSpec::linear(3, 1)}, rng);
    nn::Network d0 = d;
    nn::Optimizer opt(adam(1e-2), sub);
    substitute_step(sub, d, random_tensor({6, 3}, rng), random_tensor({6, 4}, rng), opt, AttackConfig{});
    EXPECT_EQ(nn::max_parameter_diff(d, d0), 0.0);
}

TEST(Substitute, MmdOnlyTrainingShrinksTheDiscrepancy) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        nn::Rng rng(seed);
        nn::Network target({4}, {LayerSpec::linear(4, 3)}, rng);
        nn::Network sub({4}, {LayerSpec::linear(4, 3)}, rng);
        nn::Network d({3}, {LayerSpec::linear(3, 1)}, rng);
        const Tensor z_priv = target.forward(random_tensor({64, 4}, rng));
        const Tensor x_aux = random_tensor({64, 4}, rng);
        nn::Optimizer opt(sgd(1.0), sub);
        AttackConfig cfg;
        cfg.flags.no_disc = true;
        std::vector<double> hist;
        for (int i = 0; i < 50; ++i) hist.push_back(substitute_step(sub, d, z_priv, x_aux, opt, cfg).mmd);
        std::size_t rises = 0;
        for (std::size_t i = 1; i < hist.size(); ++i) rises += hist[i] > hist[i - 1] * (1 + 1e-9);
        EXPECT_LT(hist.back(), 0.5 * hist.front()) << "seed " << seed;
        EXPECT_LE(rises, 2u) << "seed " << seed;
    }
}

TEST(Substitute, RejectsShapeMismatch) {
    nn::Rng rng(8);
    nn::Network sub({4}, {LayerSpec::linear(4, 3)}, rng);
    nn::Network d({3}, {LayerSpec::linear(3, 1)}, rng);
    nn::Optimizer opt(adam(1e-2), sub);
    EXPECT_THROW(substitute_step(sub, d, random_tensor({6, 5}, rng), random_tensor({6, 4}, rng), opt, AttackConfig{}),
                 std::invalid_argument);
}

TEST(Inverse, LearnsToUndoAnIdentityMap) {
    nn::Rng rng(9);
    data::SyntheticSpec spec;
    const auto ds = data::gen_synthetic(spec, 256, rng);
    nn::Network identity({3, 16, 16}, {}, rng);
    nn::Network inv({3, 16, 16}, {LayerSpec::conv2d(3, 3, 1, 1, 0)}, rng);
    nn::Optimizer opt(adam(5e-2), inv);
    const auto hist = train_inverse(inv, identity, ds.images, 100, 32, opt, rng);
    EXPECT_LT(hist.back(), 1e-3);
    EXPECT_LT(hist.back(), hist.front());
}

TEST(Inverse, ZeroImagesDriveTheOutputToZero) {
    nn::Rng rng(10);
    const Tensor zeros({64, 3, 16, 16});
    nn::Network identity({3, 16, 16}, {}, rng);
    nn::Network inv = experiment::build_inverse({3, 16, 16}, 16, 8, rng);
    nn::Optimizer opt(adam(1e-2), inv);
    const auto hist = train_inverse(inv, identity, zeros, 30, 16, opt, rng);
    EXPECT_LT(hist.back(), 1e-3);
}

TEST(Inverse, RejectsWrongOutputShape) {
    nn::Rng rng(11);
    nn::Network identity({3, 16, 16}, {}, rng);
    nn::Network inv({3, 16, 16}, {LayerSpec::conv2d(3, 2, 1, 1, 0)}, rng);
    nn::Optimizer opt(adam(1e-2), inv);
    EXPECT_THROW(train_inverse(inv, identity, Tensor({4, 3, 16, 16}), 1, 2, opt, rng), std::invalid_argument);
}

TEST(Reconstruct, OneImagePerSnapshotRowWithinTanhRange) {
    nn::Rng rng(12);
    nn::Network inv = experiment::build_inverse({16, 4, 4}, 16, 8, rng);
    protocol::SnapshotStore snap;
    snap.begin_epoch(0);
    snap.add(1, random_tensor({8, 16, 4, 4}, rng, 5.0));
    const Tensor out = reconstruct(inv, snap);
    EXPECT_EQ(out.shape(), (nn::Shape{8, 3, 16, 16}));
    for (double v : out.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_THROW(reconstruct(inv, protocol::SnapshotStore{}), std::invalid_argument);
}

TEST(Reconstruct, PreservesBatchOrder) {
    nn::Rng rng(13);
    nn::Network inv = experiment::build_inverse({16, 4, 4}, 16, 8, rng);
    protocol::SnapshotStore snap;
    snap.begin_epoch(0);
    const Tensor a = random_tensor({3, 16, 4, 4}, rng), b = random_tensor({2, 16, 4, 4}, rng);
    snap.add(1, a);
    snap.add(2, b);
    const Tensor out = reconstruct(inv, snap);
    inv.set_mode(nn::Mode::eval);
    const Tensor rb = inv.forward(b);
    for (std::size_t i = 0; i < rb.size(); ++i) EXPECT_EQ(out[3 * 768 + i], rb[i]);
}

namespace {

ForaAttacker small_attacker(std::uint64_t seed, std::size_t priv_window = 1) {
    nn::Rng rng(seed);
    const nn::Shape z = experiment::smashed_shape(2, 16);
    data::SyntheticSpec spec;
    auto aux = data::gen_synthetic(spec, 64, rng);
    AttackConfig cfg;
    cfg.aux_batch = 16;
    cfg.inverse_epochs = 2;
    cfg.priv_window = priv_window;
    return ForaAttacker(cfg, experiment::build_substitute(experiment::BlockFamily::vgg, 2, 16, z, rng),
                        experiment::build_discriminator(z, 8, rng), experiment::build_inverse(z, 16, 16, rng),
                        std::move(aux), seed);
}

protocol::SessionConfig small_session() {
    protocol::SessionConfig cfg;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST(Attacker, ReconstructionIsGatedOnInverseTraining) {
    auto atk = small_attacker(1);
    EXPECT_EQ(atk.phase(), AttackPhase::collecting);
    EXPECT_THROW(atk.reconstruct_snapshot(), std::logic_error);
}

TEST(Attacker, ObservingLeavesTheSessionByteIdentical) {
    nn::Rng drng(2);
    data::SyntheticSpec spec;
    const auto priv = data::gen_synthetic(spec, 48, drng);
    auto build = [] {
        nn::Rng rng(3);
        return experiment::build_target(2, 16, 4, protocol::Topology::label_share, rng);
    };
    auto plain = protocol::run_training(small_session(), build(), priv);

    auto atk = std::make_shared<ForaAttacker>(small_attacker(4));
    auto cfg = small_session();
    cfg.server_observers.push_back(atk);
    auto watched = protocol::run_training(cfg, build(), priv);

    EXPECT_EQ(plain.wire, watched.wire);
    EXPECT_EQ(plain.transcript.to_jsonl(), watched.transcript.to_jsonl());
    EXPECT_EQ(nn::max_parameter_diff(plain.model.client, watched.model.client), 0.0);

    EXPECT_EQ(atk->disc_history().size(), 6u);
    EXPECT_EQ(atk->snapshot().sample_count(), 48u);
    atk->train_inverse_phase();
    EXPECT_EQ(atk->phase(), AttackPhase::inverse_trained);
    EXPECT_EQ(atk->reconstruct_snapshot().batch(), 48u);
    EXPECT_THROW(atk->train_inverse_phase(), std::logic_error);
}

TEST(Attacker, PrivateWindowPoolsRecentBatches) {
    nn::Rng drng(2);
    data::SyntheticSpec spec;
    const auto priv = data::gen_synthetic(spec, 48, drng);
    auto observe = [&](std::size_t window) {
        nn::Rng rng(3);
        auto atk = std::make_shared<ForaAttacker>(small_attacker(4, window));
        auto cfg = small_session();
        cfg.server_observers.push_back(atk);
        protocol::run_training(cfg, experiment::build_target(2, 16, 4, protocol::Topology::label_share, rng), priv);
        return atk->disc_history();
    };
    const auto single = observe(1);
    const auto pooled = observe(3);
    ASSERT_EQ(single.size(), pooled.size());
    EXPECT_EQ(single[0], pooled[0]);
    EXPECT_NE(single[1], pooled[1]);
}

TEST(Attacker, RejectsEmptyPrivateWindow) {
    AttackConfig cfg;
    cfg.priv_window = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Attacker, CheckpointsRoundTrip) {
    auto atk = small_attacker(5);
    const auto dir = std::filesystem::temp_directory_path() / "sll_attack_ckpt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    atk.save_checkpoints(dir);
    auto other = small_attacker(6);
    other.load_checkpoints(dir);
    EXPECT_LT(nn::max_parameter_diff(atk.substitute(), other.substitute()), 1e-6);
    EXPECT_LT(nn::max_parameter_diff(atk.discriminator(), other.discriminator()), 1e-6);
    EXPECT_LT(nn::max_parameter_diff(atk.inverse(), other.inverse()), 1e-6);
    std::filesystem::remove_all(dir);
}

TEST(Reconstruct, MatchedSubstituteRecoversPrivateImagesOnLinearToy) {
    nn::Rng rng(14);
    data::SyntheticSpec spec;
    const auto aux = data::gen_synthetic(spec, 256, rng);
    const auto priv = data::gen_synthetic(spec, 16, rng);
    nn::Network client({3, 16, 16}, {LayerSpec::conv2d(3, 3, 1, 1, 0)}, rng);
    nn::Network sub = client;
    nn::Network inv({3, 16, 16}, {LayerSpec::conv2d(3, 3, 1, 1, 0)}, rng);
    nn::Optimizer opt(adam(5e-2), inv);
    train_inverse(inv, sub, aux.images, 100, 32, opt, rng);

    protocol::SnapshotStore snap;
    snap.begin_epoch(0);
    snap.add(1, client.forward(priv.images));
    const Tensor out = reconstruct(inv, snap);
    for (std::size_t i = 0; i < priv.size(); ++i) {
        double se = 0.0;
        const auto a = out.row(i), b = priv.images.row(i);
        for (std::size_t k = 0; k < a.size(); ++k) se += (a[k] - b[k]) * (a[k] - b[k]);
        EXPECT_LT(se / static_cast<double>(a.size()), 1e-2);
    }
}
