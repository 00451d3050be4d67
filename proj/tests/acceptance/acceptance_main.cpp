// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sll/attack/mmd.hpp"
#include "sll/data/dataset.hpp"
#include "sll/defense/defenses.hpp"
#include "sll/experiment/runner.hpp"
#include "sll/metrics/metrics.hpp"
#include "sll/metrics/report.hpp"
#include "sll/nn/grad_check.hpp"
#include "sll/nn/archive.hpp"
#include "sll/nn/losses.hpp"
#include "sll/protocol/session.hpp"

using namespace sll;
using nn::LayerSpec;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Tensor normal(nn::Shape shape, nn::Rng& rng, double mean = 0.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = mean + rng.normal();
    return t;
}

experiment::ExperimentConfig canonical() {
    return experiment::load_config(fs::path(SLL_PRESET_DIR) / "fora-canonical.json");
}

// ---------------------------------------------------------------- 1

struct GradCase {
    const char* name;
    nn::Shape in;
    std::function<nn::Network(nn::Rng&)> build;
};

Verdict gradient_suite() {
    const auto t0 = Clock::now();
    const std::vector<GradCase> cases = {
        {"linear", {5}, [](nn::Rng& r) { return nn::Network({5}, {LayerSpec::linear(5, 4)}, r); }},
        {"relu", {6}, [](nn::Rng& r) { return nn::Network({6}, {LayerSpec::linear(6, 6), LayerSpec::relu()}, r); }},
        {"tanh", {6}, [](nn::Rng& r) { return nn::Network({6}, {LayerSpec::tanh()}, r); }},
        {"conv2d", {2, 5, 5}, [](nn::Rng& r) { return nn::Network({2, 5, 5}, {LayerSpec::conv2d(2, 3)}, r); }},
        {"conv2d_stride2", {2, 6, 6},
         [](nn::Rng& r) { return nn::Network({2, 6, 6}, {LayerSpec::conv2d(2, 3, 3, 2, 1)}, r); }},
        {"conv_transpose2d", {3, 3, 3},
         [](nn::Rng& r) { return nn::Network({3, 3, 3}, {LayerSpec::conv_transpose2d(3, 2)}, r); }},
        {"maxpool2d", {2, 4, 4}, [](nn::Rng& r) { return nn::Network({2, 4, 4}, {LayerSpec::maxpool2d()}, r); }},
        {"batchnorm2d", {3, 3, 3},
         [](nn::Rng& r) { return nn::Network({3, 3, 3}, {LayerSpec::batchnorm2d(3)}, r); }},
        {"resblock", {3, 4, 4}, [](nn::Rng& r) { return nn::Network({3, 4, 4}, {LayerSpec::resblock(3)}, r); }},
        {"denseblock", {2, 4, 4},
         [](nn::Rng& r) { return nn::Network({2, 4, 4}, {LayerSpec::denseblock(2, 2)}, r); }},
        {"discriminator", {4, 4, 4},
         [](nn::Rng& r) { return experiment::build_discriminator({4, 4, 4}, 4, r); }},
        {"inverse", {4, 4, 4}, [](nn::Rng& r) { return experiment::build_inverse({4, 4, 4}, 16, 4, r); }},
    };
    double worst = 0.0;
    std::string worst_case;
    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            nn::Rng rng(seed, nn::stream_id(c.name));
            nn::Network net = c.build(rng);
            // Zero-initialised biases put ReLU inputs exactly on the kink;
            // check at a generic point instead.
            for (auto* p : net.parameters())
                for (auto& v : p->value.values()) v += 0.1 * rng.normal();
            nn::Shape xs{3};
            xs.insert(xs.end(), c.in.begin(), c.in.end());
            const Tensor x = normal(xs, rng);
            nn::Shape os{3};
            os.insert(os.end(), net.output_shape().begin(), net.output_shape().end());
            const nn::CheckLoss loss{nn::CheckLossKind::projection, normal(os, rng), {}};
            const auto r = nn::grad_check(net, x, loss);
            if (r.max_rel_error > worst) {
                worst = r.max_rel_error;
                worst_case = std::string(c.name) + " seed " + std::to_string(seed) + " " + r.worst;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0,
            fmt("max rel error %.2e over 12 architectures x 20 seeds, %.1fs", worst, secs) + " (worst: " +
                worst_case + ")"};
}

// ---------------------------------------------------------------- 2

protocol::SplitModel small_model(bool with_top, std::uint64_t seed) {
    nn::Rng rng(seed);
    protocol::SplitModel m;
    m.client = nn::Network({3, 16, 16},
                           {LayerSpec::conv2d(3, 4, 3, 1, 1, false), LayerSpec::batchnorm2d(4), LayerSpec::relu(),
                            LayerSpec::maxpool2d()},
                           rng);
    m.server = nn::Network(
        {4, 8, 8}, {LayerSpec::conv2d(4, 6), LayerSpec::relu(), LayerSpec::maxpool2d(), LayerSpec::linear(96, with_top ? 8 : 4)},
        rng);
    if (with_top) m.top = nn::Network({8}, {LayerSpec::relu(), LayerSpec::linear(8, 4)}, rng);
    return m;
}

// The same network trained in one piece, in the session's sample order.
nn::Network train_whole(nn::Network net, const data::ImageDataset& ds, const protocol::SessionConfig& cfg) {
    nn::Optimizer opt(cfg.client_optimizer, net);
    nn::Rng order_rng(cfg.seed, nn::stream_id("order"));
    std::size_t it = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto order = protocol::epoch_order(order_rng, ds.size(), cfg.shuffle);
        for (std::size_t b = 0; b < order.size() && it < cfg.max_iterations; b += cfg.batch_size, ++it) {
            const auto idx = std::span(order).subspan(b, std::min(cfg.batch_size, order.size() - b));
            const auto loss = nn::cross_entropy(net.forward(ds.batch_images(idx)), ds.batch_labels(idx));
            net.backward(loss.grad);
            opt.step(net);
        }
    }
    return net;
}

Verdict protocol_equivalence() {
    const auto t0 = Clock::now();
    nn::Rng drng(3);
    const auto ds = data::gen_synthetic(data::SyntheticSpec{}, 100, drng);
    double worst = 0.0;
    std::size_t iterations = 0;
    for (auto topo : {protocol::Topology::label_share, protocol::Topology::label_protected}) {
        for (auto transport : {protocol::TransportKind::in_process_queue, protocol::TransportKind::framed_stream}) {
            const bool top = topo == protocol::Topology::label_protected;
            protocol::SessionConfig cfg;
            cfg.topology = topo;
            cfg.transport = transport;
            cfg.precision = protocol::WirePrecision::fp64;
            cfg.batch_size = 10;
            cfg.epochs = 10;
            cfg.max_iterations = 100;
            cfg.seed = 7;
            cfg.client_optimizer.learning_rate = 5e-3;
            cfg.server_optimizer = cfg.top_optimizer = cfg.client_optimizer;

            auto model = small_model(top, 11);
            nn::Network whole = model.client;
            whole.append(model.server);
            if (top) whole.append(*model.top);
            auto res = protocol::run_training(cfg, std::move(model), ds);
            iterations = res.iterations;
            whole = train_whole(std::move(whole), ds, cfg);

            nn::Network rest = whole.split_off(res.model.client.layer_count());
            double diff = nn::max_parameter_diff(whole, res.model.client);
            if (top) {
                nn::Network head = rest.split_off(res.model.server.layer_count());
                diff = std::max(diff, nn::max_parameter_diff(head, *res.model.top));
            }
            diff = std::max(diff, nn::max_parameter_diff(rest, res.model.server));
            worst = std::max(worst, diff);
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-10 && iterations == 100 && secs < 120.0,
            fmt("max parameter diff %.2e, 2 topologies x 2 transports x %.0f iterations, %.1fs", worst,
                static_cast<double>(iterations), secs)};
}

// ---------------------------------------------------------------- 3

Verdict mmd_sanity() {
    nn::Rng rng(1, nn::stream_id("acceptance_mmd"));
    const Tensor a = normal({256, 8}, rng);
    const double self = attack::mmd2(a, a, attack::median_kernels(a, a)).value;

    std::size_t separated = 0;
    double min_ratio = INFINITY;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng r(seed, nn::stream_id("acceptance_mmd_pairs"));
        const Tensor x = normal({256, 8}, r);
        const Tensor same = normal({256, 8}, r);
        const Tensor shifted = normal({256, 8}, r, 3.0);
        const double far = attack::mmd2(x, shifted, attack::median_kernels(x, shifted)).value;
        const double near = attack::mmd2(x, same, attack::median_kernels(x, same)).value;
        const double ratio = far / near;
        min_ratio = std::min(min_ratio, ratio);
        if (ratio >= 10.0) ++separated;
    }

    // One point per side (each row repeated): mmd2 = 2 - 2 sum_j w_j exp(-|x - y|^2 / s_j).
    const Tensor x({2, 2}, {0.3, -1.2, 0.3, -1.2});
    const Tensor y({2, 2}, {1.1, 0.4, 1.1, 0.4});
    const auto k = attack::KernelSet::ladder(4.0, 5);
    const double d2 = 0.8 * 0.8 + 1.6 * 1.6;
    double closed = 2.0;
    for (std::size_t j = 0; j < k.size(); ++j) closed -= 2.0 * k.weights[j] * std::exp(-d2 / k.two_sigma_sq[j]);
    const double two_point_err = std::abs(attack::mmd2(x, y, k).value - closed);

    return {self == 0.0 && separated == 20 && two_point_err <= 1e-12,
            fmt("mmd2(A,A)=%g, separated %g/20 (min ratio %.1f), two-point error %.1e", self,
                static_cast<double>(separated), min_ratio, two_point_err)};
}

// ---------------------------------------------------------------- 4

Verdict dcor_sanity() {
    nn::Rng rng(2, nn::stream_id("acceptance_dcor"));
    const Tensor x = normal({256, 4}, rng);
    const double self_err = std::abs(defense::distance_correlation(x, x) - 1.0);
    const double with_const = defense::distance_correlation(x, Tensor({256, 3}, 0.7));

    std::size_t below = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng r(seed, nn::stream_id("acceptance_dcor_indep"));
        const Tensor u = normal({256, 1}, r);
        const Tensor v = normal({256, 1}, r);
        const double d = defense::distance_correlation(u, v);
        worst = std::max(worst, d);
        if (d < 0.15) ++below;
    }
    return {self_err <= 1e-10 && with_const == 0.0 && below >= 19,
            fmt("|dCor(X,X)-1|=%.1e, dCor(X,const)=%g, independent below 0.15 in %g/20 (max %.3f)", self_err,
                with_const, static_cast<double>(below), worst)};
}

// ---------------------------------------------------------------- 8

Verdict metric_oracles() {
    nn::Rng rng(8, nn::stream_id("acceptance_metrics"));
    Tensor a({3, 16, 16});
    for (auto& v : a.values()) v = rng.uniform(-0.5, 0.5);
    Tensor b = a;
    for (auto& v : b.values()) v += 0.2;  // 0.1 on the [0, 1] scale
    const double p = metrics::psnr(a, b);
    const double s = metrics::ssim(a, a);

    Tensor imgs({4, 3, 6, 5});
    for (auto& v : imgs.values()) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < imgs.size(); i += 7) imgs[i] = (i % 2) ? 1.0 : -1.0;
    const auto grid = metrics::tile_grid(imgs, 2);
    const auto back = metrics::decode_ppm(metrics::encode_ppm(grid, "acceptance"));
    const bool ppm_ok = back.width == grid.width && back.height == grid.height && back.rgb == grid.rgb;

    std::vector<std::uint8_t> rec(2 * 3073, 0);
    std::fill(rec.begin() + 1, rec.begin() + 3073, 255);
    rec[3073] = 4;
    const auto ds = data::decode_cifar10(rec);
    bool mapping = ds.size() == 2;
    for (double v : ds.images.row(0)) mapping = mapping && v == 1.0;
    for (double v : ds.images.row(1)) mapping = mapping && v == -1.0;
    bool truncated_rejected = false;
    try {
        std::vector<std::uint8_t> cut(rec.begin(), rec.end() - 1);
        data::decode_cifar10(cut);
    } catch (const std::runtime_error&) {
        truncated_rejected = true;
    }
    return {p == 20.0 && s == 1.0 && ppm_ok && mapping && truncated_rejected,
            fmt("psnr %.15g dB, ssim(x,x) %.15g, ", p, s) + "ppm round trip " + (ppm_ok ? "exact" : "differs") +
                ", cifar 255->1/0->-1 " + (mapping ? "ok" : "wrong") + ", truncated " +
                (truncated_rejected ? "rejected" : "accepted")};
}

// ---------------------------------------------------------------- 5

struct ForaSeed {
    double fora_mse, no_mkmmd_mse, no_disc_mse;
    double fora_cos, untrained_cos;
    double fora_ssim;
};

std::vector<ForaSeed> g_fora;  // reused as the undefended baseline of criterion 6

Verdict fora_ordering() {
    const auto t0 = Clock::now();
    std::size_t ok = 0;
    std::string rows;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = canonical();
        cfg.run.seed = seed;
        auto fora = cfg.attack, no_mkmmd = cfg.attack, no_disc = cfg.attack, untrained = cfg.attack;
        no_mkmmd.no_mkmmd = true;
        no_disc.no_disc = true;
        untrained.train_substitute = false;
        const auto res = experiment::execute(cfg, {fora, no_mkmmd, no_disc, untrained});
        auto mse = [&](std::size_t i) { return metrics::MetricsReport{.images = res.attacks[i].images}.mean_mse(); };
        ForaSeed s{mse(0), mse(1), mse(2), res.attacks[0].features.cosine, res.attacks[3].features.cosine,
                   metrics::MetricsReport{.images = res.attacks[0].images}.mean_ssim()};
        g_fora.push_back(s);
        const bool good = s.fora_mse < s.no_mkmmd_mse && s.fora_mse < s.no_disc_mse &&
                          s.fora_cos - s.untrained_cos >= 0.15;
        if (good) ++ok;
        rows += fmt(" [seed %g: mse %.4f vs %.4f/%.4f", static_cast<double>(seed), s.fora_mse, s.no_mkmmd_mse,
                    s.no_disc_mse) +
                fmt(" cos %.3f vs %.3f]", s.fora_cos, s.untrained_cos);
    }
    return {ok >= 4, fmt("%g/5 seeds with lower MSE than both ablations and cosine gain >= 0.15, %.0fs;",
                         static_cast<double>(ok), seconds_since(t0)) +
                         rows};
}

// ---------------------------------------------------------------- 6

double fora_ssim(experiment::ExperimentConfig cfg) {
    const auto res = experiment::execute(cfg);
    return metrics::MetricsReport{.images = res.attacks.at(0).images}.mean_ssim();
}

Verdict defense_trends() {
    const auto t0 = Clock::now();
    double base = 0, noise = 0, dcor = 0, dp = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto cfg = canonical();
        cfg.run.seed = seed;
        base += seed <= g_fora.size() ? g_fora[seed - 1].fora_ssim : fora_ssim(cfg);
        auto c = cfg;
        c.defense = {defense::DefenseKind::noise, 0, 1, 0, 5.0};
        noise += fora_ssim(c);
        c.defense = {defense::DefenseKind::dcor, 0.8, 1, 0, 0};
        dcor += fora_ssim(c);
        c.defense = {defense::DefenseKind::dp, 0, 1.0, 0.5, 0};
        dp += fora_ssim(c);
    }
    base /= 3, noise /= 3, dcor /= 3, dp /= 3;
    const bool noise_ok = base > 0 && noise <= 0.8 * base;
    return {noise_ok && dcor < base && dp < base,
            fmt("mean SSIM over 3 seeds: none %.3f, noise(5) %.3f, dcor(0.8) %.3f", base, noise, dcor) +
                fmt(", dp(1,0.5) %.3f; %.0fs", dp, seconds_since(t0))};
}

// ---------------------------------------------------------------- 7

Verdict detection() {
    const auto t0 = Clock::now();
    std::size_t honest_clean = 0, stub_aborted = 0;
    double min_honest = INFINITY;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = canonical();
        cfg.run.seed = seed;
        cfg.attack.enabled = false;
        cfg.detection.enabled = true;
        const auto honest = experiment::execute(cfg);
        if (honest.session.status == protocol::SessionStatus::completed &&
            honest.monitor->decisions().size() > 0)
            ++honest_clean;
        for (const auto& d : honest.monitor->decisions()) min_honest = std::min(min_honest, d.score);

        cfg.run.server_behavior = protocol::ServerBehavior::label_agnostic_stub;
        const auto stub = experiment::execute(cfg);
        if (stub.session.status == protocol::SessionStatus::detector_aborted) ++stub_aborted;
    }

    // Monitoring is read-only: same run with and without GS, fp64 wire.
    auto cfg = canonical();
    cfg.attack.enabled = false;
    cfg.run.precision = protocol::WirePrecision::fp64;
    cfg.run.max_iterations = 600;
    auto off = experiment::execute(cfg);
    cfg.detection.enabled = true;
    auto on = experiment::execute(cfg);
    bool identical = on.session.iterations == off.session.iterations &&
                     nn::network_state(on.session.model.client) == nn::network_state(off.session.model.client) &&
                     nn::network_state(on.session.model.server) == nn::network_state(off.session.model.server) &&
                     on.session.wire.size() == off.session.wire.size() && on.monitor->decisions().size() > 0;
    for (std::size_t i = 0; identical && i < on.session.wire.size(); ++i)
        identical = on.session.wire[i] == off.session.wire[i];

    return {honest_clean == 5 && stub_aborted == 5 && identical,
            fmt("honest runs without abort %g/5 (lowest window score %.3f), stub aborted %g/5, ",
                static_cast<double>(honest_clean), min_honest, static_cast<double>(stub_aborted)) +
                "GS on/off " + (identical ? "bitwise identical" : "DIFFERENT") +
                fmt("; %.0fs", seconds_since(t0))};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Verdict determinism() {
    const auto t0 = Clock::now();
    const auto cfg = canonical();
    const fs::path root = fs::temp_directory_path() / "sll_acceptance_determinism";
    fs::remove_all(root);
    const auto a = experiment::run_experiment(cfg, root / "a");
    const auto b = experiment::run_experiment(cfg, root / "b");
    bool same = a.exit_code == 0 && b.exit_code == 0;
    std::string diff;
    for (const char* f : {"report.json", "per_image.csv", "transcript.jsonl", "truth.ppm", "reconstruction.ppm"}) {
        const bool eq = slurp(root / "a" / f) == slurp(root / "b" / f) && !slurp(root / "a" / f).empty();
        if (!eq) diff += std::string(" ") + f;
        same = same && eq;
    }
    fs::remove_all(root);
    return {same, std::string("report, per-image CSV, transcript and grids ") +
                      (same ? "byte-identical" : "differ:" + diff) + fmt(" across two runs, %.0fs", seconds_since(t0))};
}

}  // namespace

// With arguments, only the listed criterion numbers run.
int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        Verdict (*run)();
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient suite", gradient_suite},
        {2, "protocol equivalence", protocol_equivalence},
        {3, "MK-MMD sanity", mmd_sanity},
        {4, "dCor estimator", dcor_sanity},
        {5, "FORA efficacy ordering", fora_ordering},
        {6, "defense trends", defense_trends},  // reuses the undefended runs of 5
        {7, "detection", detection},
        {8, "metric oracles", metric_oracles},
        {9, "end-to-end determinism", determinism},
    };
    std::vector<std::pair<int, std::string>> lines;
    int failures = 0;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    std::size_t ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        ++ran;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        if (!v.pass) ++failures;
        std::printf("criterion %d %s: %s  %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, ran);
    return failures == 0 ? 0 : 1;
}
