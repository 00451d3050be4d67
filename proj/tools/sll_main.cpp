#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sll/experiment/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sll::experiment;

namespace {

// Where runs go when neither --output nor run.output_dir is given.
fs::path output_root() {
    const char* env = std::getenv("SLL_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path resolve_output(const std::string& flag, const ExperimentConfig& cfg) {
    if (!flag.empty()) return flag;
    if (!cfg.run.output_dir.empty()) return cfg.run.output_dir;
    return output_root() / (cfg.name + "-" + cfg.hash());
}

json read_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// "[512, 256]" or "512,256" or "none,dp".
std::vector<json> parse_values(const std::string& text) {
    const auto whole = json::parse(text, nullptr, false);
    if (!whole.is_discarded()) return whole.is_array() ? whole.get<std::vector<json>>() : std::vector<json>{whole};
    std::vector<json> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        item = b == std::string::npos ? "" : item.substr(b, e - b + 1);
        if (!item.empty()) {
            const auto v = json::parse(item, nullptr, false);
            out.push_back(v.is_discarded() ? json(item) : v);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void apply_seed(json& doc, const std::optional<std::uint64_t>& seed) {
    if (seed) set_path(doc, "run.seed", *seed);
}

int cmd_run(const std::string& config, const std::string& output, const std::optional<std::uint64_t>& seed,
            std::size_t threads) {
    json doc = read_document(config);
    apply_seed(doc, seed);
    if (threads > 1) set_path(doc, "run.threaded", true);
    const ExperimentConfig cfg = parse_config(doc);
    cfg.validate();
    const fs::path dir = resolve_output(output, cfg);
    const RunOutcome out = run_experiment(cfg, dir);
    std::cout << "status " << out.status << "\n"
              << "config_hash " << cfg.hash() << "\n"
              << "output " << dir.string() << "\n";
    if (out.report.task_accuracy) std::printf("task_accuracy %.4f\n", *out.report.task_accuracy);
    if (!out.report.images.empty())
        std::printf("mean_mse %.6f\nmean_psnr %.4f\nmean_ssim %.4f\n", out.report.mean_mse(), out.report.mean_psnr(),
                    out.report.mean_ssim());
    if (out.report.features) std::printf("feature_cosine %.4f\n", out.report.features->cosine);
    if (!out.error.empty()) std::cerr << "error: " << out.error << "\n";
    return out.exit_code;
}

int cmd_sweep(const std::string& config, const std::string& output, const std::optional<std::uint64_t>& seed,
              std::size_t threads, std::string axis, const std::string& values_text) {
    json doc = read_document(config);
    apply_seed(doc, seed);
    const ExperimentConfig base = parse_config(doc);
    base.validate();

    std::vector<json> values;
    SweepOptions opts;
    opts.threads = threads;
    if (base.sweep) opts.offset_seeds = base.sweep->offset_seeds;
    if (!axis.empty()) {
        values = parse_values(values_text);
    } else if (base.sweep) {
        axis = base.sweep->axis;
        values = values_text.empty() ? base.sweep->values : parse_values(values_text);
    }
    if (axis.empty()) throw ConfigError("sweep: no --axis given and the config has no sweep section");

    const fs::path dir = resolve_output(output, base);
    const auto rows = run_sweep(doc, axis, values, dir, opts);
    int worst = kExitCompleted;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::cout << i << " " << r.value.dump() << " " << r.outcome.status;
        if (!r.outcome.report.images.empty()) std::printf(" mse %.6f ssim %.4f", r.outcome.report.mean_mse(),
                                                          r.outcome.report.mean_ssim());
        if (r.outcome.report.task_accuracy) std::printf(" acc %.4f", *r.outcome.report.task_accuracy);
        std::cout << "\n";
        worst = std::max(worst, r.outcome.exit_code);
    }
    std::cout << "aggregate " << (dir / "aggregate.csv").string() << "\n";
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Split learning attack and defense experiments"};
    app.require_subcommand(1);

    std::string config, output, axis, values;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--output", output, "Output directory (default: $SLL_OUTPUT_ROOT/<name>-<hash>)");
        sub->add_option("--seed-override", seed, "Replace run.seed");
        sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    };
    auto* run = app.add_subcommand("run", "Run one experiment");
    common(run);
    auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a config path");
    common(sweep);
    sweep->add_option("--axis", axis, "Dotted config path, e.g. defense.sigma");
    sweep->add_option("--values", values, "JSON list or comma-separated values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitError;
    }

    try {
        if (*run) return cmd_run(config, output, seed, threads);
        return cmd_sweep(config, output, seed, threads, axis, values);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
