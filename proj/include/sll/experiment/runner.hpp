#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sll/experiment/config.hpp"
#include "sll/metrics/report.hpp"

namespace sll::experiment {

inline constexpr int kExitCompleted = 0;
inline constexpr int kExitAborted = 2;
inline constexpr int kExitError = 3;

struct ExperimentData {
    data::ImageDataset priv;
    data::ImageDataset aux;
    data::ImageDataset test;
};

/// Private, auxiliary and test sets for a config. Each comes from its own
/// rng stream of run.seed, so changing one size leaves the others intact.
ExperimentData make_data(const ExperimentConfig& cfg);

struct AttackOutcome {
    AttackSection settings;
    std::vector<metrics::ImageScores> images;
    metrics::FeatureSimilarity features;
    nn::Tensor reconstruction;
    std::vector<double> inverse_history;
    std::shared_ptr<attack::ForaAttacker> attacker;
};

struct ExperimentResult {
    protocol::SessionResult session;
    std::optional<double> task_accuracy;
    nn::Tensor truth;  // snapshot ground truth, in snapshot order
    std::vector<AttackOutcome> attacks;
    std::shared_ptr<detect::GradientScrutinizer> monitor;
};

/// One SL session with every enabled entry of `attacks` observing it. All
/// attackers start from the same initial weights. Attacks are skipped when
/// the detector aborts the session. No files are written.
ExperimentResult execute(const ExperimentConfig& cfg, const std::vector<AttackSection>& attacks);

/// Same as execute with the config's own attack section.
ExperimentResult execute(const ExperimentConfig& cfg);

metrics::MetricsReport build_report(const ExperimentConfig& cfg, const ExperimentResult& result);

struct RunOutcome {
    int exit_code = kExitCompleted;
    std::string status;
    std::string error;
    metrics::MetricsReport report;
};

/// Runs the experiment and writes config.json, transcript.jsonl,
/// report.json, per_image.csv, truth.ppm, reconstruction.ppm and
/// checkpoints/ under `dir`. Runtime failures leave a report with status
/// "error" next to whatever was already written.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SweepRow {
    nlohmann::json value;
    std::filesystem::path dir;
    RunOutcome outcome;
};

struct SweepOptions {
    std::size_t threads = 1;
    /// false: every sub-run keeps the base seed; true: sub-run i uses seed + i.
    bool offset_seeds = false;
};

/// One sub-run per value of `axis` (a dotted config path) under
/// dir/<index>_<value>/, plus dir/aggregate.csv. An invalid sub-config or a
/// failing sub-run is recorded in its row and the sweep continues. Throws
/// ConfigError on an empty value list.
std::vector<SweepRow> run_sweep(const nlohmann::json& base, const std::string& axis,
                                const std::vector<nlohmann::json>& values, const std::filesystem::path& dir,
                                const SweepOptions& opts = {});

std::string aggregate_csv(const std::string& axis, const std::vector<SweepRow>& rows, bool offset_seeds);

}  // namespace sll::experiment
