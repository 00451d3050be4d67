#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sll/attack/fora.hpp"
#include "sll/data/dataset.hpp"
#include "sll/defense/defenses.hpp"
#include "sll/detect/scrutinizer.hpp"
#include "sll/experiment/models.hpp"
#include "sll/protocol/session.hpp"

namespace sll::experiment {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DatasetSection {
    std::string source = "synthetic";  // synthetic | cifar10
    std::string path;                  // cifar10 binary batch file
    std::size_t image_size = 16;
    std::size_t num_classes = 4;
    std::size_t private_size = 512;
    std::size_t aux_size = 512;
    std::size_t test_size = 256;
    /// "all", "living", "non_living", or an explicit label list.
    std::set<int> aux_categories;  // empty: all
    std::string aux_categories_name = "all";
    bool aux_domain_shift = false;
    double color_jitter = 0.15;
    double position_jitter = 2.0;
    double background_noise = 0.05;
};

struct ModelSection {
    std::size_t split_point = 2;
    protocol::Topology topology = protocol::Topology::label_share;
    BlockFamily substitute_family = BlockFamily::vgg;
};

struct AttackSection {
    bool enabled = false;
    bool no_mkmmd = false;
    bool no_disc = false;
    bool train_substitute = true;
    bool saturating_disc = true;
    attack::DiscObjective disc_objective = attack::DiscObjective::bce;
    double disc_weight = 0.1;
    double mmd_weight = 1.0;
    std::size_t kernel_count = 5;
    std::size_t disc_steps = 1;
    std::size_t substitute_steps = 1;
    std::size_t aux_batch = 32;
    std::size_t priv_window = 1;
    std::size_t inverse_epochs = 30;
    std::size_t inverse_batch = 32;
    std::size_t disc_width = 16;
    std::size_t inverse_width = 32;
    double substitute_lr = 1e-3;
    double disc_lr = 1e-4;
    double inverse_lr = 1e-3;

    attack::AttackConfig to_attack_config() const;
};

struct DetectionSection {
    bool enabled = false;
    detect::GsConfig gs;
};

struct RunSection {
    std::uint64_t seed = 1;
    std::size_t epochs = 1;
    std::size_t max_iterations = 0;
    std::size_t batch_size = 32;
    protocol::WirePrecision precision = protocol::WirePrecision::fp32;
    protocol::TransportKind transport = protocol::TransportKind::in_process_queue;
    bool threaded = false;
    protocol::ServerBehavior server_behavior = protocol::ServerBehavior::honest;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    double learning_rate = 1e-3;
    std::size_t grid_images = 16;
    std::size_t grid_columns = 8;
    bool checkpoints = true;
    std::string output_dir;  // not part of the config hash
};

/// Default sweep for `sll sweep` when no axis is given on the command line.
struct SweepSection {
    std::string axis;
    std::vector<nlohmann::json> values;
    bool offset_seeds = false;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSection dataset;
    ModelSection model;
    AttackSection attack;
    defense::DefenseConfig defense;
    DetectionSection detection;
    RunSection run;
    std::optional<SweepSection> sweep;  // not part of the config hash

    /// Cross-field checks; throws ConfigError.
    void validate() const;

    /// Fully resolved document, defaults included.
    nlohmann::json to_json() const;
    /// 64-bit FNV-1a of the canonical resolved document without
    /// run.output_dir, as 16 hex digits.
    std::string hash() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending path. Missing keys take defaults.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets the value at a dotted path ("defense.sigma") in a config document,
/// creating missing sections; parse_config rejects any that are unknown.
/// An object value is merged into an existing object at that path.
void set_path(nlohmann::json& doc, const std::string& dotted, const nlohmann::json& value);

std::string to_string(protocol::WirePrecision p);
protocol::WirePrecision wire_precision_from_string(const std::string& name);

}  // namespace sll::experiment
