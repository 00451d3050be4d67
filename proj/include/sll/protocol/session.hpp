#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sll/data/dataset.hpp"
#include "sll/nn/network.hpp"
#include "sll/nn/optimizer.hpp"
#include "sll/protocol/hooks.hpp"
#include "sll/protocol/snapshot.hpp"
#include "sll/protocol/transcript.hpp"
#include "sll/protocol/transport.hpp"

namespace sll::protocol {

enum class Topology { label_share, label_protected };
std::string to_string(Topology t);
Topology topology_from_string(const std::string& name);

/// label_agnostic_stub ignores the task and answers every SmashedData with
/// standard-normal noise of the payload's shape.
enum class ServerBehavior { honest, label_agnostic_stub };
std::string to_string(ServerBehavior b);
ServerBehavior server_behavior_from_string(const std::string& name);

/// Client bottom network, server network and, for label_protected sessions,
/// the client's top network.
struct SplitModel {
    nn::Network client;
    nn::Network server;
    std::optional<nn::Network> top;
};

struct SessionConfig {
    Topology topology = Topology::label_share;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::size_t max_iterations = 0;  // 0: no cap
    bool shuffle = true;
    std::uint64_t seed = 0;

    nn::OptimizerConfig client_optimizer;
    nn::OptimizerConfig server_optimizer;
    nn::OptimizerConfig top_optimizer;

    TransportKind transport = TransportKind::in_process_queue;
    WirePrecision precision = WirePrecision::fp32;
    /// Run the server on its own thread instead of the lockstep driver.
    bool threaded = false;
    ServerBehavior server_behavior = ServerBehavior::honest;

    std::shared_ptr<ClientDefense> client_defense;
    std::vector<std::shared_ptr<ServerObserver>> server_observers;
    std::shared_ptr<ClientMonitor> client_monitor;

    /// When set, a joint accuracy pass runs after every epoch.
    const data::ImageDataset* eval_set = nullptr;

    void validate() const;
};

enum class SessionStatus { completed, detector_aborted };
std::string to_string(SessionStatus s);

struct SessionResult {
    SessionStatus status = SessionStatus::completed;
    SplitModel model;
    /// What the server archived from the final epoch.
    SnapshotStore snapshot;
    /// Raw inputs of the same batches, for evaluation only.
    GroundTruth truth;
    Transcript transcript;
    std::vector<WireRecord> wire;
    std::size_t iterations = 0;
    std::optional<double> final_accuracy;
    /// Iteration at which the monitor raised its verdict.
    std::optional<std::size_t> abort_iteration;
};

/// Trains `model` over `priv` with the message-passing protocol. A monitor
/// verdict ends the session with status detector_aborted; shape mismatches at
/// the split throw std::invalid_argument.
SessionResult run_training(const SessionConfig& cfg, SplitModel model, const data::ImageDataset& priv);

/// run_training with topology forced to label_protected; requires a top model.
SessionResult run_label_protected(SessionConfig cfg, SplitModel model, const data::ImageDataset& priv);

/// Joint forward pass in eval mode, returning classification accuracy.
double evaluate_accuracy(SplitModel& model, const data::ImageDataset& ds, std::size_t batch_size = 256);

/// The sample order a session with this seed uses for each epoch.
std::vector<std::size_t> epoch_order(nn::Rng& order_rng, std::size_t n, bool shuffle);

}  // namespace sll::protocol
