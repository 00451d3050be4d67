#include "sll/protocol/session.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "sll/nn/losses.hpp"

namespace sll::protocol {
namespace {

using nlohmann::json;

double mean_row_norm(const nn::Tensor& t) {
    if (t.batch() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < t.batch(); ++n) {
        double s = 0.0;
        for (double v : t.row(n)) s += v * v;
        total += std::sqrt(s);
    }
    return total / static_cast<double>(t.batch());
}

class ServerParty {
public:
    ServerParty(const SessionConfig& cfg, nn::Network& net, Endpoint& ep, SnapshotRecorder& recorder)
        : cfg_(cfg),
          net_(net),
          ep_(ep),
          recorder_(recorder),
          opt_(cfg.server_optimizer, net),
          stub_rng_(cfg.seed, nn::stream_id("server_stub")) {}

    /// Handles one received message. Returns false once the client has
    /// ended the session.
    bool handle_next() {
        const Message msg = ep_.receive();
        recorder_.on_message(msg);
        for (const auto& obs : cfg_.server_observers) obs->on_message(msg);

        switch (msg.kind) {
            case MessageKind::control: {
                const auto code = control_code(msg);
                return code == ControlCode::epoch_begin;
            }
            case MessageKind::smashed_data:
                on_smashed(msg);
                return true;
            case MessageKind::top_gradient: {
                const nn::Tensor g = net_.backward(msg.payload);
                opt_.step(net_);
                ep_.send({MessageKind::gradient_return, ++sent_, g, std::nullopt});
                return true;
            }
            default:
                throw std::runtime_error("server: unexpected " + to_string(msg.kind));
        }
    }

    const std::vector<double>& losses() const { return losses_; }

private:
    void on_smashed(const Message& msg) {
        if (msg.payload.sample_shape() != net_.input_shape())
            throw std::invalid_argument("shape handshake failure: server expects " +
                                        nn::shape_string(net_.input_shape()) + ", got " +
                                        nn::shape_string(msg.payload.sample_shape()));
        if (cfg_.server_behavior == ServerBehavior::label_agnostic_stub) {
            nn::Tensor g(msg.payload.shape());
            for (double& v : g.values()) v = stub_rng_.normal();
            ep_.send({MessageKind::gradient_return, ++sent_, g, std::nullopt});
            return;
        }
        const nn::Tensor out = net_.forward(msg.payload);
        if (cfg_.topology == Topology::label_protected) {
            ep_.send({MessageKind::top_forward, ++sent_, out, std::nullopt});
            return;
        }
        if (!msg.labels) throw std::runtime_error("server: label-share batch without labels");
        const nn::Loss loss = nn::cross_entropy(out, *msg.labels);
        losses_.push_back(loss.value);
        const nn::Tensor g = net_.backward(loss.grad);
        opt_.step(net_);
        ep_.send({MessageKind::gradient_return, ++sent_, g, std::nullopt});
    }

    const SessionConfig& cfg_;
    nn::Network& net_;
    Endpoint& ep_;
    SnapshotRecorder& recorder_;
    nn::Optimizer opt_;
    nn::Rng stub_rng_;
    std::uint64_t sent_ = 0;
    std::vector<double> losses_;
};

class ClientParty {
public:
    ClientParty(const SessionConfig& cfg, SplitModel& model, Endpoint& ep, const data::ImageDataset& priv,
                GroundTruth& truth, Transcript& transcript)
        : cfg_(cfg),
          model_(model),
          ep_(ep),
          priv_(priv),
          truth_(truth),
          transcript_(transcript),
          opt_(cfg.client_optimizer, model.client),
          defense_rng_(cfg.seed, nn::stream_id("defense")) {
        if (model.top) top_opt_.emplace(cfg.top_optimizer, *model.top);
    }

    void begin_epoch(std::size_t epoch) {
        truth_.clear();
        epoch_ = epoch;
        ep_.send(control_message(ControlCode::epoch_begin, ++sent_, static_cast<double>(epoch)));
    }

    void end(ControlCode code) { ep_.send(control_message(code, ++sent_)); }

    void send_batch(std::span<const std::size_t> indices) {
        x_ = priv_.batch_images(indices);
        labels_ = priv_.batch_labels(indices);
        z_ = model_.client.forward(x_);
        nn::Tensor sent = cfg_.client_defense ? cfg_.client_defense->on_smashed(z_, defense_rng_) : z_;

        Message msg{MessageKind::smashed_data, ++sent_, std::move(sent), std::nullopt};
        if (cfg_.topology == Topology::label_share) msg.labels = labels_;
        truth_.batch_ids.push_back(msg.batch_id);
        truth_.images.push_back(x_);
        truth_.labels.push_back(labels_);

        record_ = json{{"type", "iteration"},
                       {"iteration", iteration_},
                       {"epoch", epoch_},
                       {"batch_id", msg.batch_id},
                       {"batch_size", labels_.size()},
                       {"smashed_norm", mean_row_norm(msg.payload)}};
        ep_.send(msg);
    }

    /// Handles one reply. Returns true when the batch's gradient has arrived
    /// and the client step (or abort) is done.
    bool process_next() {
        const Message msg = ep_.receive();
        if (msg.kind == MessageKind::top_forward) {
            if (!model_.top) throw std::runtime_error("client: top forward without a top model");
            const nn::Tensor logits = model_.top->forward(msg.payload);
            const nn::Loss loss = nn::cross_entropy(logits, labels_);
            record_["loss"] = loss.value;
            const nn::Tensor g = model_.top->backward(loss.grad);
            top_opt_->step(*model_.top);
            ep_.send({MessageKind::top_gradient, ++sent_, g, std::nullopt});
            return false;
        }
        if (msg.kind != MessageKind::gradient_return)
            throw std::runtime_error("client: unexpected " + to_string(msg.kind));
        finish(msg.payload);
        return true;
    }

    bool aborted() const { return aborted_; }
    std::size_t iterations() const { return iteration_; }

private:
    void finish(const nn::Tensor& grad) {
        record_["grad_norm"] = mean_row_norm(grad);
        if (cfg_.client_monitor) {
            const auto verdict = cfg_.client_monitor->on_gradient(grad, labels_);
            cfg_.client_monitor->annotate(record_);
            if (verdict) {
                record_["monitor_score"] = verdict->score;
                record_["monitor_attack"] = verdict->attack;
                aborted_ = verdict->attack;
            }
        }
        if (!aborted_) {
            const nn::Tensor g =
                cfg_.client_defense ? cfg_.client_defense->on_gradient(x_, z_, grad, defense_rng_) : grad;
            if (cfg_.client_defense) cfg_.client_defense->annotate(record_);
            model_.client.backward(g);
            opt_.step(model_.client);
        }
        transcript_.append(std::move(record_));
        ++iteration_;
    }

    const SessionConfig& cfg_;
    SplitModel& model_;
    Endpoint& ep_;
    const data::ImageDataset& priv_;
    GroundTruth& truth_;
    Transcript& transcript_;
    nn::Optimizer opt_;
    std::optional<nn::Optimizer> top_opt_;
    nn::Rng defense_rng_;
    std::uint64_t sent_ = 0;
    std::size_t epoch_ = 0;
    std::size_t iteration_ = 0;
    bool aborted_ = false;
    nn::Tensor x_, z_;
    std::vector<int> labels_;
    json record_;
};

// Drives one full session. `pump` is called after each client send and must
// let the server consume that message (lockstep) or do nothing (threaded).
template <typename Pump>
void drive(const SessionConfig& cfg, const data::ImageDataset& priv, SplitModel& model, ClientParty& client,
           Transcript& transcript, Pump pump, SessionResult& result) {
    nn::Rng order_rng(cfg.seed, nn::stream_id("order"));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(order_rng, priv.size(), cfg.shuffle);
        client.begin_epoch(epoch);
        pump();
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            if (cfg.max_iterations && client.iterations() >= cfg.max_iterations) break;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            client.send_batch(std::span(order).subspan(begin, end - begin));
            do {
                pump();
            } while (!client.process_next());
            if (client.aborted()) {
                result.status = SessionStatus::detector_aborted;
                result.abort_iteration = client.iterations() - 1;
                client.end(ControlCode::abort);
                pump();
                return;
            }
        }
        if (cfg.eval_set) {
            const double acc = evaluate_accuracy(model, *cfg.eval_set);
            result.final_accuracy = acc;
            transcript.append(json{{"type", "epoch"}, {"epoch", epoch}, {"accuracy", acc}});
        }
        if (cfg.max_iterations && client.iterations() >= cfg.max_iterations) break;
    }
    client.end(ControlCode::stop);
    pump();
}

}  // namespace

std::string to_string(Topology t) { return t == Topology::label_share ? "label_share" : "label_protected"; }

Topology topology_from_string(const std::string& name) {
    if (name == "label_share") return Topology::label_share;
    if (name == "label_protected") return Topology::label_protected;
    throw std::invalid_argument("unknown topology: " + name);
}

std::string to_string(ServerBehavior b) {
    return b == ServerBehavior::honest ? "honest" : "label_agnostic_stub";
}

ServerBehavior server_behavior_from_string(const std::string& name) {
    if (name == "honest") return ServerBehavior::honest;
    if (name == "label_agnostic_stub") return ServerBehavior::label_agnostic_stub;
    throw std::invalid_argument("unknown server behavior: " + name);
}

std::string to_string(SessionStatus s) { return s == SessionStatus::completed ? "completed" : "detector_aborted"; }

void SessionConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
}

std::vector<std::size_t> epoch_order(nn::Rng& order_rng, std::size_t n, bool shuffle) {
    if (shuffle) return order_rng.permutation(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    return order;
}

double evaluate_accuracy(SplitModel& model, const data::ImageDataset& ds, std::size_t batch_size) {
    std::vector<nn::Network*> nets{&model.client, &model.server};
    if (model.top) nets.push_back(&*model.top);
    std::vector<nn::Mode> saved;
    for (auto* n : nets) {
        saved.push_back(n->mode());
        n->set_mode(nn::Mode::eval);
    }
    double correct = 0.0;
    for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
        const std::size_t end = std::min(ds.size(), begin + batch_size);
        std::vector<std::size_t> idx;
        for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
        nn::Tensor h = ds.batch_images(idx);
        for (auto* n : nets) h = n->forward(h);
        correct += nn::accuracy(h, ds.batch_labels(idx)) * static_cast<double>(idx.size());
    }
    for (std::size_t i = 0; i < nets.size(); ++i) nets[i]->set_mode(saved[i]);
    return ds.size() ? correct / static_cast<double>(ds.size()) : 0.0;
}

SessionResult run_training(const SessionConfig& cfg, SplitModel model, const data::ImageDataset& priv) {
    cfg.validate();
    if (priv.size() == 0) throw std::invalid_argument("private dataset is empty");
    if (model.client.empty() && model.client.input_shape().empty()) {
        nn::Rng unused(0);
        model.client = nn::Network(priv.image_shape(), {}, unused);
    }
    if (priv.image_shape() != model.client.input_shape())
        throw std::invalid_argument("client input shape does not match the dataset");
    if (model.client.output_shape() != model.server.input_shape())
        throw std::invalid_argument("shape handshake failure: client output " +
                                    nn::shape_string(model.client.output_shape()) + " vs server input " +
                                    nn::shape_string(model.server.input_shape()));
    if (cfg.topology == Topology::label_protected) {
        if (!model.top) throw std::invalid_argument("label_protected session requires a top model");
        if (model.top->input_shape() != model.server.output_shape())
            throw std::invalid_argument("top model input does not match server output");
    }

    SessionResult result;
    Link link = make_link(cfg.transport, cfg.precision);
    SnapshotRecorder recorder;
    ServerParty server(cfg, model.server, *link.server, recorder);
    ClientParty client(cfg, model, *link.client, priv, result.truth, result.transcript);

    if (cfg.threaded) {
        std::exception_ptr server_error;
        std::thread worker([&] {
            try {
                while (server.handle_next()) {
                }
            } catch (...) {
                server_error = std::current_exception();
            }
        });
        try {
            drive(cfg, priv, model, client, result.transcript, [] {}, result);
        } catch (...) {
            // The server thread is parked in receive(); release it before unwinding.
            link.client->send(control_message(ControlCode::abort, 0));
            worker.join();
            throw;
        }
        worker.join();
        if (server_error) std::rethrow_exception(server_error);
    } else {
        bool running = true;
        drive(
            cfg, priv, model, client, result.transcript,
            [&] {
                if (running) running = server.handle_next();
            },
            result);
    }

    // Server-side task losses are keyed by iteration order.
    const auto& losses = server.losses();
    std::size_t k = 0;
    for (auto& r : result.transcript.records()) {
        if (r["type"] == "iteration" && k < losses.size()) r["loss"] = losses[k++];
    }

    result.iterations = client.iterations();
    result.snapshot = recorder.take();
    result.wire = link.log->records();
    result.model = std::move(model);
    return result;
}

SessionResult run_label_protected(SessionConfig cfg, SplitModel model, const data::ImageDataset& priv) {
    cfg.topology = Topology::label_protected;
    return run_training(cfg, std::move(model), priv);
}

}  // namespace sll::protocol
