#pragma once

#include <optional>
#include <span>

#include <json.hpp>

#include "sll/nn/rng.hpp"
#include "sll/protocol/message.hpp"

namespace sll::protocol {

/// Client-side protection. on_smashed runs after the client forward pass and
/// before serialization; on_gradient runs on the returned gradient before the
/// client's backward pass.
class ClientDefense {
public:
    virtual ~ClientDefense() = default;
    virtual nn::Tensor on_smashed(const nn::Tensor& smashed, nn::Rng&) { return smashed; }
    /// `input` is the raw client batch and `smashed` the undefended client
    /// output for it.
    virtual nn::Tensor on_gradient(const nn::Tensor& input, const nn::Tensor& smashed, const nn::Tensor& grad,
                                   nn::Rng&) {
        (void)input;
        (void)smashed;
        return grad;
    }
    /// Adds defense fields to the current transcript record.
    virtual void annotate(nlohmann::json&) const {}
};

/// Server-side listener. Receives every message the server receives, by
/// const reference, before the server acts on it.
class ServerObserver {
public:
    virtual ~ServerObserver() = default;
    virtual void on_message(const Message& msg) = 0;
};

struct MonitorVerdict {
    bool attack = false;
    double score = 0.0;
};

/// Client-side detector over returned gradients. A verdict with attack set
/// ends the session.
class ClientMonitor {
public:
    virtual ~ClientMonitor() = default;
    virtual std::optional<MonitorVerdict> on_gradient(const nn::Tensor& grad, std::span<const int> labels) = 0;
    virtual void annotate(nlohmann::json&) const {}
};

}  // namespace sll::protocol
