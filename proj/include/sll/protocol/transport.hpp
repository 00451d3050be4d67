#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sll/protocol/message.hpp"

namespace sll::protocol {

enum class TransportKind { in_process_queue, framed_stream };

std::string to_string(TransportKind kind);
TransportKind transport_kind_from_string(const std::string& name);

enum class Direction : std::uint8_t { client_to_server, server_to_client };

/// What crossed the wire, recorded at send time.
struct WireRecord {
    Direction direction;
    MessageKind kind;
    std::uint64_t batch_id;
    bool has_labels;
    std::uint64_t digest;  // FNV-1a of the frame bytes
    std::size_t bytes;

    friend bool operator==(const WireRecord&, const WireRecord&) = default;
};

/// Thread-safe append-only log shared by both endpoints of a link.
class WireLog {
public:
    void append(WireRecord r);
    std::vector<WireRecord> records() const;

private:
    mutable std::mutex mu_;
    std::vector<WireRecord> records_;
};

/// One side of a duplex link. send() never blocks; receive() blocks until a
/// message is available. Both are safe to call from different threads.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual void send(const Message& msg) = 0;
    virtual Message receive() = 0;
};

struct Link {
    std::unique_ptr<Endpoint> client;
    std::unique_ptr<Endpoint> server;
    std::shared_ptr<WireLog> log;
};

/// Both transports deliver exactly what the framed encoding would carry at
/// `precision`; the in-process queue skips serialization but applies the same
/// rounding, so the two are interchangeable.
Link make_link(TransportKind kind, WirePrecision precision);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace sll::protocol
