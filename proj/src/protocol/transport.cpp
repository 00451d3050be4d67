#include "sll/protocol/transport.hpp"

#include <condition_variable>
#include <deque>
#include <stdexcept>

namespace sll::protocol {
namespace {

class MessageQueue {
public:
    void push(Message m) {
        {
            std::lock_guard lock(mu_);
            q_.push_back(std::move(m));
        }
        cv_.notify_one();
    }

    Message pop() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !q_.empty(); });
        Message m = std::move(q_.front());
        q_.pop_front();
        return m;
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Message> q_;
};

class ByteStream {
public:
    void write(const std::vector<std::uint8_t>& bytes) {
        {
            std::lock_guard lock(mu_);
            buf_.insert(buf_.end(), bytes.begin(), bytes.end());
        }
        cv_.notify_one();
    }

    Message read_frame() {
        std::unique_lock lock(mu_);
        for (;;) {
            auto decoded = frame_try_decode(std::span<const std::uint8_t>(buf_).subspan(head_));
            if (decoded) {
                head_ += decoded->second;
                if (head_ == buf_.size()) {
                    buf_.clear();
                    head_ = 0;
                }
                return std::move(decoded->first);
            }
            cv_.wait(lock);
        }
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::uint8_t> buf_;
    std::size_t head_ = 0;
};

struct QueuePair {
    MessageQueue to_server, to_client;
};

struct StreamPair {
    ByteStream to_server, to_client;
};

class QueueEndpoint final : public Endpoint {
public:
    QueueEndpoint(std::shared_ptr<QueuePair> pair, Direction dir, WirePrecision precision, std::shared_ptr<WireLog> log)
        : pair_(std::move(pair)), dir_(dir), precision_(precision), log_(std::move(log)) {}

    void send(const Message& msg) override {
        const auto bytes = frame_encode(msg, precision_);
        log_->append({dir_, msg.kind, msg.batch_id, msg.labels.has_value(), fnv1a(bytes), bytes.size()});
        Message copy = msg;
        copy.payload = wire_round(msg.payload, precision_);
        (dir_ == Direction::client_to_server ? pair_->to_server : pair_->to_client).push(std::move(copy));
    }

    Message receive() override {
        return (dir_ == Direction::client_to_server ? pair_->to_client : pair_->to_server).pop();
    }

private:
    std::shared_ptr<QueuePair> pair_;
    Direction dir_;
    WirePrecision precision_;
    std::shared_ptr<WireLog> log_;
};

class StreamEndpoint final : public Endpoint {
public:
    StreamEndpoint(std::shared_ptr<StreamPair> pair, Direction dir, WirePrecision precision,
                   std::shared_ptr<WireLog> log)
        : pair_(std::move(pair)), dir_(dir), precision_(precision), log_(std::move(log)) {}

    void send(const Message& msg) override {
        const auto bytes = frame_encode(msg, precision_);
        log_->append({dir_, msg.kind, msg.batch_id, msg.labels.has_value(), fnv1a(bytes), bytes.size()});
        (dir_ == Direction::client_to_server ? pair_->to_server : pair_->to_client).write(bytes);
    }

    Message receive() override {
        return (dir_ == Direction::client_to_server ? pair_->to_client : pair_->to_server).read_frame();
    }

private:
    std::shared_ptr<StreamPair> pair_;
    Direction dir_;
    WirePrecision precision_;
    std::shared_ptr<WireLog> log_;
};

}  // namespace

std::string to_string(TransportKind kind) {
    return kind == TransportKind::in_process_queue ? "in_process_queue" : "framed_stream";
}

TransportKind transport_kind_from_string(const std::string& name) {
    if (name == "in_process_queue") return TransportKind::in_process_queue;
    if (name == "framed_stream") return TransportKind::framed_stream;
    throw std::invalid_argument("unknown transport: " + name);
}

void WireLog::append(WireRecord r) {
    std::lock_guard lock(mu_);
    records_.push_back(r);
}

std::vector<WireRecord> WireLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

Link make_link(TransportKind kind, WirePrecision precision) {
    Link link;
    link.log = std::make_shared<WireLog>();
    if (kind == TransportKind::in_process_queue) {
        auto pair = std::make_shared<QueuePair>();
        link.client = std::make_unique<QueueEndpoint>(pair, Direction::client_to_server, precision, link.log);
        link.server = std::make_unique<QueueEndpoint>(pair, Direction::server_to_client, precision, link.log);
    } else {
        auto pair = std::make_shared<StreamPair>();
        link.client = std::make_unique<StreamEndpoint>(pair, Direction::client_to_server, precision, link.log);
        link.server = std::make_unique<StreamEndpoint>(pair, Direction::server_to_client, precision, link.log);
    }
    return link;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace sll::protocol
