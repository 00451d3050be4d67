#pragma once

#include <cstdint>
#include <vector>

#include "sll/protocol/hooks.hpp"

namespace sll::protocol {

struct SnapshotEntry {
    std::uint64_t batch_id = 0;
    nn::Tensor smashed;
};

/// The server's archive of smashed data from the last training epoch. It is
/// built solely from received messages, so it never holds raw inputs.
class SnapshotStore {
public:
    void begin_epoch(std::size_t epoch);
    void add(std::uint64_t batch_id, nn::Tensor smashed);

    const std::vector<SnapshotEntry>& entries() const { return entries_; }
    std::size_t epoch() const { return epoch_; }
    bool empty() const { return entries_.empty(); }
    std::size_t sample_count() const;
    /// Every entry concatenated in batch order.
    nn::Tensor all_smashed() const;

private:
    std::size_t epoch_ = 0;
    std::vector<SnapshotEntry> entries_;
};

/// Server observer that keeps the snapshot current: resets on each
/// epoch_begin control message, appends each SmashedData payload.
class SnapshotRecorder final : public ServerObserver {
public:
    void on_message(const Message& msg) override;
    const SnapshotStore& store() const { return store_; }
    SnapshotStore take() { return std::move(store_); }

private:
    SnapshotStore store_;
};

/// Raw inputs behind each snapshot batch, kept on the client side for
/// evaluation only. Attack code receives a SnapshotStore, never this.
struct GroundTruth {
    std::vector<std::uint64_t> batch_ids;
    std::vector<nn::Tensor> images;
    std::vector<std::vector<int>> labels;

    void clear();
    nn::Tensor all_images() const;
    std::vector<int> all_labels() const;
};

}  // namespace sll::protocol
