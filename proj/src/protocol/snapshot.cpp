#include "sll/protocol/snapshot.hpp"

#include <stdexcept>

namespace sll::protocol {

void SnapshotStore::begin_epoch(std::size_t epoch) {
    epoch_ = epoch;
    entries_.clear();
}

void SnapshotStore::add(std::uint64_t batch_id, nn::Tensor smashed) {
    entries_.push_back({batch_id, std::move(smashed)});
}

std::size_t SnapshotStore::sample_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.smashed.batch();
    return n;
}

nn::Tensor SnapshotStore::all_smashed() const {
    if (entries_.empty()) throw std::logic_error("snapshot is empty");
    std::vector<nn::Tensor> parts;
    for (const auto& e : entries_) parts.push_back(e.smashed);
    return nn::concat_batch(parts);
}

void SnapshotRecorder::on_message(const Message& msg) {
    if (msg.kind == MessageKind::control && msg.payload.size() == 2 &&
        control_code(msg) == ControlCode::epoch_begin) {
        store_.begin_epoch(static_cast<std::size_t>(control_argument(msg)));
    } else if (msg.kind == MessageKind::smashed_data) {
        store_.add(msg.batch_id, msg.payload);
    }
}

void GroundTruth::clear() {
    batch_ids.clear();
    images.clear();
    labels.clear();
}

nn::Tensor GroundTruth::all_images() const {
    if (images.empty()) throw std::logic_error("ground truth is empty");
    return nn::concat_batch(images);
}

std::vector<int> GroundTruth::all_labels() const {
    std::vector<int> out;
    for (const auto& l : labels) out.insert(out.end(), l.begin(), l.end());
    return out;
}

}  // namespace sll::protocol
