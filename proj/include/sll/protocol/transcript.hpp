#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace sll::protocol {

/// Line-delimited JSON log of a session: one record per iteration plus one
/// per evaluated epoch.
class Transcript {
public:
    void append(nlohmann::json record) { records_.push_back(std::move(record)); }
    std::vector<nlohmann::json>& records() { return records_; }
    const std::vector<nlohmann::json>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    std::string to_jsonl() const;
    void write(const std::filesystem::path& path) const;
    static Transcript parse(const std::string& jsonl);

private:
    std::vector<nlohmann::json> records_;
};

}  // namespace sll::protocol
