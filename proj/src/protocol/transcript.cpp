#include "sll/protocol/transcript.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sll::protocol {

std::string Transcript::to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void Transcript::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write transcript: " + path.string());
    f << to_jsonl();
}

Transcript Transcript::parse(const std::string& jsonl) {
    Transcript t;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.append(nlohmann::json::parse(line));
    }
    return t;
}

}  // namespace sll::protocol
