#ifndef UCAN_TOOLS_RUN_MANIFEST_HPP
#define UCAN_TOOLS_RUN_MANIFEST_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ucan/errors.hpp"
#include "ucan/network.hpp"

namespace ucan::tools {

// FNV-1a 64-bit over raw bytes, hex encoded
inline std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// CSV content with the named columns blanked, so hashes of timing-bearing
// reports stay reproducible across runs
inline std::string canonical_csv(const std::string& content,
                                 const std::vector<std::string>& exclude_cols) {
    std::istringstream is(content);
    std::string line, out;
    std::vector<int> drop;
    bool header = true;
    while (std::getline(is, line)) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (header) {
            for (std::size_t i = 0; i < fields.size(); ++i)
                for (const auto& col : exclude_cols)
                    if (fields[i] == col) drop.push_back(int(i));
            header = false;
        } else {
            for (int i : drop)
                if (i < int(fields.size())) fields[i] = "";
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    }
    return out;
}

class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed)
        : command_(std::move(command)), seed_(seed) {}

    void set_config(const std::map<std::string, std::string>& kv) { config_ = kv; }
    void set_config_text(const std::string& text) {
        const ModelConfig cfg = ModelConfig::from_text(text); // validates
        std::istringstream is(cfg.to_text());
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos)
                config_[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    void add_kv(const std::string& k, const std::string& v) { config_[k] = v; }

    void add_output(const std::string& path,
                    const std::vector<std::string>& hash_exclude_cols = {}) {
        std::string bytes = read_file_bytes(path);
        if (!hash_exclude_cols.empty()) bytes = canonical_csv(bytes, hash_exclude_cols);
        outputs_.push_back({path, fnv1a64_hex(bytes), hash_exclude_cols});
    }

    std::string to_json() const {
        nlohmann::json j;
        j["command"] = command_;
        j["seed"] = seed_;
        j["version"] = kLibraryVersion;
        j["config"] = config_;
        j["outputs"] = nlohmann::json::array();
        for (const auto& o : outputs_) {
            nlohmann::json entry = {{"path", o.path}, {"fnv1a64", o.hash}};
            if (!o.excluded.empty()) entry["hash_excludes"] = o.excluded;
            j["outputs"].push_back(entry);
        }
        return j.dump(2) + "\n";
    }

    void write(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open for writing: " + path);
        os << to_json();
        if (!os) throw IoError("write failed: " + path);
    }

private:
    struct Output {
        std::string path, hash;
        std::vector<std::string> excluded;
    };
    std::string command_;
    std::uint64_t seed_;
    std::map<std::string, std::string> config_;
    std::vector<Output> outputs_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

} // namespace ucan::tools

#endif
