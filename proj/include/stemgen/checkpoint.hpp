#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "stemgen/autodiff.hpp"

namespace stemgen {

// Checkpoint layout: magic "SGCK", u32 header length, JSON header with
// param names and shapes in declaration order, then little-endian f32
// values in the same order.
inline void write_checkpoint(const std::string& path, const ParamStore& ps,
                             const nlohmann::json& meta = {}) {
    nlohmann::json header;
    header["version"] = 1;
    header["meta"] = meta;
    auto& plist = header["params"] = nlohmann::json::array();
    for (const auto& e : ps.entries) {
        plist.push_back({{"name", e.name}, {"shape", e.value.shape}});
    }
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f.write("SGCK", 4);
    const uint32_t hl = static_cast<uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&hl), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& e : ps.entries)
        for (double x : e.value.v) {
            const float v = static_cast<float>(x);
            f.write(reinterpret_cast<const char*>(&v), 4);
        }
}

// Reads only the metadata block, so callers can reconstruct the model
// before loading values.
inline nlohmann::json read_checkpoint_meta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "SGCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t hl = 0;
    f.read(reinterpret_cast<char*>(&hl), 4);
    std::string hs(hl, '\0');
    f.read(hs.data(), hl);
    if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
    return nlohmann::json::parse(hs)["meta"];
}

// Loads values into an already-constructed store; names and shapes must
// match the declaration order exactly.
inline nlohmann::json read_checkpoint(const std::string& path, ParamStore& ps) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "SGCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t hl = 0;
    f.read(reinterpret_cast<char*>(&hl), 4);
    std::string hs(hl, '\0');
    f.read(hs.data(), hl);
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.value("version", 0) != 1) throw std::runtime_error("checkpoint: unsupported version");
    const auto& plist = header["params"];
    if (plist.size() != ps.entries.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < ps.entries.size(); ++i) {
        auto& e = ps.entries[i];
        if (plist[i]["name"].get<std::string>() != e.name)
            throw std::runtime_error("checkpoint: parameter name mismatch at " + e.name);
        if (plist[i]["shape"].get<std::vector<int>>() != e.value.shape)
            throw std::runtime_error("checkpoint: shape mismatch at " + e.name);
        for (auto& x : e.value.v) {
            float v;
            f.read(reinterpret_cast<char*>(&v), 4);
            x = v;
        }
    }
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
    return header["meta"];
}

}  // namespace stemgen
