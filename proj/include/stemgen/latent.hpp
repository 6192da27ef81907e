#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "stemgen/tensor.hpp"

namespace stemgen {

enum class SourceKind : uint8_t { Mix = 0, Stem = 1 };

// Time-major latent sequence: N timesteps of D-dimensional vectors.
struct LatentSequence {
    Tensor vectors;  // N x D
    int r_time = 256;
    SourceKind source_kind = SourceKind::Mix;

    int steps() const { return vectors.dim(0); }
    int dim() const { return vectors.dim(1); }

    static LatentSequence zeros(int n, int d, int r_time, SourceKind kind) {
        LatentSequence c;
        c.vectors = Tensor({n, d});
        c.r_time = r_time;
        c.source_kind = kind;
        return c;
    }
};

// LATS file: magic "LATS", version u32, N u32, D u32, r_time u32,
// source_kind u8, then N*D little-endian f32.
inline void write_latents(const std::string& path, const LatentSequence& c) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("latents: cannot write " + path);
    f.write("LATS", 4);
    auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(1);
    put_u32(static_cast<uint32_t>(c.steps()));
    put_u32(static_cast<uint32_t>(c.dim()));
    put_u32(static_cast<uint32_t>(c.r_time));
    const uint8_t kind = static_cast<uint8_t>(c.source_kind);
    f.write(reinterpret_cast<const char*>(&kind), 1);
    for (double x : c.vectors.v) {
        const float v = static_cast<float>(x);
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
}

inline LatentSequence read_latents(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("latents: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "LATS", 4) != 0)
        throw std::runtime_error("latents: bad magic in " + path);
    auto get_u32 = [&]() {
        uint32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    const uint32_t version = get_u32();
    if (version != 1) throw std::runtime_error("latents: unsupported version");
    const uint32_t n = get_u32();
    const uint32_t d = get_u32();
    const uint32_t rt = get_u32();
    uint8_t kind;
    f.read(reinterpret_cast<char*>(&kind), 1);
    LatentSequence c = LatentSequence::zeros(static_cast<int>(n), static_cast<int>(d),
                                             static_cast<int>(rt), static_cast<SourceKind>(kind));
    for (auto& x : c.vectors.v) {
        float v;
        f.read(reinterpret_cast<char*>(&v), 4);
        x = v;
    }
    if (!f) throw std::runtime_error("latents: truncated file " + path);
    return c;
}

}  // namespace stemgen
