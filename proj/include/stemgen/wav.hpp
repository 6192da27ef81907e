#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/stft.hpp"

namespace stemgen {

// Minimal RIFF/WAVE reader-writer: PCM16 and IEEE float32, interleaved
// stereo (mono files are duplicated to both channels), little-endian.
namespace wavdetail {
inline uint32_t rd_u32(const char* p) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}
inline uint16_t rd_u16(const char* p) {
    uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
}
template <typename T>
inline void put(std::string& s, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    s.append(b, sizeof(T));
}
}  // namespace wavdetail

inline Waveform read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (data.size() < 44 || data.compare(0, 4, "RIFF") != 0 || data.compare(8, 4, "WAVE") != 0)
        throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

    uint16_t fmt = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const std::string id = data.substr(pos, 4);
        const uint32_t sz = wavdetail::rd_u32(data.data() + pos + 4);
        if (id == "fmt ") {
            fmt = wavdetail::rd_u16(data.data() + pos + 8);
            channels = wavdetail::rd_u16(data.data() + pos + 10);
            rate = wavdetail::rd_u32(data.data() + pos + 12);
            bits = wavdetail::rd_u16(data.data() + pos + 22);
        } else if (id == "data") {
            data_off = pos + 8;
            data_len = sz;
        }
        pos += 8 + sz + (sz & 1);
    }
    if (data_off == 0 || channels == 0) throw std::runtime_error("wav: missing fmt/data chunk");
    if (channels > 2) throw std::runtime_error("wav: more than 2 channels unsupported");
    const bool is_float = fmt == 3;
    if (!(fmt == 1 || fmt == 3)) throw std::runtime_error("wav: unsupported format tag");
    if ((is_float && bits != 32) || (!is_float && bits != 16))
        throw std::runtime_error("wav: only PCM16 and float32 supported");
    data_len = std::min(data_len, data.size() - data_off);

    const size_t bytes_per = bits / 8;
    const size_t n = data_len / (bytes_per * channels);
    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.left.resize(n);
    w.right.resize(n);
    const char* p = data.data() + data_off;
    for (size_t i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c) {
            double s;
            if (is_float) {
                float v;
                std::memcpy(&v, p, 4);
                s = v;
            } else {
                int16_t v;
                std::memcpy(&v, p, 2);
                s = v / 32768.0;
            }
            p += bytes_per;
            if (c == 0) w.left[i] = s;
            if (c == 1 || channels == 1) w.right[i] = s;
        }
    }
    return w;
}

inline void write_wav(const std::string& path, const Waveform& w, bool float32 = true) {
    if (w.left.size() != w.right.size()) throw std::invalid_argument("wav: channel length mismatch");
    const uint16_t channels = 2;
    const uint16_t bits = float32 ? 32 : 16;
    const uint32_t rate = static_cast<uint32_t>(w.sample_rate);
    const uint32_t n = static_cast<uint32_t>(w.left.size());
    const uint32_t data_len = n * channels * (bits / 8);

    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    wavdetail::put<uint32_t>(out, 36 + data_len);
    out += "WAVEfmt ";
    wavdetail::put<uint32_t>(out, 16);
    wavdetail::put<uint16_t>(out, float32 ? 3 : 1);
    wavdetail::put<uint16_t>(out, channels);
    wavdetail::put<uint32_t>(out, rate);
    wavdetail::put<uint32_t>(out, rate * channels * (bits / 8));
    wavdetail::put<uint16_t>(out, static_cast<uint16_t>(channels * (bits / 8)));
    wavdetail::put<uint16_t>(out, bits);
    out += "data";
    wavdetail::put<uint32_t>(out, data_len);
    for (uint32_t i = 0; i < n; ++i) {
        for (int c = 0; c < 2; ++c) {
            const double s = c == 0 ? w.left[i] : w.right[i];
            if (float32) {
                wavdetail::put<float>(out, static_cast<float>(s));
            } else {
                const double clamped = std::clamp(s, -1.0, 1.0);
                wavdetail::put<int16_t>(out, static_cast<int16_t>(std::lround(clamped * 32767.0)));
            }
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace stemgen
