#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stemgen/fft.hpp"
#include "stemgen/tensor.hpp"

namespace stemgen {

// Stereo waveform, samples in [-1, 1].
struct Waveform {
    std::vector<double> left;
    std::vector<double> right;
    int sample_rate = 44100;

    size_t frames() const { return left.size(); }
    const std::vector<double>& channel(int c) const { return c == 0 ? left : right; }
    std::vector<double>& channel(int c) { return c == 0 ? left : right; }

    void validate() const {
        if (left.size() != right.size())
            throw std::invalid_argument("waveform: channel length mismatch");
        for (int c = 0; c < 2; ++c)
            for (double s : channel(c))
                if (!std::isfinite(s)) throw std::invalid_argument("waveform: non-finite sample");
    }
};

enum class WindowKind { Hann };

struct StftConfig {
    int hop_len = 256;
    int win_len = 1024;  // 4 * hop by default
    WindowKind window = WindowKind::Hann;
    double eps = 1e-5;

    static StftConfig from_hop(int hop, double eps = 1e-5) {
        return StftConfig{hop, 4 * hop, WindowKind::Hann, eps};
    }
    int bins() const { return win_len / 2 + 1; }
};

inline std::vector<double> make_window(const StftConfig& cfg) {
    std::vector<double> w(static_cast<size_t>(cfg.win_len));
    // Periodic Hann: COLA at hop = win/k for integer k >= 2.
    for (int n = 0; n < cfg.win_len; ++n)
        w[static_cast<size_t>(n)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / cfg.win_len));
    return w;
}

// Nonzero-overlap-add check: the squared-window overlap sum must be bounded
// away from zero everywhere, which makes the normalized iSTFT exact.
inline void check_cola(const StftConfig& cfg) {
    if (cfg.hop_len <= 0 || cfg.win_len < cfg.hop_len)
        throw std::invalid_argument("stft config: need 0 < hop_len <= win_len");
    if (cfg.eps <= 0.0) throw std::invalid_argument("stft config: eps must be > 0");
    auto w = make_window(cfg);
    std::vector<double> acc(static_cast<size_t>(cfg.win_len), 0.0);
    for (int shift = -cfg.win_len; shift <= cfg.win_len; shift += cfg.hop_len)
        for (int n = 0; n < cfg.win_len; ++n) {
            int m = n - shift;
            if (m >= 0 && m < cfg.win_len)
                acc[static_cast<size_t>(n)] += w[static_cast<size_t>(m)] * w[static_cast<size_t>(m)];
    }
    for (double a : acc)
        if (a < 1e-8) throw std::invalid_argument("stft config: window/hop violates overlap-add");
}

struct Spectrogram {
    // frames[f][b], F x B complex
    std::vector<std::vector<cplx>> frames;
    StftConfig config;
    int orig_len = 0;  // waveform length before framing padding

    int num_frames() const { return static_cast<int>(frames.size()); }
    int num_bins() const { return frames.empty() ? config.bins() : static_cast<int>(frames[0].size()); }
};

// Center-padded STFT of one channel; F = ceil(T / hop).
inline Spectrogram stft(const std::vector<double>& x, const StftConfig& cfg) {
    check_cola(cfg);
    const int T = static_cast<int>(x.size());
    if (T < cfg.win_len) throw std::invalid_argument("stft: input shorter than one window");
    const int F = (T + cfg.hop_len - 1) / cfg.hop_len;
    const int half = cfg.win_len / 2;
    const auto win = make_window(cfg);

    Spectrogram spec;
    spec.config = cfg;
    spec.orig_len = T;
    spec.frames.resize(static_cast<size_t>(F));
    std::vector<double> buf(static_cast<size_t>(cfg.win_len));
    for (int f = 0; f < F; ++f) {
        const int start = f * cfg.hop_len - half;
        for (int n = 0; n < cfg.win_len; ++n) {
            const int idx = start + n;
            const double s = (idx >= 0 && idx < T) ? x[static_cast<size_t>(idx)] : 0.0;
            buf[static_cast<size_t>(n)] = s * win[static_cast<size_t>(n)];
        }
        spec.frames[static_cast<size_t>(f)] = rfft(buf);
    }
    return spec;
}

// Overlap-add inverse with squared-window normalization.
inline std::vector<double> istft(const Spectrogram& spec) {
    const StftConfig& cfg = spec.config;
    check_cola(cfg);
    const int F = spec.num_frames();
    const int T = spec.orig_len > 0 ? spec.orig_len : F * cfg.hop_len;
    const int half = cfg.win_len / 2;
    const auto win = make_window(cfg);

    std::vector<double> out(static_cast<size_t>(T), 0.0);
    std::vector<double> norm(static_cast<size_t>(T), 0.0);
    for (int f = 0; f < F; ++f) {
        auto seg = irfft(spec.frames[static_cast<size_t>(f)], cfg.win_len);
        const int start = f * cfg.hop_len - half;
        for (int n = 0; n < cfg.win_len; ++n) {
            const int idx = start + n;
            if (idx < 0 || idx >= T) continue;
            out[static_cast<size_t>(idx)] += seg[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
            norm[static_cast<size_t>(idx)] += win[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
        }
    }
    for (int i = 0; i < T; ++i)
        if (norm[static_cast<size_t>(i)] > 1e-12) out[static_cast<size_t>(i)] /= norm[static_cast<size_t>(i)];
    return out;
}

// log(|S|^2 + eps), F x B
inline Tensor log_mag(const Spectrogram& spec) {
    const int F = spec.num_frames();
    const int B = spec.num_bins();
    Tensor out({F, B});
    for (int f = 0; f < F; ++f)
        for (int b = 0; b < B; ++b) {
            const cplx z = spec.frames[static_cast<size_t>(f)][static_cast<size_t>(b)];
            out.at(f, b) = std::log(std::norm(z) + spec.config.eps);
        }
    return out;
}

// |S|^2, F x B
inline Tensor power_spec(const Spectrogram& spec) {
    const int F = spec.num_frames();
    const int B = spec.num_bins();
    Tensor out({F, B});
    for (int f = 0; f < F; ++f)
        for (int b = 0; b < B; ++b)
            out.at(f, b) = std::norm(spec.frames[static_cast<size_t>(f)][static_cast<size_t>(b)]);
    return out;
}

}  // namespace stemgen
