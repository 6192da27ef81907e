#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stemgen/stft.hpp"
#include "stemgen/tensor.hpp"

namespace stemgen {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters, B FFT bins -> M mel bins, covering [0, sr/2].
struct MelFilterbank {
    Tensor weights;  // B x M, non-negative
    int sample_rate = 44100;

    static MelFilterbank make(int n_bins, int n_mels, int sample_rate) {
        if (n_bins < 2 || n_mels < 1) throw std::invalid_argument("mel filterbank: bad dims");
        const int win_len = 2 * (n_bins - 1);
        MelFilterbank fb;
        fb.sample_rate = sample_rate;
        fb.weights = Tensor({n_bins, n_mels});

        const double mel_max = hz_to_mel(sample_rate / 2.0);
        std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
        for (int i = 0; i < n_mels + 2; ++i)
            edges[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));

        for (int b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * sample_rate / win_len;
            for (int m = 0; m < n_mels; ++m) {
                const double lo = edges[static_cast<size_t>(m)];
                const double mid = edges[static_cast<size_t>(m) + 1];
                const double hi = edges[static_cast<size_t>(m) + 2];
                double w = 0.0;
                if (f > lo && f < hi)
                    w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
                fb.weights.at(b, m) = w;
            }
        }
        return fb;
    }
};

// Project a power spectrogram onto mel filters, then log with the same eps
// floor used for linear-frequency log-magnitudes.
inline Tensor mel_project(const Tensor& power, const MelFilterbank& fb, double eps = 1e-5) {
    if (power.rank() != 2 || power.dim(1) != fb.weights.dim(0))
        throw std::invalid_argument("mel_project: bin count mismatch");
    const int F = power.dim(0);
    const int B = power.dim(1);
    const int M = fb.weights.dim(1);
    Tensor out({F, M});
    for (int f = 0; f < F; ++f)
        for (int m = 0; m < M; ++m) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b) acc += power.at(f, b) * fb.weights.at(b, m);
            out.at(f, m) = std::log(acc + eps);
        }
    return out;
}

}  // namespace stemgen
