#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stemgen/stft.hpp"
#include "stemgen/tensor.hpp"

namespace stemgen {

struct MultiScaleConfig {
    std::vector<int> hop_lens;
    int win_factor = 4;

    // Published hop set; 2^10 is deliberately absent.
    static MultiScaleConfig defaults() {
        return MultiScaleConfig{{32, 64, 128, 256, 512, 2048, 4096}, 4};
    }

    void validate() const {
        int prev = 0;
        for (int h : hop_lens) {
            if (h <= prev || !is_pow2(h))
                throw std::invalid_argument("multi-scale config: hops must be strictly increasing powers of two");
            prev = h;
        }
    }
};

struct AeLossWeights {
    double lambda_rec = 25.0;
    double lambda_mssd = 0.002;
};

// Mean absolute difference between two equal-shape arrays.
inline double rec_l1_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("rec_l1_loss: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.v[i] - target.v[i]);
    return acc / static_cast<double>(pred.size());
}

namespace detail {
inline double mssd_channel(const std::vector<double>& a, const std::vector<double>& b,
                           const MultiScaleConfig& cfg) {
    double total = 0.0;
    for (int hop : cfg.hop_lens) {
        StftConfig sc;
        sc.hop_len = hop;
        sc.win_len = cfg.win_factor * hop;
        const Tensor pa = power_spec(stft(a, sc));
        const Tensor pb = power_spec(stft(b, sc));
        double acc = 0.0;
        for (size_t i = 0; i < pa.size(); ++i) acc += std::abs(pa.v[i] - pb.v[i]);
        total += acc / static_cast<double>(pa.size());
    }
    return total;
}
}  // namespace detail

// Multi-scale spectral distance: sum over scales of the mean L1 distance
// between squared-magnitude spectrograms, averaged over channels.
inline double mssd(const Waveform& a, const Waveform& b, const MultiScaleConfig& cfg) {
    if (a.frames() != b.frames()) throw std::invalid_argument("mssd: length mismatch");
    cfg.validate();
    double total = 0.0;
    for (int c = 0; c < 2; ++c) total += detail::mssd_channel(a.channel(c), b.channel(c), cfg);
    return total / 2.0;
}

// Hinge critic loss: -E[min(0,-1+C(real))] - E[min(0,-1-C(fake))]
inline double critic_hinge_loss(const std::vector<double>& real_scores,
                                const std::vector<double>& fake_scores) {
    if (real_scores.empty() || fake_scores.empty())
        throw std::invalid_argument("critic_hinge_loss: empty scores");
    double lr = 0.0, lf = 0.0;
    for (double s : real_scores) lr += std::min(0.0, -1.0 + s);
    for (double s : fake_scores) lf += std::min(0.0, -1.0 - s);
    return -lr / static_cast<double>(real_scores.size()) - lf / static_cast<double>(fake_scores.size());
}

// Generator adversarial loss: -E[C(fake)]
inline double generator_adv_loss(const std::vector<double>& fake_scores) {
    if (fake_scores.empty()) throw std::invalid_argument("generator_adv_loss: empty scores");
    double acc = 0.0;
    for (double s : fake_scores) acc += s;
    return -acc / static_cast<double>(fake_scores.size());
}

inline double combined_ae_loss(double adv, double rec, double mssd_v, const AeLossWeights& w) {
    return adv + w.lambda_rec * rec + w.lambda_mssd * mssd_v;
}

}  // namespace stemgen
