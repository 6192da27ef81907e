#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>

#include "stemgen/latent.hpp"
#include "stemgen/tensor.hpp"

namespace stemgen {

// Continuous-time cosine schedule: alpha = cos(pi t / 2), beta = sin(pi t / 2),
// so alpha^2 + beta^2 = 1 identically.
struct NoiseSchedule {
    double alpha(double t) const {
        check_t(t);
        return std::cos(0.5 * std::numbers::pi * t);
    }
    double beta(double t) const {
        check_t(t);
        return std::sin(0.5 * std::numbers::pi * t);
    }
    static void check_t(double t) {
        if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("schedule: t outside [0,1]");
    }
};

inline std::pair<double, double> schedule_rates(double t) {
    NoiseSchedule s;
    return {s.alpha(t), s.beta(t)};
}

// z_t = alpha_t * c_y + beta_t * eps
inline Tensor add_noise(const Tensor& c_y, const Tensor& eps, double t) {
    if (!c_y.same_shape(eps)) throw std::invalid_argument("add_noise: shape mismatch");
    auto [a, b] = schedule_rates(t);
    Tensor z = c_y;
    for (size_t i = 0; i < z.size(); ++i) z.v[i] = a * c_y.v[i] + b * eps.v[i];
    return z;
}

// v = alpha_t * eps - beta_t * c_y
inline Tensor v_target(const Tensor& c_y, const Tensor& eps, double t) {
    if (!c_y.same_shape(eps)) throw std::invalid_argument("v_target: shape mismatch");
    auto [a, b] = schedule_rates(t);
    Tensor v = c_y;
    for (size_t i = 0; i < v.size(); ++i) v.v[i] = a * eps.v[i] - b * c_y.v[i];
    return v;
}

// x_hat = alpha_t * z_t - beta_t * v
inline Tensor x_from_v(const Tensor& z_t, const Tensor& v, double t) {
    if (!z_t.same_shape(v)) throw std::invalid_argument("x_from_v: shape mismatch");
    auto [a, b] = schedule_rates(t);
    Tensor x = z_t;
    for (size_t i = 0; i < x.size(); ++i) x.v[i] = a * z_t.v[i] - b * v.v[i];
    return x;
}

// eps_hat = beta_t * z_t + alpha_t * v
inline Tensor eps_from_v(const Tensor& z_t, const Tensor& v, double t) {
    if (!z_t.same_shape(v)) throw std::invalid_argument("eps_from_v: shape mismatch");
    auto [a, b] = schedule_rates(t);
    Tensor e = z_t;
    for (size_t i = 0; i < e.size(); ++i) e.v[i] = b * z_t.v[i] + a * v.v[i];
    return e;
}

// Deterministic DDIM update (eta = 0).
inline Tensor ddim_step(const Tensor& z_k, const Tensor& v_hat, double t_k, double t_km1) {
    if (!(t_km1 <= t_k)) throw std::invalid_argument("ddim_step: timesteps must decrease");
    if (!(t_km1 >= 0.0 && t_k <= 1.0)) throw std::invalid_argument("ddim_step: t outside [0,1]");
    Tensor x = x_from_v(z_k, v_hat, t_k);
    Tensor e = eps_from_v(z_k, v_hat, t_k);
    auto [a1, b1] = schedule_rates(t_km1);
    Tensor z = z_k;
    for (size_t i = 0; i < z.size(); ++i) z.v[i] = a1 * x.v[i] + b1 * e.v[i];
    return z;
}

enum class CfgConvention { PaperPrinted, Standard };

struct GuidanceConfig {
    double lambda_cfg = 0.0;
    double phi = 0.0;
    CfgConvention convention = CfgConvention::PaperPrinted;

    void validate() const {
        if (phi < 0.0 || phi > 1.0) throw std::invalid_argument("guidance: phi must be in [0,1]");
    }
};

// PaperPrinted follows the published formula verbatim:
//   cond + lambda * (uncond - cond)
// Standard is the common usage: uncond + lambda * (cond - uncond).
inline Tensor cfg_combine(const Tensor& pred_cond, const Tensor& pred_uncond, double lambda_cfg,
                          CfgConvention convention) {
    if (!pred_cond.same_shape(pred_uncond)) throw std::invalid_argument("cfg_combine: shape mismatch");
    Tensor out = pred_cond;
    if (convention == CfgConvention::PaperPrinted) {
        for (size_t i = 0; i < out.size(); ++i)
            out.v[i] = pred_cond.v[i] + lambda_cfg * (pred_uncond.v[i] - pred_cond.v[i]);
    } else {
        for (size_t i = 0; i < out.size(); ++i)
            out.v[i] = pred_uncond.v[i] + lambda_cfg * (pred_cond.v[i] - pred_uncond.v[i]);
    }
    return out;
}

namespace detail {
inline double std_all(const Tensor& x) {
    double mean = 0.0;
    for (double v : x.v) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x.v) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(x.size()));
}
}  // namespace detail

// Rescale the guided prediction's standard deviation toward the positive
// branch's: result = phi * guided * (std(ref)/std(guided)) + (1-phi) * guided.
// Zero-variance guided input is returned unchanged.
inline Tensor cfg_rescale(const Tensor& guided, const Tensor& positive_ref, double phi) {
    if (!guided.same_shape(positive_ref)) throw std::invalid_argument("cfg_rescale: shape mismatch");
    if (phi < 0.0 || phi > 1.0) throw std::invalid_argument("cfg_rescale: phi must be in [0,1]");
    const double sg = detail::std_all(guided);
    if (sg <= 0.0) return guided;
    const double ratio = detail::std_all(positive_ref) / sg;
    Tensor out = guided;
    for (auto& v : out.v) v = phi * (v * ratio) + (1.0 - phi) * v;
    return out;
}

struct StyleVector {
    std::vector<double> mean;  // dim_y
};

// Per-dimension average over timesteps of a latent sequence.
inline StyleVector style_vector(const LatentSequence& c_style) {
    const int n = c_style.steps();
    const int d = c_style.dim();
    if (n < 1) throw std::invalid_argument("style_vector: empty sequence");
    StyleVector sv;
    sv.mean.assign(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) sv.mean[static_cast<size_t>(j)] += c_style.vectors.at(i, j);
    for (auto& m : sv.mean) m /= static_cast<double>(n);
    return sv;
}

// Shift the per-dimension time-mean of c_hat toward the style vector,
// weighted by beta_k^2; per-timestep deviations are untouched.
inline Tensor style_ground(const Tensor& c_hat, const StyleVector& style, double beta_k) {
    if (c_hat.rank() != 2 || c_hat.dim(1) != static_cast<int>(style.mean.size()))
        throw std::invalid_argument("style_ground: dim mismatch");
    const int n = c_hat.dim(0);
    const int d = c_hat.dim(1);
    const double w = beta_k * beta_k;
    Tensor out = c_hat;
    for (int j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += c_hat.at(i, j);
        mu /= static_cast<double>(n);
        const double shift = w * (style.mean[static_cast<size_t>(j)] - mu);
        for (int i = 0; i < n; ++i) out.at(i, j) += shift;
    }
    return out;
}

struct SamplerConfig {
    int steps = 64;  // K
    GuidanceConfig guidance;
    bool has_style = false;
    StyleVector style;
    uint64_t seed = 0;

    void validate() const {
        if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
        guidance.validate();
    }
};

// v-prediction callback: (z_t [N x dim_y], t, cond [N x dim_x] or nullptr).
using DenoiseFn = std::function<Tensor(const Tensor&, double, const Tensor*)>;

// DDIM sampling loop with CFG, phi-rescaling and optional style grounding.
// Uniform t-grid of K+1 knots from 1 to 0; returns the final denoised x_hat.
inline LatentSequence sample(const LatentSequence& c_x, int dim_y, const SamplerConfig& cfg,
                             const DenoiseFn& denoise, const NoiseSchedule& sched = NoiseSchedule{}) {
    cfg.validate();
    const int n = c_x.steps();
    const int K = cfg.steps;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    Tensor z({n, dim_y});
    for (auto& v : z.v) v = nd(rng);

    const bool guided = cfg.guidance.lambda_cfg != 0.0;
    Tensor x_hat = z;
    for (int k = 0; k < K; ++k) {
        const double t_k = 1.0 - static_cast<double>(k) / K;
        const double t_km1 = 1.0 - static_cast<double>(k + 1) / K;

        Tensor v_hat = denoise(z, t_k, &c_x.vectors);
        if (guided) {
            const Tensor v_uncond = denoise(z, t_k, nullptr);
            const Tensor combined =
                cfg_combine(v_hat, v_uncond, cfg.guidance.lambda_cfg, cfg.guidance.convention);
            v_hat = cfg_rescale(combined, v_hat, cfg.guidance.phi);
        }

        x_hat = x_from_v(z, v_hat, t_k);
        if (cfg.has_style) x_hat = style_ground(x_hat, cfg.style, sched.beta(t_k));
        const Tensor eps_hat = eps_from_v(z, v_hat, t_k);
        auto [a1, b1] = schedule_rates(t_km1);
        for (size_t i = 0; i < z.size(); ++i) z.v[i] = a1 * x_hat.v[i] + b1 * eps_hat.v[i];
    }

    LatentSequence out;
    out.vectors = std::move(x_hat);
    out.r_time = c_x.r_time;
    out.source_kind = SourceKind::Stem;
    return out;
}

}  // namespace stemgen
