#pragma once

#include <cmath>
#include <stdexcept>

#include "stemgen/autodiff.hpp"

namespace stemgen {

enum class OptimizerKind { Adam, AdamW };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;  // AdamW only
    double eps = 1e-8;

    // Paper settings: Adam(0.5, 0.9) for the autoencoder,
    // AdamW(0.9, 0.999) for the diffusion model.
    static OptimizerConfig ae_defaults(double lr = 1e-4) {
        return {OptimizerKind::Adam, lr, 0.5, 0.9, 0.0, 1e-8};
    }
    static OptimizerConfig diffusion_defaults(double lr = 1e-4) {
        return {OptimizerKind::AdamW, lr, 0.9, 0.999, 1e-2, 1e-8};
    }

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("optimizer: lr must be > 0");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("optimizer: betas must be in [0,1)");
    }
};

struct Optimizer {
    OptimizerConfig cfg;
    long long step_count = 0;

    explicit Optimizer(OptimizerConfig c) : cfg(c) { cfg.validate(); }

    void step(ParamStore& ps) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
        for (auto& e : ps.entries) {
            for (size_t i = 0; i < e.value.size(); ++i) {
                const double g = e.grad.v[i];
                if (!std::isfinite(g))
                    throw std::runtime_error("optimizer: non-finite gradient in " + e.name);
                e.m.v[i] = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * g;
                e.s.v[i] = cfg.beta2 * e.s.v[i] + (1.0 - cfg.beta2) * g * g;
                const double mhat = e.m.v[i] / bc1;
                const double shat = e.s.v[i] / bc2;
                if (cfg.kind == OptimizerKind::AdamW)
                    e.value.v[i] *= 1.0 - cfg.lr * cfg.weight_decay;
                e.value.v[i] -= cfg.lr * mhat / (std::sqrt(shat) + cfg.eps);
            }
        }
    }
};

}  // namespace stemgen
