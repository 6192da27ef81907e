#pragma once

#include <ostream>
#include <random>

#include "stemgen/dataset.hpp"
#include "stemgen/optim.hpp"
#include "stemgen/unet.hpp"

namespace stemgen {

// Denoiser training driver: uniform t, conditioning dropout, AdamW on the
// batch-mean v-space loss.
struct DiffusionTrainer {
    UNet unet;
    ParamStore params;
    Optimizer opt;
    std::mt19937_64 rng;

    DiffusionTrainer(const UNetConfig& cfg, uint64_t seed,
                     OptimizerConfig oc = OptimizerConfig::diffusion_defaults())
        : opt(oc), rng(seed) {
        unet = UNet::create(cfg, params, rng);
    }

    double train_step(const std::vector<const LatentPair*>& batch) {
        if (batch.empty()) throw std::invalid_argument("diffusion train: empty batch");
        std::uniform_real_distribution<double> ut(0.0, 1.0);
        Tape tp(&params, true);
        int total = -1;
        for (const LatentPair* item : batch) {
            const bool drop = conditioning_dropout(unet.cfg.cond_dropout_p, rng);
            const double t = ut(rng);
            int l = diffusion_example_loss(tp, unet, item->stem.vectors, item->mix.vectors, drop,
                                           t, rng);
            total = total < 0 ? l : tp.add(total, l);
        }
        int loss = tp.scale(total, 1.0 / static_cast<double>(batch.size()));
        const double value = tp.val(loss).v[0];
        tp.backward(loss);
        opt.step(params);
        return value;
    }

    // Runs `steps` updates over random batches; optionally appends
    // "step,loss" CSV rows to `csv`.
    void train(const SyntheticDataset& ds, int steps, int batch_size, std::ostream* csv = nullptr,
               int log_every = 50) {
        if (ds.items.empty()) throw std::invalid_argument("diffusion train: empty dataset");
        std::uniform_int_distribution<size_t> pick(0, ds.items.size() - 1);
        if (csv) *csv << "step,loss\n";
        for (int s = 0; s < steps; ++s) {
            std::vector<const LatentPair*> batch;
            for (int b = 0; b < batch_size; ++b) batch.push_back(&ds.items[pick(rng)]);
            const double loss = train_step(batch);
            if (csv && (s % log_every == 0 || s == steps - 1)) *csv << s << "," << loss << "\n";
        }
    }
};

}  // namespace stemgen
