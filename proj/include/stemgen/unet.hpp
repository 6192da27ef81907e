#pragma once

#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/diffusion.hpp"
#include "stemgen/nn.hpp"
#include "stemgen/optim.hpp"

namespace stemgen {

struct UNetConfig {
    int in_dim = 8;    // dim_y
    int cond_dim = 8;  // dim_x
    std::vector<int> channel_schedule = {32, 64, 128};
    std::set<int> attn_levels = {2};  // deepest level by default
    int t_embed_dim = 16;
    double cond_dropout_p = 0.15;
    int heads = 4;
    int kernel = 3;

    void validate() const {
        if (channel_schedule.empty()) throw std::invalid_argument("unet: empty channel schedule");
        if (cond_dropout_p < 0.0 || cond_dropout_p >= 1.0)
            throw std::invalid_argument("unet: cond_dropout_p must be in [0,1)");
        for (int l : attn_levels)
            if (l < 0 || l >= static_cast<int>(channel_schedule.size()))
                throw std::invalid_argument("unet: attention level out of range");
        if (t_embed_dim <= 0 || t_embed_dim % 2 != 0)
            throw std::invalid_argument("unet: t_embed_dim must be even and positive");
    }
    int levels() const { return static_cast<int>(channel_schedule.size()); }
};

// Conditional v-prediction U-Net over latent sequences. Fully convolutional
// along time; DPB attention keeps the attention levels length-extensible.
struct UNet {
    UNetConfig cfg;
    ConvBlockParams conv_in;
    std::vector<ConvBlockParams> down_res;    // per level
    std::vector<ConvBlockParams> down_samp;   // levels-1 stride-2 blocks
    std::vector<int> attn_idx;                // per level, -1 if none
    std::vector<AttentionParams> attns;
    std::vector<ConvBlockParams> up_samp;     // levels-1 upsample blocks
    std::vector<ConvBlockParams> up_res;      // per non-deepest level (after skip concat)
    int out_w = -1, out_b = -1;

    static UNet create(const UNetConfig& cfg, ParamStore& ps, std::mt19937_64& rng) {
        cfg.validate();
        UNet u;
        u.cfg = cfg;
        const auto& ch = cfg.channel_schedule;
        const int L = cfg.levels();
        const int te = cfg.t_embed_dim;
        const int k = cfg.kernel;

        u.conv_in = ConvBlockParams::create("unet.in", cfg.in_dim + cfg.cond_dim + te, ch[0], k, 1, ps, rng);

        DpbConfig dpb;
        dpb.heads = cfg.heads;
        u.attn_idx.assign(static_cast<size_t>(L), -1);
        for (int l = 0; l < L; ++l) {
            u.down_res.push_back(ConvBlockParams::create("unet.down" + std::to_string(l),
                                                         ch[static_cast<size_t>(l)] + te,
                                                         ch[static_cast<size_t>(l)], k, 1, ps, rng));
            if (cfg.attn_levels.count(l)) {
                u.attn_idx[static_cast<size_t>(l)] = static_cast<int>(u.attns.size());
                u.attns.push_back(AttentionParams::create("unet.attn" + std::to_string(l),
                                                          ch[static_cast<size_t>(l)], dpb, ps, rng));
            }
            if (l + 1 < L)
                u.down_samp.push_back(ConvBlockParams::create("unet.samp" + std::to_string(l),
                                                              ch[static_cast<size_t>(l)],
                                                              ch[static_cast<size_t>(l + 1)], k, 2, ps, rng));
        }
        for (int l = L - 2; l >= 0; --l) {
            u.up_samp.push_back(ConvBlockParams::create("unet.up" + std::to_string(l),
                                                        ch[static_cast<size_t>(l + 1)],
                                                        ch[static_cast<size_t>(l)], k, -2, ps, rng));
            u.up_res.push_back(ConvBlockParams::create("unet.upres" + std::to_string(l),
                                                       2 * ch[static_cast<size_t>(l)] + te,
                                                       ch[static_cast<size_t>(l)], k, 1, ps, rng));
        }
        u.out_w = ps.add("unet.out_w", {cfg.in_dim, ch[0], k}, 1e-3, rng);
        u.out_b = ps.add("unet.out_b", {cfg.in_dim}, 0.0, rng);
        return u;
    }

    // Graph construction. z: (dim_y, N) node, cond: (dim_x, N) node or -1
    // (replaced by zeros), t scalar. Returns (dim_y, N) v-prediction node.
    int build(Tape& tp, int z, int cond, double t) const {
        const int n = tp.val(z).dim(1);
        if (cond < 0) cond = tp.leaf(Tensor({cfg.cond_dim, n}));
        if (tp.val(cond).dim(1) != n)
            throw std::invalid_argument("unet: conditioning length mismatch");

        int temb = tp.leaf(sinusoidal_embed(t, cfg.t_embed_dim));
        auto with_t = [&](int h) {
            return tp.concat_ch({h, tp.broadcast_cols(temb, tp.val(h).dim(1))});
        };

        int h = conv_block(tp, with_t(tp.concat_ch({z, cond})), conv_in);
        std::vector<int> skips;
        const int L = cfg.levels();
        for (int l = 0; l < L; ++l) {
            h = conv_block(tp, with_t(h), down_res[static_cast<size_t>(l)]);
            const int ai = attn_idx[static_cast<size_t>(l)];
            if (ai >= 0) h = self_attention_block(tp, h, attns[static_cast<size_t>(ai)]);
            skips.push_back(h);
            if (l + 1 < L) h = conv_block(tp, h, down_samp[static_cast<size_t>(l)]);
        }
        for (int i = 0; i < L - 1; ++i) {
            const int l = L - 2 - i;
            h = conv_block(tp, h, up_samp[static_cast<size_t>(i)]);
            const int skip = skips[static_cast<size_t>(l)];
            const int want = tp.val(skip).dim(1);
            if (tp.val(h).dim(1) != want)  // odd-length trim after x2 upsample
                h = tp.transpose(tp.slice_ch(tp.transpose(h), 0, want));
            h = conv_block(tp, with_t(tp.concat_ch({h, skip})), up_res[static_cast<size_t>(i)]);
        }
        return tp.conv1d(tp.silu(h), tp.param(out_w), tp.param(out_b), 1);
    }

    // Inference forward. z_t: N x dim_y, cond: N x dim_x or nullptr.
    Tensor forward(ParamStore& ps, const Tensor& z_t, double t, const Tensor* cond) const {
        if (z_t.rank() != 2 || z_t.dim(1) != cfg.in_dim)
            throw std::invalid_argument("unet: z_t must be N x dim_y");
        if (cond && cond->dim(0) != z_t.dim(0))
            throw std::invalid_argument("unet: N mismatch between z_t and conditioning");
        Tape tp(&ps, false);
        int zc = tp.transpose(tp.leaf(z_t));
        int cc = -1;
        if (cond) cc = tp.transpose(tp.leaf(*cond));
        int out = build(tp, zc, cc, t);
        Tensor res = tp.val(tp.transpose(out));
        return res;
    }

    DenoiseFn as_denoise_fn(ParamStore& ps) const {
        return [this, &ps](const Tensor& z, double t, const Tensor* cond) {
            return forward(ps, z, t, cond);
        };
    }
};

// Bernoulli conditioning dropout: true -> conditioning is replaced by the
// unconditional (zero) branch for this example.
inline bool conditioning_dropout(double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("conditioning_dropout: p must be in [0,1)");
    if (p == 0.0) return false;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    return ud(rng) < p;
}

// One v-space denoising training example added to an existing tape.
// Returns the scalar loss node sum||v_hat - v||^2 (weighted by w_t).
inline int diffusion_example_loss(Tape& tp, const UNet& unet, const Tensor& c_y, const Tensor& c_x,
                                  bool drop_cond, double t, std::mt19937_64& rng, double w_t = 1.0) {
    if (c_y.dim(0) != c_x.dim(0))
        throw std::invalid_argument("diffusion loss: N mismatch between c_y and c_x");
    std::normal_distribution<double> nd;
    Tensor eps(c_y.shape);
    for (auto& v : eps.v) v = nd(rng);
    const Tensor z_t = add_noise(c_y, eps, t);
    const Tensor v = v_target(c_y, eps, t);

    int cond = drop_cond ? -1 : tp.transpose(tp.leaf(c_x));
    int v_hat = unet.build(tp, tp.transpose(tp.leaf(z_t)), cond, t);
    int diff = tp.sub(v_hat, tp.transpose(tp.leaf(v)));
    int loss = tp.sum_all(tp.square(diff));
    return w_t == 1.0 ? loss : tp.scale(loss, w_t);
}

}  // namespace stemgen
