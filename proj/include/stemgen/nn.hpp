#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/autodiff.hpp"

namespace stemgen {

// Interleaved sin/cos embedding of a scalar in [0,1] at geometrically
// spaced frequencies.
inline Tensor sinusoidal_embed(double t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_embed: dim must be even and > 0");
    Tensor out({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq =
            half > 1 ? std::pow(10000.0, -static_cast<double>(i) / (half - 1)) : 1.0;
        const double ang = 2.0 * std::numbers::pi * freq * t;
        out.v[static_cast<size_t>(2 * i)] = std::sin(ang);
        out.v[static_cast<size_t>(2 * i + 1)] = std::cos(ang);
    }
    return out;
}

struct DpbConfig {
    int mlp_hidden = 64;
    int mlp_layers = 2;
    int heads = 4;

    void validate() const {
        if (mlp_hidden <= 0 || mlp_layers <= 0 || heads <= 0)
            throw std::invalid_argument("dpb config: all fields must be positive");
    }
};

// MLP(i-j) positional bias, one output per head. Raw integer offsets as
// input so the bias extends to any sequence length.
struct DpbMlp {
    DpbConfig cfg;
    std::vector<int> w, b;  // per layer; final layer maps hidden -> heads

    static DpbMlp create(const std::string& prefix, const DpbConfig& cfg, ParamStore& ps,
                         std::mt19937_64& rng) {
        cfg.validate();
        DpbMlp m;
        m.cfg = cfg;
        int in = 1;
        for (int l = 0; l < cfg.mlp_layers; ++l) {
            m.w.push_back(ps.add(prefix + ".w" + std::to_string(l), {in, cfg.mlp_hidden},
                                 std::sqrt(2.0 / in), rng));
            m.b.push_back(ps.add(prefix + ".b" + std::to_string(l), {1, cfg.mlp_hidden}, 0.0, rng));
            in = cfg.mlp_hidden;
        }
        m.w.push_back(ps.add(prefix + ".w_out", {in, cfg.heads}, std::sqrt(1.0 / in), rng));
        m.b.push_back(ps.add(prefix + ".b_out", {1, cfg.heads}, 0.0, rng));
        return m;
    }

    // Returns the diagonal table of shape (Lq+Lk-1, heads); entry (d, h) is
    // the bias for offset i-j = d-(Lk-1).
    int diag_table(Tape& tp, int lq, int lk) const {
        const int n = lq + lk - 1;
        Tensor offs({n, 1});
        for (int d = 0; d < n; ++d) offs.at(d, 0) = static_cast<double>(d - (lk - 1));
        int h = tp.leaf(std::move(offs));
        for (size_t l = 0; l < w.size(); ++l) {
            int z = tp.matmul(h, tp.param(w[l]));
            // row-broadcast bias
            const auto& bv = tp.val(tp.param(b[l]));
            int cols = bv.dim(1);
            int bb = tp.broadcast_cols(tp.reshape(tp.param(b[l]), {cols}), n);
            h = tp.add(z, tp.transpose(bb));
            if (l + 1 < w.size()) h = tp.relu(h);
        }
        return h;  // (n, heads)
    }

    // Toeplitz bias matrix for one head: (Lq, Lk).
    int bias_for_head(Tape& tp, int table, int head, int lq, int lk) const {
        const int n = lq + lk - 1;
        int col = tp.slice_ch(tp.transpose(table), head, 1);  // (1, n)
        return tp.toeplitz(tp.reshape(col, {n}), lq, lk);
    }
};

// Plain (non-tape) DPB bias for inspection and property tests.
inline Tensor dpb_bias(const DpbMlp& mlp, ParamStore& ps, int lq, int lk, int head) {
    Tape tp(&ps, false);
    int table = mlp.diag_table(tp, lq, lk);
    int b = mlp.bias_for_head(tp, table, head, lq, lk);
    return tp.val(b);
}

struct AttentionParams {
    int heads = 4;
    int d_model = 0;
    int wq, wk, wv, wo;  // each (d_model, d_model)
    DpbMlp dpb;

    static AttentionParams create(const std::string& prefix, int d_model, const DpbConfig& dpb_cfg,
                                  ParamStore& ps, std::mt19937_64& rng) {
        if (d_model % dpb_cfg.heads != 0)
            throw std::invalid_argument("attention: d_model must divide by heads");
        AttentionParams a;
        a.heads = dpb_cfg.heads;
        a.d_model = d_model;
        const double sc = std::sqrt(1.0 / d_model);
        a.wq = ps.add(prefix + ".wq", {d_model, d_model}, sc, rng);
        a.wk = ps.add(prefix + ".wk", {d_model, d_model}, sc, rng);
        a.wv = ps.add(prefix + ".wv", {d_model, d_model}, sc, rng);
        a.wo = ps.add(prefix + ".wo", {d_model, d_model}, sc, rng);
        a.dpb = DpbMlp::create(prefix + ".dpb", dpb_cfg, ps, rng);
        return a;
    }
};

// Single-matrix attention with additive bias:
// softmax(Q K^T / sqrt(d) + B) V, shapes Q,K,V: (L, d), B: (L, L).
inline int attention_qkv(Tape& tp, int q, int k, int v, int bias_or_neg1) {
    const int d = tp.val(q).dim(1);
    int scores = tp.scale(tp.matmul(q, tp.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    if (bias_or_neg1 >= 0) scores = tp.add(scores, bias_or_neg1);
    return tp.matmul(tp.softmax_rows(scores), v);
}

// Multi-head DPB self-attention over a (C, L) feature map with residual.
inline int self_attention_block(Tape& tp, int x, const AttentionParams& p) {
    const int L = tp.val(x).dim(1);
    const int dh = p.d_model / p.heads;
    int xt = tp.transpose(x);  // (L, C)
    int q = tp.matmul(xt, tp.param(p.wq));
    int k = tp.matmul(xt, tp.param(p.wk));
    int v = tp.matmul(xt, tp.param(p.wv));
    int table = p.dpb.diag_table(tp, L, L);
    std::vector<int> heads_out;
    for (int h = 0; h < p.heads; ++h) {
        // head slice along feature dim: transpose -> slice channels -> back
        int qh = tp.transpose(tp.slice_ch(tp.transpose(q), h * dh, dh));
        int kh = tp.transpose(tp.slice_ch(tp.transpose(k), h * dh, dh));
        int vh = tp.transpose(tp.slice_ch(tp.transpose(v), h * dh, dh));
        int bias = p.dpb.bias_for_head(tp, table, h, L, L);
        int oh = attention_qkv(tp, qh, kh, vh, bias);  // (L, dh)
        heads_out.push_back(tp.transpose(oh));         // (dh, L)
    }
    int cat = tp.concat_ch(heads_out);                          // (C, L)
    int out = tp.matmul(tp.transpose(cat), tp.param(p.wo));     // (L, C)
    return tp.add(x, tp.transpose(out));
}

struct ConvBlockParams {
    int w1, b1, w2, b2;
    int gain;          // scalar residual gate, zero-init
    int skip_w = -1;   // 1x1 projection when channel counts differ
    int skip_b = -1;
    int stride = 1;    // 2 = downsample; -2 = upsample x2
    int cin = 0, cout = 0;

    static ConvBlockParams create(const std::string& prefix, int cin, int cout, int kernel,
                                  int stride, ParamStore& ps, std::mt19937_64& rng) {
        ConvBlockParams p;
        p.cin = cin;
        p.cout = cout;
        p.stride = stride;
        const double s1 = std::sqrt(2.0 / (cin * kernel));
        const double s2 = std::sqrt(2.0 / (cout * kernel));
        p.w1 = ps.add(prefix + ".w1", {cout, cin, kernel}, s1, rng);
        p.b1 = ps.add(prefix + ".b1", {cout}, 0.0, rng);
        p.w2 = ps.add(prefix + ".w2", {cout, cout, kernel}, s2, rng);
        p.b2 = ps.add(prefix + ".b2", {cout}, 0.0, rng);
        // small nonzero start: near-identity block, but no dead branch
        p.gain = ps.add(prefix + ".gain", {1}, 0.0, rng);
        ps.value(p.gain).v[0] = 0.1;
        if (cin != cout || stride != 1) {
            p.skip_w = ps.add(prefix + ".skip_w", {cout, cin, 1}, std::sqrt(1.0 / cin), rng);
            p.skip_b = ps.add(prefix + ".skip_b", {cout}, 0.0, rng);
        }
        return p;
    }
};

// Residual conv block with zero-init gate:
//   y = skip(x) + gain * conv2(silu(conv1(silu(x))))
// stride 2 downsamples, stride -2 upsamples (nearest x2 before convs).
inline int conv_block(Tape& tp, int x, const ConvBlockParams& p) {
    int xin = x;
    int conv_stride = 1;
    if (p.stride == 2) conv_stride = 2;
    if (p.stride == -2) xin = tp.upsample2(x);
    int h = tp.conv1d(tp.silu(xin), tp.param(p.w1), tp.param(p.b1), conv_stride);
    h = tp.conv1d(tp.silu(h), tp.param(p.w2), tp.param(p.b2), 1);
    h = tp.scale_by(h, tp.param(p.gain));
    int skip;
    if (p.skip_w >= 0)
        skip = tp.conv1d(xin, tp.param(p.skip_w), tp.param(p.skip_b), conv_stride);
    else
        skip = xin;
    return tp.add(skip, h);
}

}  // namespace stemgen
