#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "stemgen/nn.hpp"
#include "stemgen/optim.hpp"

using namespace stemgen;

TEST_CASE("sinusoidal embed: t=0 gives sin=0 cos=1, shape contract") {
    auto e = sinusoidal_embed(0.0, 128);
    REQUIRE(static_cast<int>(e.size()) == 128);
    for (int i = 0; i < 64; ++i) {
        CHECK(e.v[static_cast<size_t>(2 * i)] == doctest::Approx(0.0));
        CHECK(e.v[static_cast<size_t>(2 * i + 1)] == doctest::Approx(1.0));
    }
    for (double x : e.v) CHECK(std::isfinite(x));
    CHECK_THROWS(sinusoidal_embed(0.5, 7));
}

TEST_CASE("sinusoidal embed: injective on a 64-point grid") {
    const int dim = 32;
    std::vector<Tensor> embs;
    for (int i = 0; i < 64; ++i) embs.push_back(sinusoidal_embed(i / 64.0, dim));
    for (int i = 0; i < 64; ++i)
        for (int j = i + 1; j < 64; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < dim; ++k) {
                const double d = embs[static_cast<size_t>(i)].v[static_cast<size_t>(k)] -
                                 embs[static_cast<size_t>(j)].v[static_cast<size_t>(k)];
                d2 += d * d;
            }
            CHECK(d2 > 0.0);
        }
}

TEST_CASE("dpb bias: Toeplitz and submatrix extension for random params") {
    std::mt19937_64 rng(41);
    ParamStore ps;
    DpbConfig cfg;
    cfg.heads = 2;
    auto mlp = DpbMlp::create("dpb", cfg, ps, rng);

    for (int head = 0; head < 2; ++head) {
        auto b64 = dpb_bias(mlp, ps, 64, 64, head);
        for (int i = 0; i + 1 < 64; ++i)
            for (int j = 0; j + 1 < 64; ++j)
                CHECK(b64.at(i + 1, j + 1) == b64.at(i, j));

        auto b256 = dpb_bias(mlp, ps, 256, 256, head);
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j < 64; ++j)
                CHECK(b64.at(i, j) == b256.at(i, j));
    }
}

TEST_CASE("dpb bias: zeroed output layer leaves softmax unchanged") {
    std::mt19937_64 rng(42);
    ParamStore ps;
    DpbConfig cfg;
    cfg.heads = 1;
    auto mlp = DpbMlp::create("dpb", cfg, ps, rng);
    // zero the output layer -> constant bias
    ps.value(mlp.w.back()).fill(0.0);
    ps.value(mlp.b.back()).fill(0.0);
    auto b = dpb_bias(mlp, ps, 8, 8, 0);
    for (double x : b.v) CHECK(x == 0.0);
}

TEST_CASE("attention: L=1 returns V; zero scores give column means of V") {
    ParamStore ps;
    Tape tp(&ps);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;

    Tensor v1({1, 4});
    for (auto& x : v1.v) x = nd(rng);
    int q = tp.leaf(Tensor({1, 4}));
    int out = attention_qkv(tp, q, q, tp.leaf(v1), -1);
    for (int j = 0; j < 4; ++j) CHECK(tp.val(out).at(0, j) == doctest::Approx(v1.at(0, j)));

    // Q = 0 -> uniform weights
    Tensor vv({3, 2});
    for (auto& x : vv.v) x = nd(rng);
    int q0 = tp.leaf(Tensor({3, 2}));
    int out2 = attention_qkv(tp, q0, tp.leaf(vv), tp.leaf(vv), -1);
    for (int j = 0; j < 2; ++j) {
        const double mean = (vv.at(0, j) + vv.at(1, j) + vv.at(2, j)) / 3.0;
        for (int i = 0; i < 3; ++i) CHECK(tp.val(out2).at(i, j) == doctest::Approx(mean));
    }
}

TEST_CASE("attention rows sum to one") {
    ParamStore ps;
    Tape tp(&ps);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    Tensor s({5, 5});
    for (auto& x : s.v) x = nd(rng);
    int sm = tp.softmax_rows(tp.leaf(s));
    for (int i = 0; i < 5; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 5; ++j) acc += tp.val(sm).at(i, j);
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
    }
}

namespace {

// Runs tape forward/backward for a scalar loss built by `build` and
// compares input gradients against central differences.
double grad_check_input(Tensor& x, const std::function<int(Tape&, int)>& build) {
    ParamStore ps;
    auto forward = [&]() {
        Tape tp(&ps, false);
        return tp.val(build(tp, tp.leaf(x))).v[0];
    };
    Tape tp(&ps);
    int in = tp.leaf(x);
    int loss = build(tp, in);
    tp.backward(loss);
    return fd::max_rel_err(x.v, forward, tp.grad(in).v);
}

}  // namespace

TEST_CASE("gradient: elementwise ops vs finite differences") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    Tensor x({4, 6});
    for (auto& v : x.v) v = nd(rng) + 3.0;  // keep log/rsqrt domain positive, abs off the kink

    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.mean_all(t.silu(in)); }) < 1e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.mean_all(t.square(t.log_(in))); }) < 1e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.sum_all(t.rsqrt(in)); }) < 1e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.mean_all(t.abs_(t.add_scalar(in, -10.0))); }) < 2e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.sum_all(t.exp_(t.scale(in, 0.3))); }) < 1e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) { return t.mean_all(t.mul(in, t.silu(in))); }) < 1e-3);
}

TEST_CASE("gradient: matmul, softmax, attention composite") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Tensor x({4, 8});
    for (auto& v : x.v) v = nd(rng);

    CHECK(grad_check_input(x, [](Tape& t, int in) {
              return t.sum_all(t.matmul(in, t.transpose(in)));
          }) < 1e-3);
    CHECK(grad_check_input(x, [](Tape& t, int in) {
              return t.mean_all(t.softmax_rows(in));
          }) < 1e-3);
    // full attention with Q=K=V=x (L=4, d=8), quadratic loss
    CHECK(grad_check_input(x, [](Tape& t, int in) {
              return t.sum_all(t.square(attention_qkv(t, in, in, in, -1)));
          }) < 1e-3);
}

TEST_CASE("gradient: conv block on 4x16 input, all strides") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> nd;
    for (int stride : {1, 2, -2}) {
        ParamStore ps;
        auto blk = ConvBlockParams::create("b", 4, 6, 3, stride, ps, rng);
        // nonzero gate so the residual branch participates
        ps.value(blk.gain).v[0] = 0.7;

        Tensor x({4, 16});
        for (auto& v : x.v) v = nd(rng);

        auto forward = [&]() {
            Tape tp(&ps, false);
            return tp.val(tp.sum_all(tp.square(conv_block(tp, tp.leaf(x), blk)))).v[0];
        };
        // input gradient
        {
            Tape tp(&ps);
            int in = tp.leaf(x);
            tp.backward(tp.sum_all(tp.square(conv_block(tp, in, blk))));
            CHECK(fd::max_rel_err(x.v, forward, tp.grad(in).v) < 1e-3);
        }
        // weight gradient
        {
            ps.zero_grad();
            Tape tp(&ps);
            tp.backward(tp.sum_all(tp.square(conv_block(tp, tp.leaf(x), blk))));
            CHECK(fd::max_rel_err(ps.value(blk.w1).v, forward, ps.grad(blk.w1).v) < 1e-3);
            CHECK(fd::max_rel_err(ps.value(blk.gain).v, forward, ps.grad(blk.gain).v) < 1e-3);
        }
    }
}

TEST_CASE("conv block: zero gate is identity / resampled input") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    ParamStore ps;
    auto blk = ConvBlockParams::create("b", 4, 4, 3, 1, ps, rng);
    ps.value(blk.gain).v[0] = 0.0;  // gate off -> identity
    Tensor x({4, 16});
    for (auto& v : x.v) v = nd(rng);
    Tape tp(&ps, false);
    int out = conv_block(tp, tp.leaf(x), blk);
    REQUIRE(tp.val(out).shape == x.shape);
    for (size_t i = 0; i < x.size(); ++i) CHECK(tp.val(out).v[i] == x.v[i]);

    // stride 2 halves even L
    auto down = ConvBlockParams::create("d", 4, 8, 3, 2, ps, rng);
    int out2 = conv_block(tp, tp.leaf(x), down);
    CHECK(tp.val(out2).dim(0) == 8);
    CHECK(tp.val(out2).dim(1) == 8);
}

TEST_CASE("gradient: dpb-attention block through the tape") {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> nd;
    ParamStore ps;
    DpbConfig dc;
    dc.heads = 2;
    dc.mlp_hidden = 8;
    auto attn = AttentionParams::create("a", 8, dc, ps, rng);
    Tensor x({8, 6});
    for (auto& v : x.v) v = nd(rng);

    auto forward = [&]() {
        Tape tp(&ps, false);
        return tp.val(tp.sum_all(tp.square(self_attention_block(tp, tp.leaf(x), attn)))).v[0];
    };
    Tape tp(&ps);
    int in = tp.leaf(x);
    tp.backward(tp.sum_all(tp.square(self_attention_block(tp, in, attn))));
    CHECK(fd::max_rel_err(x.v, forward, tp.grad(in).v) < 1e-3);
    CHECK(fd::max_rel_err(ps.value(attn.wq).v, forward, ps.grad(attn.wq).v) < 1e-3);
    CHECK(fd::max_rel_err(ps.value(attn.dpb.w[0]).v, forward, ps.grad(attn.dpb.w[0]).v) < 1e-3);
}

TEST_CASE("gradient: stft/istft/magsq chain vs finite differences") {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> nd(0.0, 0.3);
    StftConfig cfg = StftConfig::from_hop(8);  // win 32
    Tensor x({64});
    for (auto& v : x.v) v = nd(rng);

    ParamStore ps;
    auto forward = [&]() {
        Tape tp(&ps, false);
        int spec = tp.stft_ri(tp.leaf(x), cfg);
        int w = tp.istft_ri(spec, cfg, 64);
        return tp.val(tp.sum_all(tp.square(tp.magsq(spec)))).v[0] +
               tp.val(tp.mean_all(tp.square(w))).v[0];
    };
    Tape tp(&ps);
    int in = tp.leaf(x);
    int spec = tp.stft_ri(in, cfg);
    int w = tp.istft_ri(spec, cfg, 64);
    int loss = tp.add(tp.sum_all(tp.square(tp.magsq(spec))), tp.mean_all(tp.square(w)));
    tp.backward(loss);
    CHECK(fd::max_rel_err(x.v, forward, tp.grad(in).v) < 1e-3);
}

TEST_CASE("optimizer: zero gradient leaves params unchanged") {
    std::mt19937_64 rng(16);
    ParamStore ps;
    int p = ps.add("p", {3}, 0.1, rng);
    auto before = ps.value(p).v;
    Optimizer opt(OptimizerConfig{OptimizerKind::Adam, 1e-2, 0.9, 0.999, 0.0, 1e-8});
    opt.step(ps);
    CHECK(ps.value(p).v == before);
}

TEST_CASE("optimizer: first Adam step with g=1 moves by -lr (bias corrected)") {
    std::mt19937_64 rng(17);
    ParamStore ps;
    int p = ps.add("p", {1}, 0.0, rng);
    ps.value(p).v[0] = 0.5;
    ps.grad(p).v[0] = 1.0;
    const double lr = 1e-2;
    Optimizer opt(OptimizerConfig{OptimizerKind::Adam, lr, 0.9, 0.999, 0.0, 1e-8});
    opt.step(ps);
    // hand-evaluated: m_hat = 1, s_hat = 1 -> delta = -lr / (1 + eps)
    CHECK(ps.value(p).v[0] == doctest::Approx(0.5 - lr / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("optimizer: AdamW applies decoupled decay") {
    std::mt19937_64 rng(18);
    ParamStore ps;
    int p = ps.add("p", {1}, 0.0, rng);
    ps.value(p).v[0] = 2.0;
    ps.grad(p).v[0] = 1.0;
    const double lr = 1e-2, wd = 0.1;
    Optimizer opt(OptimizerConfig{OptimizerKind::AdamW, lr, 0.9, 0.999, wd, 1e-8});
    opt.step(ps);
    CHECK(ps.value(p).v[0] == doctest::Approx(2.0 * (1.0 - lr * wd) - lr / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("optimizer: NaN gradient raises") {
    std::mt19937_64 rng(19);
    ParamStore ps;
    int p = ps.add("p", {1}, 0.0, rng);
    ps.grad(p).v[0] = std::nan("");
    Optimizer opt(OptimizerConfig{});
    CHECK_THROWS(opt.step(ps));
}
