#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "fd_check.hpp"
#include "stemgen/autoencoder.hpp"
#include "stemgen/checkpoint.hpp"
#include "stemgen/latent.hpp"
#include "stemgen/unet.hpp"

using namespace stemgen;

namespace {

UNetConfig small_unet_cfg() {
    UNetConfig cfg;
    cfg.in_dim = 3;
    cfg.cond_dim = 2;
    cfg.channel_schedule = {8, 12};
    cfg.attn_levels = {1};
    cfg.t_embed_dim = 4;
    cfg.heads = 2;
    return cfg;
}

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> nd(0.0, s);
    Tensor t(std::move(shape));
    for (auto& v : t.v) v = nd(rng);
    return t;
}

Waveform random_wave(int n, int sr, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 0.2);
    Waveform w;
    w.sample_rate = sr;
    w.left.resize(static_cast<size_t>(n));
    w.right.resize(static_cast<size_t>(n));
    for (auto& s : w.left) s = nd(rng);
    for (auto& s : w.right) s = nd(rng);
    return w;
}

}  // namespace

TEST_CASE("unet: length generalization, same params at N=16 and N=33") {
    std::mt19937_64 rng(31);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    for (int n : {16, 33, 64}) {
        Tensor z = randn({n, 3}, rng);
        Tensor c = randn({n, 2}, rng);
        Tensor out = unet.forward(ps, z, 0.5, &c);
        CHECK(out.dim(0) == n);
        CHECK(out.dim(1) == 3);
        for (double v : out.v) CHECK(std::isfinite(v));
    }
}

TEST_CASE("unet: absent conditioning equals zero conditioning bitwise") {
    std::mt19937_64 rng(32);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    Tensor z = randn({16, 3}, rng);
    Tensor zeros({16, 2});
    auto a = unet.forward(ps, z, 0.3, nullptr);
    auto b = unet.forward(ps, z, 0.3, &zeros);
    CHECK(a.v == b.v);
}

TEST_CASE("unet: N mismatch between z and conditioning errors") {
    std::mt19937_64 rng(33);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    Tensor z = randn({16, 3}, rng);
    Tensor c = randn({8, 2}, rng);
    CHECK_THROWS(unet.forward(ps, z, 0.3, &c));
}

TEST_CASE("unet: deterministic forward") {
    std::mt19937_64 rng(34);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    Tensor z = randn({16, 3}, rng);
    Tensor c = randn({16, 2}, rng);
    auto a = unet.forward(ps, z, 0.3, &c);
    auto b = unet.forward(ps, z, 0.3, &c);
    CHECK(a.v == b.v);
}

TEST_CASE("unet: full-model gradient check on sampled parameters") {
    std::mt19937_64 rng(35);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    Tensor z = randn({8, 3}, rng);
    Tensor c = randn({8, 2}, rng);

    auto forward = [&]() {
        Tape tp(&ps, false);
        int out = unet.build(tp, tp.transpose(tp.leaf(z)), tp.transpose(tp.leaf(c)), 0.4);
        return tp.val(tp.sum_all(tp.square(out))).v[0];
    };
    ps.zero_grad();
    Tape tp(&ps);
    int out = unet.build(tp, tp.transpose(tp.leaf(z)), tp.transpose(tp.leaf(c)), 0.4);
    tp.backward(tp.sum_all(tp.square(out)));

    // check a handful of parameter tensors end to end
    for (int pid : {unet.conv_in.w1, unet.down_res[1].w2, unet.attns[0].wq,
                    unet.attns[0].dpb.w[0], unet.up_res[0].w1, unet.out_w}) {
        CHECK(fd::max_rel_err(ps.value(pid).v, forward, ps.grad(pid).v) < 1e-3);
    }
}

TEST_CASE("unet: every parameter receives gradient on a random batch") {
    std::mt19937_64 rng(36);
    ParamStore ps;
    auto unet = UNet::create(small_unet_cfg(), ps, rng);
    ps.zero_grad();
    Tape tp(&ps);
    Tensor z = randn({8, 3}, rng);
    Tensor c = randn({8, 2}, rng);
    int out = unet.build(tp, tp.transpose(tp.leaf(z)), tp.transpose(tp.leaf(c)), 0.37);
    tp.backward(tp.sum_all(tp.square(out)));
    for (const auto& e : ps.entries) {
        double norm = 0.0;
        for (double g : e.grad.v) norm += g * g;
        INFO(e.name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("conditioning dropout: stats and determinism") {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 100; ++i) CHECK_FALSE(conditioning_dropout(0.0, rng));

    std::mt19937_64 r2(38);
    int drops = 0;
    for (int i = 0; i < 10000; ++i) drops += conditioning_dropout(0.15, r2) ? 1 : 0;
    const double frac = drops / 10000.0;
    CHECK(frac > 0.13);
    CHECK(frac < 0.17);

    std::mt19937_64 ra(39), rb(39);
    for (int i = 0; i < 200; ++i) CHECK(conditioning_dropout(0.15, ra) == conditioning_dropout(0.15, rb));

    CHECK_THROWS(conditioning_dropout(1.0, rng));
}

TEST_CASE("autoencoder: compression accounting and desk framing arithmetic") {
    std::mt19937_64 rng(40);
    ParamStore ps;
    AutoencoderConfig cfg;  // desk defaults: r_time 256, hop 64, dim 8
    auto ae = Autoencoder::create(cfg, ps, rng);

    // T = 2 * r_time -> N = 2
    auto c2 = ae.encode(ps, random_wave(512, 16000, rng));
    CHECK(c2.steps() == 2);
    CHECK(c2.dim() == 8);

    // 1 s at 16 kHz -> floor(16000/256) = 62 latent steps
    auto c62 = ae.encode(ps, random_wave(16000, 16000, rng));
    CHECK(c62.steps() == 62);

    // decode length contract: N=2 -> 512 samples
    auto w = ae.decode(ps, c2);
    CHECK(static_cast<int>(w.frames()) == 512);

    // zero latent stays finite
    auto wz = ae.decode(ps, LatentSequence::zeros(4, 8, 256, SourceKind::Stem));
    CHECK(static_cast<int>(wz.frames()) == 1024);

    CHECK_THROWS(ae.decode(ps, LatentSequence::zeros(4, 5, 256, SourceKind::Stem)));
    Waveform empty;
    empty.sample_rate = 16000;
    CHECK_THROWS(ae.encode(ps, empty));
}

TEST_CASE("autoencoder: encode/decode deterministic and length-generalizing") {
    std::mt19937_64 rng(41);
    ParamStore ps;
    AutoencoderConfig cfg;
    auto ae = Autoencoder::create(cfg, ps, rng);
    auto w = random_wave(4096, 16000, rng);
    auto a = ae.encode(ps, w);
    auto b = ae.encode(ps, w);
    CHECK(a.vectors.v == b.vectors.v);

    // longer input than anything "trained" on still encodes/decodes
    auto wl = random_wave(40960, 16000, rng);
    auto cl = ae.encode(ps, wl);
    CHECK(cl.steps() == 160);
    auto back = ae.decode(ps, cl);
    CHECK(static_cast<int>(back.frames()) == 160 * 256);
}

TEST_CASE("autoencoder: every generator parameter receives gradient") {
    std::mt19937_64 rng(42);
    ParamStore ps, cps;
    AutoencoderConfig cfg;
    cfg.mssd_scales = MultiScaleConfig{{32, 64}, 4};
    AeTrainer tr(cfg, ps, cps, rng);
    tr.train_step({random_wave(1024, 16000, rng)});
    // gradients were consumed by the step; run a manual pass instead
    ps.zero_grad();
    Tape tp(&ps);
    int F = 0;
    auto w = random_wave(1024, 16000, rng);
    Tensor spec_in = tr.ae.spec_input(w, &F);
    int latent = tr.ae.build_encoder(tp, tp.leaf(spec_in));
    auto heads = tr.ae.build_decoder(tp, latent);
    int rec = tp.mean_all(tp.abs_(tp.sub(heads.logmag, tp.leaf(spec_in))));
    int wav = tp.istft_ri(tr.ae.build_channel_frames(tp, heads, 0), cfg.stft, F * cfg.stft.hop_len);
    tp.backward(tp.add(rec, tp.mean_all(tp.square(wav))));
    for (const auto& e : ps.entries) {
        if (e.name.find("phase") != std::string::npos && e.name.find("_b") != std::string::npos)
            continue;  // phase bias of the unused right channel may be zero-grad here
        double norm = 0.0;
        for (double g : e.grad.v) norm += g * g;
        INFO(e.name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("autoencoder: short training reduces reconstruction loss") {
    std::mt19937_64 rng(43);
    ParamStore ps, cps;
    AutoencoderConfig cfg;
    cfg.base_channels = 8;
    cfg.mssd_scales = MultiScaleConfig{{32, 64}, 4};
    AeTrainer tr(cfg, ps, cps, rng, 3e-4);

    std::vector<Waveform> clips;
    for (int i = 0; i < 4; ++i) clips.push_back(random_wave(1024, 16000, rng));

    const double first = tr.train_step(clips).rec;
    double last = first;
    for (int step = 0; step < 60; ++step) last = tr.train_step(clips).rec;
    CHECK(last < first);
}

TEST_CASE("autoencoder: critic path trains without blowing up") {
    std::mt19937_64 rng(44);
    ParamStore ps, cps;
    AutoencoderConfig cfg;
    cfg.base_channels = 8;
    cfg.use_critics = true;
    cfg.mel_bins = 16;
    cfg.mssd_scales = MultiScaleConfig{{32}, 4};
    AeTrainer tr(cfg, ps, cps, rng, 1e-4);
    std::vector<Waveform> clips = {random_wave(1024, 16000, rng)};
    for (int step = 0; step < 3; ++step) {
        auto losses = tr.train_step(clips);
        CHECK(std::isfinite(losses.combined));
        CHECK(std::isfinite(losses.critic));
        CHECK(losses.critic >= 0.0);
    }
}

TEST_CASE("latents: file round trip is lossless for f32 payloads") {
    std::mt19937_64 rng(45);
    LatentSequence c = LatentSequence::zeros(10, 4, 256, SourceKind::Stem);
    std::normal_distribution<double> nd;
    for (auto& v : c.vectors.v) v = static_cast<float>(nd(rng));  // f32-representable
    write_latents("/tmp/stemgen_test.lats", c);
    auto back = read_latents("/tmp/stemgen_test.lats");
    CHECK(back.steps() == 10);
    CHECK(back.dim() == 4);
    CHECK(back.r_time == 256);
    CHECK(back.source_kind == SourceKind::Stem);
    CHECK(back.vectors.v == c.vectors.v);
}

TEST_CASE("checkpoint: round trip preserves f32 values, rejects mismatches") {
    std::mt19937_64 rng(46);
    ParamStore ps;
    ps.add("a", {2, 3}, 0.5, rng);
    ps.add("b", {4}, 0.5, rng);
    // store f32-representable values so the round trip is exact
    for (auto& e : ps.entries)
        for (auto& v : e.value.v) v = static_cast<float>(v);
    write_checkpoint("/tmp/stemgen_test.ckpt", ps, {{"kind", "test"}});

    ParamStore ps2;
    std::mt19937_64 rng2(99);
    ps2.add("a", {2, 3}, 0.5, rng2);
    ps2.add("b", {4}, 0.5, rng2);
    auto meta = read_checkpoint("/tmp/stemgen_test.ckpt", ps2);
    CHECK(meta["kind"] == "test");
    for (size_t i = 0; i < ps.entries.size(); ++i)
        CHECK(ps2.entries[i].value.v == ps.entries[i].value.v);

    ParamStore bad;
    std::mt19937_64 rng3(1);
    bad.add("a", {2, 3}, 0.5, rng3);
    CHECK_THROWS(read_checkpoint("/tmp/stemgen_test.ckpt", bad));
}
