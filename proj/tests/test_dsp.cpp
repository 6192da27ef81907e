#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "stemgen/losses.hpp"
#include "stemgen/mel.hpp"
#include "stemgen/stft.hpp"
#include "stemgen/wav.hpp"

using namespace stemgen;

namespace {

std::vector<double> random_signal(int n, std::mt19937_64& rng, double amp = 0.5) {
    std::uniform_real_distribution<double> ud(-amp, amp);
    std::vector<double> x(static_cast<size_t>(n));
    for (auto& s : x) s = ud(rng);
    return x;
}

Waveform random_wave(int n, std::mt19937_64& rng) {
    Waveform w;
    w.left = random_signal(n, rng);
    w.right = random_signal(n, rng);
    return w;
}

}  // namespace

TEST_CASE("stft: all-zeros input gives all-zeros spectrogram") {
    StftConfig cfg = StftConfig::from_hop(256);
    std::vector<double> x(8192, 0.0);
    auto spec = stft(x, cfg);
    for (const auto& f : spec.frames)
        for (const auto& z : f) CHECK(std::abs(z) == 0.0);
}

TEST_CASE("stft: frame count is ceil(T/hop)") {
    StftConfig cfg = StftConfig::from_hop(256);
    std::vector<double> x(8000, 0.0);
    CHECK(stft(x, cfg).num_frames() == (8000 + 255) / 256);
}

TEST_CASE("stft: 440 Hz sine peaks at bin 10 for win=1024 sr=44100") {
    StftConfig cfg = StftConfig::from_hop(256);
    const int sr = 44100;
    std::vector<double> x(static_cast<size_t>(sr));
    for (int i = 0; i < sr; ++i)
        x[static_cast<size_t>(i)] = std::sin(2.0 * std::numbers::pi * 440.0 * i / sr);
    auto spec = stft(x, cfg);
    // interior frame, away from padding
    const auto& fr = spec.frames[static_cast<size_t>(spec.num_frames() / 2)];
    int argmax = 0;
    for (int b = 1; b < static_cast<int>(fr.size()); ++b)
        if (std::abs(fr[static_cast<size_t>(b)]) > std::abs(fr[static_cast<size_t>(argmax)])) argmax = b;
    CHECK(argmax == 10);  // round(440*1024/44100)
}

TEST_CASE("stft: input shorter than a window is an error") {
    StftConfig cfg = StftConfig::from_hop(256);
    std::vector<double> x(512, 0.0);
    CHECK_THROWS(stft(x, cfg));
}

TEST_CASE("istft: zero spectrogram gives zero waveform") {
    StftConfig cfg = StftConfig::from_hop(256);
    Spectrogram spec;
    spec.config = cfg;
    spec.orig_len = 4096;
    spec.frames.assign(16, std::vector<cplx>(static_cast<size_t>(cfg.bins()), cplx(0.0)));
    for (double s : istft(spec)) CHECK(s == 0.0);
}

TEST_CASE("istft: single nonzero DC frame reconstructs a windowed bump") {
    StftConfig cfg = StftConfig::from_hop(256);
    const int T = 8192;
    const int F = T / cfg.hop_len;
    Spectrogram spec;
    spec.config = cfg;
    spec.orig_len = T;
    spec.frames.assign(static_cast<size_t>(F), std::vector<cplx>(static_cast<size_t>(cfg.bins()), cplx(0.0)));
    const int f0 = 16;
    spec.frames[f0][0] = cplx(static_cast<double>(cfg.win_len), 0.0);  // DC: constant segment of 1s pre-window
    auto out = istft(spec);

    // closed-form: frame f0 covers [f0*hop - win/2, f0*hop + win/2); the
    // overlap-add of (win * 1) normalized by the full window-power sum.
    const auto win = make_window(cfg);
    std::vector<double> num(static_cast<size_t>(T), 0.0), den(static_cast<size_t>(T), 0.0);
    for (int f = 0; f < F; ++f) {
        const int start = f * cfg.hop_len - cfg.win_len / 2;
        for (int n = 0; n < cfg.win_len; ++n) {
            const int idx = start + n;
            if (idx < 0 || idx >= T) continue;
            den[static_cast<size_t>(idx)] += win[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
            if (f == f0) num[static_cast<size_t>(idx)] += win[static_cast<size_t>(n)];  // segment is 1
        }
    }
    for (int i = 0; i < T; ++i) {
        const double expected = den[static_cast<size_t>(i)] > 1e-12 ? num[static_cast<size_t>(i)] / den[static_cast<size_t>(i)] : 0.0;
        CHECK(out[static_cast<size_t>(i)] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("cola round trip: istft(stft(w)) within 1e-4 over random waveforms") {
    std::mt19937_64 rng(7);
    StftConfig cfg = StftConfig::from_hop(256);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_signal(4 * cfg.win_len + 321, rng);
        auto back = istft(stft(x, cfg));
        REQUIRE(back.size() == x.size());
        double maxerr = 0.0;
        for (size_t i = 0; i < x.size(); ++i) maxerr = std::max(maxerr, std::abs(back[i] - x[i]));
        CHECK(maxerr < 1e-4);
    }
}

TEST_CASE("non-COLA window/hop pair errors at construction") {
    StftConfig cfg;
    cfg.hop_len = 1024;
    cfg.win_len = 1024;  // Hann at hop == win leaves zero-energy gaps? no: actually covered
    // hop > win is the clear violation
    StftConfig bad;
    bad.hop_len = 2048;
    bad.win_len = 1024;
    CHECK_THROWS(check_cola(bad));
}

TEST_CASE("log_mag: trivial values and monotonicity") {
    StftConfig cfg = StftConfig::from_hop(256);
    Spectrogram spec;
    spec.config = cfg;
    spec.frames.assign(2, std::vector<cplx>(static_cast<size_t>(cfg.bins()), cplx(0.0)));
    auto lm = log_mag(spec);
    CHECK(lm.at(0, 0) == doctest::Approx(std::log(1e-5)));

    spec.frames[0][3] = cplx(1.0, 0.0);
    lm = log_mag(spec);
    CHECK(lm.at(0, 3) == doctest::Approx(std::log(1.0 + 1e-5)));

    // strictly increasing in |frame|
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0.0, 10.0);
    for (int i = 0; i < 100; ++i) {
        double a = ud(rng), b = ud(rng);
        if (a == b) continue;
        double la = std::log(a * a + 1e-5), lb = std::log(b * b + 1e-5);
        CHECK(((a < b) == (la < lb)));
    }
}

TEST_CASE("mel: zero power maps to log(eps); single bin spreads only to overlapping filters") {
    const int B = 513, M = 128;
    auto fb = MelFilterbank::make(B, M, 44100);
    Tensor power({4, B});
    auto mel = mel_project(power, fb);
    for (int m = 0; m < M; ++m) CHECK(mel.at(0, m) == doctest::Approx(std::log(1e-5)));

    power.at(1, 100) = 2.0;
    mel = mel_project(power, fb);
    for (int m = 0; m < M; ++m) {
        const bool overlaps = fb.weights.at(100, m) > 0.0;
        if (overlaps)
            CHECK(mel.at(1, m) > std::log(1e-5));
        else
            CHECK(mel.at(1, m) == doctest::Approx(std::log(1e-5)));
    }
}

TEST_CASE("mssd: identity, symmetry, default hop set") {
    auto cfg = MultiScaleConfig::defaults();
    CHECK(cfg.hop_lens == std::vector<int>{32, 64, 128, 256, 512, 2048, 4096});

    MultiScaleConfig small{{32, 64, 128}, 4};
    std::mt19937_64 rng(11);
    auto a = random_wave(2048, rng);
    auto b = random_wave(2048, rng);
    CHECK(mssd(a, a, small) == 0.0);
    CHECK(mssd(a, b, small) == doctest::Approx(mssd(b, a, small)));
    CHECK(mssd(a, b, small) > 0.0);

    auto c = random_wave(1024, rng);
    CHECK_THROWS(mssd(a, c, small));
}

TEST_CASE("mssd: triangle inequality per pseudometric claim") {
    MultiScaleConfig small{{32, 64}, 4};
    std::mt19937_64 rng(13);
    for (int i = 0; i < 5; ++i) {
        auto a = random_wave(1024, rng);
        auto b = random_wave(1024, rng);
        auto c = random_wave(1024, rng);
        CHECK(mssd(a, c, small) <= mssd(a, b, small) + mssd(b, c, small) + 1e-9);
    }
}

TEST_CASE("rec_l1_loss values") {
    Tensor a({3, 4}), b({3, 4});
    CHECK(rec_l1_loss(a, b) == 0.0);
    for (auto& x : a.v) x = 1.0;
    CHECK(rec_l1_loss(a, b) == doctest::Approx(1.0));
    Tensor c({2, 2});
    CHECK_THROWS(rec_l1_loss(a, c));
}

TEST_CASE("critic hinge loss values") {
    CHECK(critic_hinge_loss({2.0}, {-2.0}) == 0.0);
    CHECK(critic_hinge_loss({0.0}, {0.0}) == doctest::Approx(2.0));
    CHECK(critic_hinge_loss({1.0}, {-1.0}) == 0.0);
    CHECK_THROWS(critic_hinge_loss({}, {1.0}));
}

TEST_CASE("generator adv loss values") {
    CHECK(generator_adv_loss({3.0}) == doctest::Approx(-3.0));
    CHECK(generator_adv_loss({0.0}) == 0.0);
    CHECK(generator_adv_loss({1.0, -1.0}) == 0.0);
    CHECK_THROWS(generator_adv_loss({}));
}

TEST_CASE("combined ae loss uses the published weights") {
    AeLossWeights w;
    CHECK(combined_ae_loss(0, 0, 0, w) == 0.0);
    CHECK(combined_ae_loss(1, 2, 3, w) == doctest::Approx(51.006));
    CHECK(combined_ae_loss(5, 2, 3, AeLossWeights{0, 0}) == doctest::Approx(5.0));
}

TEST_CASE("wav: float32 and pcm16 round trips") {
    std::mt19937_64 rng(17);
    auto w = random_wave(1000, rng);
    w.sample_rate = 16000;

    write_wav("/tmp/stemgen_t32.wav", w, true);
    auto r32 = read_wav("/tmp/stemgen_t32.wav");
    CHECK(r32.sample_rate == 16000);
    REQUIRE(r32.frames() == w.frames());
    for (size_t i = 0; i < w.frames(); ++i) {
        CHECK(r32.left[i] == doctest::Approx(w.left[i]).epsilon(1e-6));
        CHECK(r32.right[i] == doctest::Approx(w.right[i]).epsilon(1e-6));
    }

    write_wav("/tmp/stemgen_t16.wav", w, false);
    auto r16 = read_wav("/tmp/stemgen_t16.wav");
    REQUIRE(r16.frames() == w.frames());
    for (size_t i = 0; i < w.frames(); ++i)
        CHECK(std::abs(r16.left[i] - w.left[i]) < 1.0 / 32000.0);
}
