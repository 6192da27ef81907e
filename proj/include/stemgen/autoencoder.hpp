#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/autodiff.hpp"
#include "stemgen/latent.hpp"
#include "stemgen/losses.hpp"
#include "stemgen/mel.hpp"
#include "stemgen/nn.hpp"
#include "stemgen/optim.hpp"
#include "stemgen/stft.hpp"

namespace stemgen {

struct AutoencoderConfig {
    int r_time = 256;
    int latent_dim = 8;
    int base_channels = 32;
    int n_stages = 3;
    StftConfig stft = StftConfig::from_hop(64);
    AeLossWeights loss_weights;
    MultiScaleConfig mssd_scales = MultiScaleConfig{{32, 64, 128, 256}, 4};
    bool use_critics = false;
    int mel_bins = 128;
    int sample_rate = 16000;

    // number of stride-2 stages; remaining stages keep resolution
    int down_stages() const {
        if (r_time % stft.hop_len != 0)
            throw std::invalid_argument("ae config: r_time must be a multiple of hop_len");
        const int q = r_time / stft.hop_len;
        if (!is_pow2(q)) throw std::invalid_argument("ae config: r_time/hop_len must be a power of two");
        int m = 0;
        for (int v = q; v > 1; v >>= 1) ++m;
        if (m > n_stages) throw std::invalid_argument("ae config: not enough stages for r_time");
        return m;
    }
    int frame_factor() const { return r_time / stft.hop_len; }

    // Paper-scale configuration, kept available but not the desk default.
    static AutoencoderConfig paper_scale() {
        AutoencoderConfig c;
        c.r_time = 4096;
        c.latent_dim = 64;
        c.base_channels = 128;
        c.n_stages = 4;
        c.stft = StftConfig::from_hop(256);
        c.mssd_scales = MultiScaleConfig::defaults();
        c.use_critics = true;
        c.sample_rate = 44100;
        return c;
    }
};

// Spectrogram-domain autoencoder. The encoder maps stacked stereo
// log-magnitude frames to a latent sequence; the decoder emits a
// log-magnitude head and a unit-modulus phase head per channel, combined
// into complex frames and inverted with the iSTFT.
struct Autoencoder {
    AutoencoderConfig cfg;
    ConvBlockParams enc_in;
    std::vector<ConvBlockParams> enc_stages;
    int enc_out_w = -1, enc_out_b = -1;
    ConvBlockParams dec_in;
    std::vector<ConvBlockParams> dec_stages;
    int mag_w = -1, mag_b = -1;
    int phase_w = -1, phase_b = -1;

    int spec_channels() const { return 2 * cfg.stft.bins(); }

    static Autoencoder create(const AutoencoderConfig& cfg, ParamStore& ps, std::mt19937_64& rng) {
        Autoencoder ae;
        ae.cfg = cfg;
        const int m = cfg.down_stages();
        const int cin = ae.spec_channels();
        const int k = 3;

        ae.enc_in = ConvBlockParams::create("ae.enc_in", cin, cfg.base_channels, k, 1, ps, rng);
        int ch = cfg.base_channels;
        for (int s = 0; s < cfg.n_stages; ++s) {
            const bool down = s < m;
            const int cout = down ? ch * 2 : ch;
            ae.enc_stages.push_back(ConvBlockParams::create("ae.enc" + std::to_string(s), ch, cout,
                                                            k, down ? 2 : 1, ps, rng));
            ch = cout;
        }
        ae.enc_out_w = ps.add("ae.enc_out_w", {cfg.latent_dim, ch, k}, std::sqrt(1.0 / (ch * k)), rng);
        ae.enc_out_b = ps.add("ae.enc_out_b", {cfg.latent_dim}, 0.0, rng);

        ae.dec_in = ConvBlockParams::create("ae.dec_in", cfg.latent_dim, ch, k, 1, ps, rng);
        for (int s = 0; s < cfg.n_stages; ++s) {
            const bool up = s >= cfg.n_stages - m;
            const int cout = up ? ch / 2 : ch;
            ae.dec_stages.push_back(ConvBlockParams::create("ae.dec" + std::to_string(s), ch, cout,
                                                            k, up ? -2 : 1, ps, rng));
            ch = cout;
        }
        ae.mag_w = ps.add("ae.mag_w", {cin, ch, k}, std::sqrt(1.0 / (ch * k)), rng);
        ae.mag_b = ps.add("ae.mag_b", {cin}, 0.0, rng);
        ae.phase_w = ps.add("ae.phase_w", {2 * cin, ch, k}, std::sqrt(1.0 / (ch * k)), rng);
        ae.phase_b = ps.add("ae.phase_b", {2 * cin}, 0.0, rng);
        return ae;
    }

    // Stacked stereo log-magnitude input (2B, F), F trimmed to a multiple
    // of the frame factor so the stride stack divides exactly.
    Tensor spec_input(const Waveform& w, int* trimmed_frames = nullptr) const {
        const int ff = cfg.frame_factor();
        Tensor lm_l = log_mag(stft(w.left, cfg.stft));
        Tensor lm_r = log_mag(stft(w.right, cfg.stft));
        const int F = (lm_l.dim(0) / ff) * ff;
        if (F < ff) throw std::invalid_argument("autoencoder: input too short for one latent step");
        const int B = lm_l.dim(1);
        Tensor in({2 * B, F});
        for (int f = 0; f < F; ++f)
            for (int b = 0; b < B; ++b) {
                in.at(b, f) = lm_l.at(f, b);
                in.at(B + b, f) = lm_r.at(f, b);
            }
        if (trimmed_frames) *trimmed_frames = F;
        return in;
    }

    // (2B, F) node -> (D, N) latent node
    int build_encoder(Tape& tp, int spec_in) const {
        int h = conv_block(tp, spec_in, enc_in);
        for (const auto& st : enc_stages) h = conv_block(tp, h, st);
        return tp.conv1d(tp.silu(h), tp.param(enc_out_w), tp.param(enc_out_b), 1);
    }

    struct DecodedHeads {
        int logmag;  // (2B, F)
        int phase;   // (4B, F) raw (cos, sin) pairs before normalization
    };

    // (D, N) latent node -> heads at frame resolution
    DecodedHeads build_decoder(Tape& tp, int latent) const {
        int h = conv_block(tp, latent, dec_in);
        for (const auto& st : dec_stages) h = conv_block(tp, h, st);
        h = tp.silu(h);
        DecodedHeads out;
        out.logmag = tp.conv1d(h, tp.param(mag_w), tp.param(mag_b), 1);
        out.phase = tp.conv1d(h, tp.param(phase_w), tp.param(phase_b), 1);
        return out;
    }

    // Complex frames for one stereo channel as a (2, F, B) node:
    // magnitude exp(logmag/2) with unit-normalized (cos, sin) phase.
    int build_channel_frames(Tape& tp, const DecodedHeads& heads, int channel) const {
        const int B = cfg.stft.bins();
        const int F = tp.val(heads.logmag).dim(1);
        int lm = tp.slice_ch(heads.logmag, channel * B, B);           // (B, F)
        int pc = tp.slice_ch(heads.phase, 2 * channel * B, B);        // cos raw
        int psn = tp.slice_ch(heads.phase, (2 * channel + 1) * B, B); // sin raw
        int mag = tp.exp_(tp.scale(lm, 0.5));
        int inv = tp.rsqrt(tp.add_scalar(tp.add(tp.square(pc), tp.square(psn)), 1e-8));
        int re = tp.transpose(tp.mul(mag, tp.mul(pc, inv)));   // (F, B)
        int im = tp.transpose(tp.mul(mag, tp.mul(psn, inv)));  // (F, B)
        int stacked = tp.concat_ch({tp.reshape(re, {1, F * B}), tp.reshape(im, {1, F * B})});
        return tp.reshape(stacked, {2, F, B});
    }

    LatentSequence encode(ParamStore& ps, const Waveform& w) const {
        if (w.frames() == 0) throw std::invalid_argument("encode: empty input");
        w.validate();
        Tape tp(&ps, false);
        int latent = build_encoder(tp, tp.leaf(spec_input(w)));
        LatentSequence c;
        c.vectors = tp.val(tp.transpose(latent));
        c.r_time = cfg.r_time;
        c.source_kind = SourceKind::Mix;
        return c;
    }

    Waveform decode(ParamStore& ps, const LatentSequence& c) const {
        if (c.dim() != cfg.latent_dim) throw std::invalid_argument("decode: latent dim mismatch");
        Tape tp(&ps, false);
        auto heads = build_decoder(tp, tp.transpose(tp.leaf(c.vectors)));
        const int T = c.steps() * cfg.r_time;
        Waveform w;
        w.sample_rate = cfg.sample_rate;
        for (int ch = 0; ch < 2; ++ch) {
            int frames = build_channel_frames(tp, heads, ch);
            int wav = tp.istft_ri(frames, cfg.stft, T);
            w.channel(ch) = tp.val(wav).v;
        }
        for (int ch = 0; ch < 2; ++ch)
            for (double s : w.channel(ch))
                if (!std::isfinite(s)) throw std::runtime_error("decode: non-finite output");
        return w;
    }
};

// Convolutional critic producing one scalar score per spectrogram-like
// input (C, F). Parameters live in their own store.
struct Critic {
    std::vector<ConvBlockParams> stages;
    int out_w = -1, out_b = -1;

    static Critic create(const std::string& prefix, int cin, int base, ParamStore& ps,
                         std::mt19937_64& rng) {
        Critic c;
        int ch = cin;
        int cout = base;
        for (int s = 0; s < 3; ++s) {
            c.stages.push_back(ConvBlockParams::create(prefix + ".s" + std::to_string(s), ch, cout,
                                                       3, 2, ps, rng));
            ch = cout;
            cout *= 2;
        }
        c.out_w = ps.add(prefix + ".out_w", {1, ch, 3}, std::sqrt(1.0 / (ch * 3)), rng);
        c.out_b = ps.add(prefix + ".out_b", {1}, 0.0, rng);
        return c;
    }

    // param_of maps a param id to a tape node; pass tp.param for critic
    // training, or a leaf-injector for the generator pass.
    int build(Tape& tp, int x, const std::function<int(int)>& param_of) const {
        int h = x;
        for (const auto& st : stages) {
            // inline conv block with injected params
            int xin = h;
            int hh = tp.conv1d(tp.silu(xin), param_of(st.w1), param_of(st.b1), 2);
            hh = tp.conv1d(tp.silu(hh), param_of(st.w2), param_of(st.b2), 1);
            hh = tp.scale_by(hh, param_of(st.gain));
            int skip = tp.conv1d(xin, param_of(st.skip_w), param_of(st.skip_b), 2);
            h = tp.add(skip, hh);
        }
        return tp.mean_all(tp.conv1d(tp.silu(h), param_of(out_w), param_of(out_b), 1));
    }
};

struct AeTrainLosses {
    double rec = 0.0;
    double mssd = 0.0;
    double adv = 0.0;
    double combined = 0.0;
    double critic = 0.0;
};

struct AeTrainer {
    Autoencoder ae;
    ParamStore* gen_params;
    ParamStore* critic_params = nullptr;  // used when cfg.use_critics
    Critic critic_lin;                    // linear-frequency log-mag critic
    Critic critic_mel;                    // mel critic
    MelFilterbank mel_fb;
    Optimizer gen_opt;
    Optimizer critic_opt;

    AeTrainer(const AutoencoderConfig& cfg, ParamStore& gen_ps, ParamStore& crit_ps,
              std::mt19937_64& rng, double lr = 1e-4)
        : ae(Autoencoder::create(cfg, gen_ps, rng)),
          gen_params(&gen_ps),
          critic_params(&crit_ps),
          mel_fb(MelFilterbank::make(cfg.stft.bins(), cfg.mel_bins, cfg.sample_rate)),
          gen_opt(OptimizerConfig::ae_defaults(lr)),
          critic_opt(OptimizerConfig::ae_defaults(lr)) {
        if (cfg.use_critics) {
            critic_lin = Critic::create("critic_lin", ae.spec_channels(), 16, crit_ps, rng);
            critic_mel = Critic::create("critic_mel", 2 * cfg.mel_bins, 16, crit_ps, rng);
        }
    }

    // Stacked stereo mel view (2M, F) of the original waveform.
    Tensor real_mel_input(const Waveform& w, int frames) const {
        const int M = mel_fb.weights.dim(1);
        Tensor out({2 * M, frames});
        for (int ch = 0; ch < 2; ++ch) {
            Tensor mel = mel_project(power_spec(stft(w.channel(ch), ae.cfg.stft)), mel_fb,
                                     ae.cfg.stft.eps);
            for (int f = 0; f < frames; ++f)
                for (int m = 0; m < M; ++m) out.at(ch * M + m, f) = mel.at(f, m);
        }
        return out;
    }

    // One generator update (and one critic update when enabled) on a batch
    // of stereo crops. Returns means of the loss components.
    AeTrainLosses train_step(const std::vector<Waveform>& batch) {
        if (batch.empty()) throw std::invalid_argument("ae_train_step: empty batch");
        AeTrainLosses out;
        gen_params->zero_grad();

        std::vector<Tensor> fake_logmag_batch;  // detached, for the critic update
        std::vector<Tensor> real_logmag_batch;
        std::vector<Tensor> fake_mel_batch;
        std::vector<Tensor> real_mel_batch;

        Tape tp(gen_params);
        int total = -1;
        for (const auto& w : batch) {
            int F = 0;
            Tensor spec_in = ae.spec_input(w, &F);
            const int T = F * ae.cfg.stft.hop_len;

            int latent = ae.build_encoder(tp, tp.leaf(spec_in));
            auto heads = ae.build_decoder(tp, latent);

            // L1 reconstruction loss on the log-magnitude head
            int rec = tp.mean_all(tp.abs_(tp.sub(heads.logmag, tp.leaf(spec_in))));

            // multi-scale spectral distance between recon and original
            int mssd_node = -1;
            std::vector<int> recon_frames(2);
            for (int ch = 0; ch < 2; ++ch) {
                recon_frames[static_cast<size_t>(ch)] = ae.build_channel_frames(tp, heads, ch);
                int wav = tp.istft_ri(recon_frames[static_cast<size_t>(ch)], ae.cfg.stft, T);
                std::vector<double> orig(w.channel(ch).begin(), w.channel(ch).begin() + T);
                for (int hop : ae.cfg.mssd_scales.hop_lens) {
                    StftConfig sc;
                    sc.hop_len = hop;
                    sc.win_len = ae.cfg.mssd_scales.win_factor * hop;
                    if (T < sc.win_len) continue;
                    Tensor target_pow = power_spec(stft(orig, sc));
                    int pred_pow = tp.magsq(tp.stft_ri(wav, sc));
                    int l1 = tp.mean_all(tp.abs_(tp.sub(pred_pow, tp.leaf(target_pow))));
                    mssd_node = mssd_node < 0 ? l1 : tp.add(mssd_node, l1);
                }
            }
            if (mssd_node < 0) mssd_node = tp.leaf(Tensor::scalar(0.0));
            mssd_node = tp.scale(mssd_node, 0.5);  // channel average

            int adv = -1;
            if (ae.cfg.use_critics) {
                // log-mag and mel views of the reconstruction feed the critics;
                // critic params enter as leaves so only the generator trains.
                auto leaf_param = [&](int pid) { return tp.leaf(critic_params->value(pid)); };
                std::vector<int> lm_nodes(2), mel_nodes(2);
                for (int ch = 0; ch < 2; ++ch) {
                    int pow_node = tp.magsq(recon_frames[static_cast<size_t>(ch)]);
                    lm_nodes[static_cast<size_t>(ch)] =
                        tp.transpose(tp.log_(tp.add_scalar(pow_node, ae.cfg.stft.eps)));
                    int melp = tp.matmul(pow_node, tp.leaf(mel_fb.weights));  // (F, M)
                    mel_nodes[static_cast<size_t>(ch)] =
                        tp.transpose(tp.log_(tp.add_scalar(melp, ae.cfg.stft.eps)));
                }
                int fake_lm = tp.concat_ch(lm_nodes);    // (2B, F)
                int fake_mel = tp.concat_ch(mel_nodes);  // (2M, F)
                int score = tp.add(critic_lin.build(tp, fake_lm, leaf_param),
                                   critic_mel.build(tp, fake_mel, leaf_param));
                adv = tp.scale(score, -0.5);

                fake_logmag_batch.push_back(tp.val(fake_lm));
                real_logmag_batch.push_back(spec_in);
                fake_mel_batch.push_back(tp.val(fake_mel));
                real_mel_batch.push_back(real_mel_input(w, F));
            }

            int item = tp.add(tp.scale(rec, ae.cfg.loss_weights.lambda_rec),
                              tp.scale(mssd_node, ae.cfg.loss_weights.lambda_mssd));
            if (adv >= 0) item = tp.add(item, adv);

            out.rec += tp.val(rec).v[0];
            out.mssd += tp.val(mssd_node).v[0];
            if (adv >= 0) out.adv += tp.val(adv).v[0];
            total = total < 0 ? item : tp.add(total, item);
        }
        total = tp.scale(total, 1.0 / static_cast<double>(batch.size()));
        const double loss_val = tp.val(total).v[0];
        if (!std::isfinite(loss_val)) throw std::runtime_error("ae_train_step: non-finite loss");
        tp.backward(total);
        gen_opt.step(*gen_params);

        const double bsz = static_cast<double>(batch.size());
        out.rec /= bsz;
        out.mssd /= bsz;
        out.adv /= bsz;
        out.combined = loss_val;

        if (ae.cfg.use_critics) {
            critic_params->zero_grad();
            Tape ct(critic_params);
            auto param_of = [&](int pid) { return ct.param(pid); };
            int closs = -1;
            auto hinge_pair = [&](const Critic& c, const Tensor& real, const Tensor& fake) {
                int sr = c.build(ct, ct.leaf(real), param_of);
                int sf = c.build(ct, ct.leaf(fake), param_of);
                // hinge: relu(1 - real) + relu(1 + fake)
                int lr_ = ct.relu(ct.scale(ct.add_scalar(sr, -1.0), -1.0));
                int lf_ = ct.relu(ct.add_scalar(sf, 1.0));
                return ct.add(lr_, lf_);
            };
            for (size_t i = 0; i < real_logmag_batch.size(); ++i) {
                int item = ct.add(hinge_pair(critic_lin, real_logmag_batch[i], fake_logmag_batch[i]),
                                  hinge_pair(critic_mel, real_mel_batch[i], fake_mel_batch[i]));
                closs = closs < 0 ? item : ct.add(closs, item);
            }
            closs = ct.scale(closs, 1.0 / bsz);
            out.critic = ct.val(closs).v[0];
            ct.backward(closs);
            critic_opt.step(*critic_params);
        }
        return out;
    }
};

}  // namespace stemgen
