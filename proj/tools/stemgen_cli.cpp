// Command-line front end: synthetic data generation, autoencoder and
// denoiser training, latent encode/decode, sampling, and evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 data/IO error, 3 numeric failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "stemgen/config.hpp"
#include "stemgen/diffusion_train.hpp"
#include "stemgen/metrics.hpp"
#include "stemgen/model_io.hpp"

namespace fs = std::filesystem;
using namespace stemgen;
using nlohmann::json;

namespace {

struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_finite(const std::vector<double>& v, const std::string& what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericFailure("non-finite value in " + what);
}

std::vector<Waveform> load_wav_dir(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .wav files in " + dir);
    std::vector<Waveform> out;
    for (const auto& p : files) out.push_back(read_wav(p.string()));
    return out;
}

GuidanceConfig guidance_from(double weight, double phi, const std::string& convention) {
    GuidanceConfig g;
    g.lambda_cfg = weight;
    g.phi = phi;
    if (convention == "paper")
        g.convention = CfgConvention::PaperPrinted;
    else if (convention == "standard")
        g.convention = CfgConvention::Standard;
    else
        throw CLI::ValidationError("--cfg-convention must be paper or standard");
    return g;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stemgen: latent-diffusion stem accompaniment toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "run configuration file (key=value)");

    // ---- synth-data ----
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic paired latent dataset");
    std::string synth_out, synth_rule = "linear";
    SyntheticSpec sspec;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", sspec.seed, "rng seed");
    synth->add_option("--n", sspec.n_items, "number of pairs");
    synth->add_option("--steps", sspec.steps, "latent timesteps per item");
    synth->add_option("--dim-x", sspec.dim_x, "conditioning dimension");
    synth->add_option("--dim-y", sspec.dim_y, "target dimension");
    synth->add_option("--noise", sspec.noise_level, "target noise level");
    synth->add_option("--rule", synth_rule, "conditioning rule: linear | lowpass");
    synth->add_flag("--identity", sspec.identity_map, "use the identity map (dims must match)");

    // ---- ae-train ----
    auto* aetrain = app.add_subcommand("ae-train", "train the spectrogram autoencoder");
    std::string ae_data, ae_out, ae_csv;
    int ae_steps = -1, ae_batch = -1;
    uint64_t ae_seed = 0;
    bool ae_critics = false;
    aetrain->add_option("--data", ae_data, "directory of training .wav clips")->required();
    aetrain->add_option("--out", ae_out, "output checkpoint path")->required();
    aetrain->add_option("--steps", ae_steps, "training steps (overrides config)");
    aetrain->add_option("--batch", ae_batch, "batch size (overrides config)");
    aetrain->add_option("--seed", ae_seed, "rng seed");
    aetrain->add_option("--csv", ae_csv, "write step,rec,mssd,adv,total metrics here");
    aetrain->add_flag("--critics", ae_critics, "enable adversarial critics");

    // ---- encode / decode ----
    auto* encode = app.add_subcommand("encode", "encode a WAV to a latent sequence");
    std::string enc_ckpt, enc_in, enc_out;
    encode->add_option("--ckpt", enc_ckpt, "autoencoder checkpoint")->required();
    encode->add_option("--in", enc_in, "input .wav")->required();
    encode->add_option("--out", enc_out, "output .lats")->required();

    auto* decode = app.add_subcommand("decode", "decode a latent sequence to a WAV");
    std::string dec_ckpt, dec_in, dec_out;
    decode->add_option("--ckpt", dec_ckpt, "autoencoder checkpoint")->required();
    decode->add_option("--in", dec_in, "input .lats")->required();
    decode->add_option("--out", dec_out, "output .wav")->required();

    // ---- diff-train ----
    auto* dtrain = app.add_subcommand("diff-train", "train the conditional denoiser");
    std::string dt_data, dt_out, dt_csv;
    int dt_steps = -1, dt_batch = -1;
    double dt_lr = -1.0;
    uint64_t dt_seed = 0;
    std::vector<int> dt_channels;
    dtrain->add_option("--data", dt_data, "synthetic dataset directory")->required();
    dtrain->add_option("--out", dt_out, "output checkpoint path")->required();
    dtrain->add_option("--steps", dt_steps, "training steps (overrides config)");
    dtrain->add_option("--batch", dt_batch, "batch size (overrides config)");
    dtrain->add_option("--lr", dt_lr, "learning rate (overrides config)");
    dtrain->add_option("--seed", dt_seed, "rng seed");
    dtrain->add_option("--channels", dt_channels, "channel schedule (overrides config)");
    dtrain->add_option("--csv", dt_csv, "write step,loss metrics here");

    // ---- sample ----
    auto* sample = app.add_subcommand("sample", "generate an accompaniment latent sequence");
    std::string sm_ckpt, sm_cond, sm_out, sm_style, sm_conv = "paper", sm_ae, sm_wav;
    int sm_steps = 64;
    double sm_weight = 0.0, sm_phi = 0.0;
    uint64_t sm_seed = 0;
    sample->add_option("--ckpt", sm_ckpt, "denoiser checkpoint")->required();
    sample->add_option("--cond", sm_cond, "conditioning mix .lats")->required();
    sample->add_option("--out", sm_out, "output .lats")->required();
    sample->add_option("--steps,-K", sm_steps, "sampler steps K");
    sample->add_option("--seed", sm_seed, "sampling seed");
    sample->add_option("--cfg-weight", sm_weight, "guidance weight lambda");
    sample->add_option("--phi", sm_phi, "guidance rescale phi");
    sample->add_option("--cfg-convention", sm_conv, "paper | standard");
    sample->add_option("--style", sm_style, "style grounding .lats");
    sample->add_option("--ae-ckpt", sm_ae, "autoencoder checkpoint for waveform decode");
    sample->add_option("--wav-out", sm_wav, "decoded waveform output path");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "evaluate a trained denoiser");
    std::string ev_ckpt, ev_data, ev_metric = "coherence";
    int ev_steps = 64, ev_n = 25;
    double ev_weight = 0.0, ev_phi = 0.0;
    uint64_t ev_seed = 0;
    eval->add_option("--ckpt", ev_ckpt, "denoiser checkpoint")->required();
    eval->add_option("--data", ev_data, "synthetic dataset directory")->required();
    eval->add_option("--metric", ev_metric, "coherence | frechet");
    eval->add_option("--steps,-K", ev_steps, "sampler steps K");
    eval->add_option("--n", ev_n, "items to evaluate");
    eval->add_option("--seed", ev_seed, "sampling seed");
    eval->add_option("--cfg-weight", ev_weight, "guidance weight lambda");
    eval->add_option("--phi", ev_phi, "guidance rescale phi");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        RunConfig run;
        if (!config_path.empty()) run = load_config(config_path);

        if (*synth) {
            sspec.rule = synth_rule == "lowpass" ? SyntheticRuleKind::LowpassOctave
                                                 : SyntheticRuleKind::FixedLinearMap;
            SyntheticDataset ds = make_synthetic(sspec);
            save_dataset(synth_out, ds);
            std::cout << "wrote " << ds.items.size() << " pairs to " << synth_out << "\n";
        } else if (*aetrain) {
            AutoencoderConfig cfg;
            cfg.latent_dim = run.ae_latent_dim;
            cfg.base_channels = run.ae_base_channels;
            cfg.stft = StftConfig::from_hop(run.ae_hop);
            cfg.r_time = run.ae_r_time;
            cfg.use_critics = ae_critics;
            const int steps = ae_steps > 0 ? ae_steps : run.ae_train_steps;
            const int batch = ae_batch > 0 ? ae_batch : run.ae_batch;

            std::vector<Waveform> clips = load_wav_dir(ae_data);
            if (!clips.empty()) cfg.sample_rate = clips[0].sample_rate;
            ParamStore gen_ps, crit_ps;
            std::mt19937_64 rng(ae_seed);
            AeTrainer trainer(cfg, gen_ps, crit_ps, rng);

            std::ofstream csv;
            if (!ae_csv.empty()) {
                csv.open(ae_csv);
                csv << "step,rec,mssd,adv,total\n";
            }
            std::uniform_int_distribution<size_t> pick(0, clips.size() - 1);
            for (int s = 0; s < steps; ++s) {
                std::vector<Waveform> b;
                for (int i = 0; i < batch; ++i) b.push_back(clips[pick(rng)]);
                AeTrainLosses l = trainer.train_step(b);
                if (!std::isfinite(l.combined)) throw NumericFailure("ae training loss diverged");
                if (csv && (s % 25 == 0 || s == steps - 1))
                    csv << s << "," << l.rec << "," << l.mssd << "," << l.adv << "," << l.combined
                        << "\n";
            }
            write_checkpoint(ae_out, gen_ps, ae_cfg_to_json(cfg));
            std::cout << "wrote " << ae_out << "\n";
        } else if (*encode) {
            ParamStore ps;
            Autoencoder ae = load_autoencoder(enc_ckpt, ps);
            LatentSequence c = ae.encode(ps, read_wav(enc_in));
            require_finite(c.vectors.v, "encoded latents");
            write_latents(enc_out, c);
            std::cout << "wrote " << c.steps() << " latent steps to " << enc_out << "\n";
        } else if (*decode) {
            ParamStore ps;
            Autoencoder ae = load_autoencoder(dec_ckpt, ps);
            Waveform w = ae.decode(ps, read_latents(dec_in));
            require_finite(w.left, "decoded waveform");
            require_finite(w.right, "decoded waveform");
            write_wav(dec_out, w, true);
            std::cout << "wrote " << w.frames() << " frames to " << dec_out << "\n";
        } else if (*dtrain) {
            SyntheticDataset ds = load_dataset(dt_data);
            UNetConfig cfg;
            cfg.in_dim = ds.items[0].stem.dim();
            cfg.cond_dim = ds.items[0].mix.dim();
            cfg.channel_schedule =
                !dt_channels.empty() ? dt_channels
                                     : std::vector<int>{run.unet_ch0, run.unet_ch1, run.unet_ch2};
            cfg.attn_levels = {static_cast<int>(cfg.channel_schedule.size()) - 1};
            cfg.heads = run.unet_heads;
            cfg.t_embed_dim = run.unet_t_embed_dim;
            cfg.cond_dropout_p = run.cond_dropout;

            OptimizerConfig oc = OptimizerConfig::diffusion_defaults(dt_lr > 0 ? dt_lr : run.diff_lr);
            DiffusionTrainer trainer(cfg, dt_seed, oc);
            std::ofstream csv;
            std::ostream* csvp = nullptr;
            if (!dt_csv.empty()) {
                csv.open(dt_csv);
                csvp = &csv;
            }
            trainer.train(ds, dt_steps > 0 ? dt_steps : run.diff_train_steps,
                          dt_batch > 0 ? dt_batch : run.diff_batch, csvp);
            write_checkpoint(dt_out, trainer.params, unet_cfg_to_json(cfg));
            std::cout << "wrote " << dt_out << "\n";
        } else if (*sample) {
            ParamStore ps;
            UNet unet = load_unet(sm_ckpt, ps);
            LatentSequence cond = read_latents(sm_cond);
            SamplerConfig scfg;
            scfg.steps = sm_steps;
            scfg.seed = sm_seed;
            scfg.guidance = guidance_from(sm_weight, sm_phi, sm_conv);
            if (!sm_style.empty()) {
                scfg.has_style = true;
                scfg.style = style_vector(read_latents(sm_style));
            }
            LatentSequence out = stemgen::sample(cond, unet.cfg.in_dim, scfg, unet.as_denoise_fn(ps));
            require_finite(out.vectors.v, "sampled latents");
            write_latents(sm_out, out);
            std::cout << "wrote " << out.steps() << " latent steps to " << sm_out << "\n";
            if (!sm_wav.empty()) {
                if (sm_ae.empty()) throw CLI::ValidationError("--wav-out requires --ae-ckpt");
                ParamStore aps;
                Autoencoder ae = load_autoencoder(sm_ae, aps);
                Waveform w = ae.decode(aps, out);
                require_finite(w.left, "decoded waveform");
                write_wav(sm_wav, w, true);
                std::cout << "wrote " << w.frames() << " frames to " << sm_wav << "\n";
            }
        } else if (*eval) {
            ParamStore ps;
            UNet unet = load_unet(ev_ckpt, ps);
            SyntheticDataset ds = load_dataset(ev_data);
            SamplerConfig scfg;
            scfg.steps = ev_steps;
            scfg.guidance = guidance_from(ev_weight, ev_phi, "paper");
            auto gen = [&](const LatentSequence& cx) {
                SamplerConfig c = scfg;
                c.seed = ev_seed;
                return stemgen::sample(cx, unet.cfg.in_dim, c, unet.as_denoise_fn(ps));
            };
            if (ev_metric == "coherence") {
                CoherenceResult r = eval_conditional_coherence(ds, gen, ev_n);
                std::cout << "mean_r=" << r.mean_r << " diag_fraction=" << r.diag_fraction << "\n";
            } else if (ev_metric == "frechet") {
                std::vector<std::vector<double>> real, fake;
                const int n = std::min<int>(ev_n, static_cast<int>(ds.items.size()));
                for (int i = 0; i < n; ++i) {
                    real.push_back(latent_stat_features(ds.items[static_cast<size_t>(i)].stem));
                    fake.push_back(latent_stat_features(gen(ds.items[static_cast<size_t>(i)].mix)));
                }
                std::cout << "frechet=" << frechet_feature_distance(real, fake) << "\n";
            } else {
                throw CLI::ValidationError("--metric must be coherence or frechet");
            }
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
