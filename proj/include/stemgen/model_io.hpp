#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include <json.hpp>

#include "stemgen/autoencoder.hpp"
#include "stemgen/checkpoint.hpp"
#include "stemgen/dataset.hpp"
#include "stemgen/unet.hpp"

namespace stemgen {

// Checkpoint metadata <-> model configs, shared by the CLI and tests so a
// checkpoint written anywhere loads everywhere.

inline nlohmann::json unet_cfg_to_json(const UNetConfig& c) {
    return {{"model", "unet"},
            {"in_dim", c.in_dim},
            {"cond_dim", c.cond_dim},
            {"channels", c.channel_schedule},
            {"attn_levels", c.attn_levels},
            {"t_embed_dim", c.t_embed_dim},
            {"cond_dropout", c.cond_dropout_p},
            {"heads", c.heads}};
}

inline UNetConfig unet_cfg_from_json(const nlohmann::json& m) {
    if (m.value("model", "") != "unet") throw std::runtime_error("checkpoint is not a denoiser");
    UNetConfig c;
    c.in_dim = m.at("in_dim").get<int>();
    c.cond_dim = m.at("cond_dim").get<int>();
    c.channel_schedule = m.at("channels").get<std::vector<int>>();
    c.attn_levels = m.at("attn_levels").get<std::set<int>>();
    c.t_embed_dim = m.at("t_embed_dim").get<int>();
    c.cond_dropout_p = m.at("cond_dropout").get<double>();
    c.heads = m.at("heads").get<int>();
    return c;
}

inline nlohmann::json ae_cfg_to_json(const AutoencoderConfig& c) {
    return {{"model", "autoencoder"}, {"r_time", c.r_time},  {"latent_dim", c.latent_dim},
            {"base_channels", c.base_channels}, {"n_stages", c.n_stages},
            {"hop", c.stft.hop_len},  {"sample_rate", c.sample_rate}};
}

inline AutoencoderConfig ae_cfg_from_json(const nlohmann::json& m) {
    if (m.value("model", "") != "autoencoder")
        throw std::runtime_error("checkpoint is not an autoencoder");
    AutoencoderConfig c;
    c.r_time = m.at("r_time").get<int>();
    c.latent_dim = m.at("latent_dim").get<int>();
    c.base_channels = m.at("base_channels").get<int>();
    c.n_stages = m.at("n_stages").get<int>();
    c.stft = StftConfig::from_hop(m.at("hop").get<int>());
    c.sample_rate = m.at("sample_rate").get<int>();
    return c;
}

inline Autoencoder load_autoencoder(const std::string& path, ParamStore& ps) {
    const AutoencoderConfig cfg = ae_cfg_from_json(read_checkpoint_meta(path));
    std::mt19937_64 rng(0);
    Autoencoder ae = Autoencoder::create(cfg, ps, rng);
    read_checkpoint(path, ps);
    return ae;
}

inline UNet load_unet(const std::string& path, ParamStore& ps) {
    const UNetConfig cfg = unet_cfg_from_json(read_checkpoint_meta(path));
    std::mt19937_64 rng(0);
    UNet unet = UNet::create(cfg, ps, rng);
    read_checkpoint(path, ps);
    return unet;
}

// Synthetic dataset directory layout: rule.json plus numbered
// mix_NNNN.lats / stem_NNNN.lats pairs.

inline void save_dataset(const std::string& dir, const SyntheticDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json rule = {
        {"kind", ds.rule.kind == SyntheticRuleKind::LowpassOctave ? "lowpass" : "linear"},
        {"dim_x", ds.rule.map.dim(0)},
        {"dim_y", ds.rule.map.dim(1)},
        {"map", ds.rule.map.v}};
    std::ofstream rf(fs::path(dir) / "rule.json");
    rf << rule.dump(2) << "\n";
    char name[32];
    for (size_t i = 0; i < ds.items.size(); ++i) {
        std::snprintf(name, sizeof(name), "mix_%04zu.lats", i);
        write_latents((fs::path(dir) / name).string(), ds.items[i].mix);
        std::snprintf(name, sizeof(name), "stem_%04zu.lats", i);
        write_latents((fs::path(dir) / name).string(), ds.items[i].stem);
    }
}

inline SyntheticDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream rf(fs::path(dir) / "rule.json");
    if (!rf) throw std::runtime_error("dataset: missing rule.json in " + dir);
    nlohmann::json rule = nlohmann::json::parse(rf);
    SyntheticDataset ds;
    ds.rule.kind = rule.at("kind").get<std::string>() == "lowpass"
                       ? SyntheticRuleKind::LowpassOctave
                       : SyntheticRuleKind::FixedLinearMap;
    ds.rule.map = Tensor({rule.at("dim_x").get<int>(), rule.at("dim_y").get<int>()},
                         rule.at("map").get<std::vector<double>>());
    char name[32];
    for (size_t i = 0;; ++i) {
        std::snprintf(name, sizeof(name), "mix_%04zu.lats", i);
        const fs::path mp = fs::path(dir) / name;
        if (!fs::exists(mp)) break;
        std::snprintf(name, sizeof(name), "stem_%04zu.lats", i);
        ds.items.push_back(
            {read_latents(mp.string()), read_latents((fs::path(dir) / name).string())});
    }
    if (ds.items.empty()) throw std::runtime_error("dataset: no pairs in " + dir);
    return ds;
}

}  // namespace stemgen
