#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "stemgen/diffusion.hpp"

namespace stemgen {

// Flat key=value run configuration. Lines starting with '#' and blank
// lines are ignored; unknown keys are an error so typos fail loudly.
struct RunConfig {
    uint64_t seed = 0;

    // autoencoder
    int ae_latent_dim = 8;
    int ae_base_channels = 32;
    int ae_hop = 64;
    int ae_r_time = 256;
    int ae_train_steps = 2000;
    int ae_batch = 4;

    // denoiser
    int unet_ch0 = 32;
    int unet_ch1 = 64;
    int unet_ch2 = 128;
    int unet_heads = 4;
    int unet_t_embed_dim = 16;
    double cond_dropout = 0.15;
    int diff_train_steps = 5000;
    int diff_batch = 8;
    double diff_lr = 1e-3;

    // sampler
    int sample_steps = 64;
    double cfg_weight = 0.0;
    double cfg_phi = 0.0;
    std::string cfg_convention = "paper";  // paper | standard

    CfgConvention convention() const {
        if (cfg_convention == "paper") return CfgConvention::PaperPrinted;
        if (cfg_convention == "standard") return CfgConvention::Standard;
        throw std::runtime_error("config: cfg_convention must be paper or standard");
    }

    template <class F>
    void for_each_field(F&& f) {
        f("seed", seed);
        f("ae_latent_dim", ae_latent_dim);
        f("ae_base_channels", ae_base_channels);
        f("ae_hop", ae_hop);
        f("ae_r_time", ae_r_time);
        f("ae_train_steps", ae_train_steps);
        f("ae_batch", ae_batch);
        f("unet_ch0", unet_ch0);
        f("unet_ch1", unet_ch1);
        f("unet_ch2", unet_ch2);
        f("unet_heads", unet_heads);
        f("unet_t_embed_dim", unet_t_embed_dim);
        f("cond_dropout", cond_dropout);
        f("diff_train_steps", diff_train_steps);
        f("diff_batch", diff_batch);
        f("diff_lr", diff_lr);
        f("sample_steps", sample_steps);
        f("cfg_weight", cfg_weight);
        f("cfg_phi", cfg_phi);
        f("cfg_convention", cfg_convention);
    }
};

namespace detail {

inline void parse_value(const std::string& s, uint64_t& out) { out = std::stoull(s); }
inline void parse_value(const std::string& s, int& out) { out = std::stoi(s); }
inline void parse_value(const std::string& s, double& out) { out = std::stod(s); }
inline void parse_value(const std::string& s, std::string& out) { out = s; }

inline std::string format_value(uint64_t v) { return std::to_string(v); }
inline std::string format_value(int v) { return std::to_string(v); }
inline std::string format_value(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
inline std::string format_value(const std::string& v) { return v; }

inline std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: missing '=' on line " + std::to_string(lineno));
        const std::string key = detail::trim(t.substr(0, eq));
        if (kv.count(key)) throw std::runtime_error("config: duplicate key " + key);
        kv[key] = detail::trim(t.substr(eq + 1));
    }
    RunConfig cfg;
    cfg.for_each_field([&](const char* name, auto& field) {
        auto it = kv.find(name);
        if (it == kv.end()) return;
        detail::parse_value(it->second, field);
        kv.erase(it);
    });
    if (!kv.empty()) throw std::runtime_error("config: unknown key " + kv.begin()->first);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return parse_config(f);
}

inline std::string format_config(RunConfig cfg) {
    std::ostringstream os;
    cfg.for_each_field(
        [&](const char* name, auto& field) { os << name << "=" << detail::format_value(field) << "\n"; });
    return os.str();
}

inline void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << format_config(cfg);
}

}  // namespace stemgen
