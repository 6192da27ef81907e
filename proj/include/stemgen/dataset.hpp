#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stemgen/latent.hpp"
#include "stemgen/wav.hpp"

namespace stemgen {

enum class SyntheticRuleKind { LowpassOctave, FixedLinearMap };

// Known deterministic conditioning rule c_y = R(c_x), stored with the
// dataset so evaluation can score generations against exact ground truth.
struct SyntheticRule {
    SyntheticRuleKind kind = SyntheticRuleKind::FixedLinearMap;
    Tensor map;  // dim_x x dim_y

    Tensor apply(const Tensor& c_x) const {
        const int n = c_x.dim(0);
        const int dx = c_x.dim(1);
        const int dy = map.dim(1);
        if (dx != map.dim(0)) throw std::invalid_argument("synthetic rule: dim mismatch");
        Tensor in = c_x;
        if (kind == SyntheticRuleKind::LowpassOctave) {
            // two-tap lowpass along time before the projection
            for (int i = n - 1; i >= 1; --i)
                for (int j = 0; j < dx; ++j) in.at(i, j) = 0.5 * (c_x.at(i, j) + c_x.at(i - 1, j));
        }
        Tensor out({n, dy});
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < dy; ++k) {
                double acc = 0.0;
                for (int j = 0; j < dx; ++j) acc += in.at(i, j) * map.at(j, k);
                out.at(i, k) = acc;
            }
        return out;
    }
};

struct SyntheticSpec {
    SyntheticRuleKind rule = SyntheticRuleKind::FixedLinearMap;
    bool identity_map = false;  // requires dim_x == dim_y
    int n_items = 64;
    int steps = 64;  // N
    int dim_x = 8;
    int dim_y = 8;
    double noise_level = 0.0;
    uint64_t seed = 0;
};

struct LatentPair {
    LatentSequence mix;
    LatentSequence stem;
};

struct SyntheticDataset {
    std::vector<LatentPair> items;
    SyntheticRule rule;
};

// Seeded synthetic latent pairs: c_x is a smooth Gaussian process over
// time, c_y = R(c_x) + noise for the stored rule.
inline SyntheticDataset make_synthetic(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> nd;

    SyntheticDataset ds;
    ds.rule.kind = spec.rule;
    ds.rule.map = Tensor({spec.dim_x, spec.dim_y});
    if (spec.identity_map) {
        if (spec.dim_x != spec.dim_y)
            throw std::invalid_argument("make_synthetic: identity map needs equal dims");
        for (int i = 0; i < spec.dim_x; ++i) ds.rule.map.at(i, i) = 1.0;
    } else {
        const double sc = 1.0 / std::sqrt(static_cast<double>(spec.dim_x));
        for (auto& v : ds.rule.map.v) v = sc * nd(rng);
    }

    for (int item = 0; item < spec.n_items; ++item) {
        LatentSequence cx = LatentSequence::zeros(spec.steps, spec.dim_x, 256, SourceKind::Mix);
        // AR(1) smoothing, stationary-normalized
        const double rho = 0.9;
        const double innov = std::sqrt(1.0 - rho * rho);
        for (int j = 0; j < spec.dim_x; ++j) {
            double state = nd(rng);
            cx.vectors.at(0, j) = state;
            for (int i = 1; i < spec.steps; ++i) {
                state = rho * state + innov * nd(rng);
                cx.vectors.at(i, j) = state;
            }
        }
        LatentSequence cy = LatentSequence::zeros(spec.steps, spec.dim_y, 256, SourceKind::Stem);
        cy.vectors = ds.rule.apply(cx.vectors);
        if (spec.noise_level > 0.0)
            for (auto& v : cy.vectors.v) v += spec.noise_level * nd(rng);
        ds.items.push_back({std::move(cx), std::move(cy)});
    }
    return ds;
}

struct WavePair {
    Waveform mix;
    Waveform stem;
    std::string track;
};

// Directory layout: one subdirectory per track holding stem WAVs, with the
// designated target stem named "target.wav". The mix is a seeded non-empty
// random subset of the remaining stems.
inline std::vector<WavePair> ingest_pairs(const std::string& dir, uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("ingest: not a directory: " + dir);

    std::vector<fs::path> tracks;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) tracks.push_back(e.path());
    std::sort(tracks.begin(), tracks.end());
    if (tracks.empty()) throw std::runtime_error("ingest: no tracks found in " + dir);

    std::mt19937_64 rng(seed);
    std::vector<WavePair> out;
    for (const auto& track : tracks) {
        fs::path target_path;
        std::vector<fs::path> stems;
        for (const auto& e : fs::directory_iterator(track)) {
            if (!e.is_regular_file() || e.path().extension() != ".wav") continue;
            if (e.path().filename() == "target.wav")
                target_path = e.path();
            else
                stems.push_back(e.path());
        }
        std::sort(stems.begin(), stems.end());
        if (target_path.empty())
            throw std::runtime_error("ingest: no target.wav in " + track.string());
        if (stems.empty())
            throw std::runtime_error("ingest: no non-target stems in " + track.string());

        Waveform target = read_wav(target_path.string());

        // non-empty subset, uniform over the 2^k - 1 possibilities
        std::uniform_int_distribution<uint64_t> ud(1, (uint64_t{1} << stems.size()) - 1);
        const uint64_t mask = ud(rng);
        Waveform mix;
        bool first = true;
        for (size_t i = 0; i < stems.size(); ++i) {
            if (!(mask & (uint64_t{1} << i))) continue;
            Waveform s = read_wav(stems[i].string());
            if (s.frames() != target.frames() || s.sample_rate != target.sample_rate)
                throw std::runtime_error("ingest: stem length/rate mismatch in " + track.string());
            if (first) {
                mix = std::move(s);
                first = false;
            } else {
                for (size_t k = 0; k < mix.frames(); ++k) {
                    mix.left[k] += s.left[k];
                    mix.right[k] += s.right[k];
                }
            }
        }
        out.push_back({std::move(mix), std::move(target), track.filename().string()});
    }
    return out;
}

}  // namespace stemgen
