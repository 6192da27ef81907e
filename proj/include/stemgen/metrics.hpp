#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "stemgen/dataset.hpp"
#include "stemgen/latent.hpp"
#include "stemgen/mel.hpp"
#include "stemgen/stft.hpp"

namespace stemgen {

// Per-clip mel statistics: mean and std of each mel band over time,
// channel-averaged. 64 bands -> 128-dim feature vector.
inline std::vector<double> mel_stat_features(const Waveform& w, int n_mels = 64) {
    const StftConfig cfg = StftConfig::from_hop(256);
    const MelFilterbank fb = MelFilterbank::make(cfg.bins(), n_mels, w.sample_rate);
    std::vector<double> mean(static_cast<size_t>(n_mels), 0.0);
    std::vector<double> var(static_cast<size_t>(n_mels), 0.0);
    int frames = 0;
    for (int c = 0; c < 2; ++c) {
        Spectrogram s = stft(w.channel(c), cfg);
        Tensor lm = mel_project(power_spec(s), fb, cfg.eps);  // F x M
        frames = lm.dim(0);
        for (int i = 0; i < lm.dim(0); ++i)
            for (int m = 0; m < n_mels; ++m) mean[static_cast<size_t>(m)] += lm.at(i, m);
    }
    for (auto& x : mean) x /= 2.0 * frames;
    for (int c = 0; c < 2; ++c) {
        Spectrogram s = stft(w.channel(c), cfg);
        Tensor lm = mel_project(power_spec(s), fb, cfg.eps);
        for (int i = 0; i < lm.dim(0); ++i)
            for (int m = 0; m < n_mels; ++m) {
                const double d = lm.at(i, m) - mean[static_cast<size_t>(m)];
                var[static_cast<size_t>(m)] += d * d;
            }
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(2 * n_mels));
    for (double x : mean) out.push_back(x);
    for (double x : var) out.push_back(std::sqrt(x / (2.0 * frames)));
    return out;
}

// Latent analogue: per-dimension mean and std over timesteps.
inline std::vector<double> latent_stat_features(const LatentSequence& c) {
    const int n = c.steps(), d = c.dim();
    std::vector<double> out;
    out.reserve(static_cast<size_t>(2 * d));
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += c.vectors.at(i, j);
        m /= n;
        out.push_back(m);
    }
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dd = c.vectors.at(i, j) - out[static_cast<size_t>(j)];
            s += dd * dd;
        }
        out.push_back(std::sqrt(s / n));
    }
    return out;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline void fit_gaussian(const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                         Eigen::MatrixXd& cov) {
    if (feats.size() < 2) throw std::invalid_argument("frechet: need at least 2 samples per set");
    const int n = static_cast<int>(feats.size());
    const int d = static_cast<int>(feats[0].size());
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(feats[static_cast<size_t>(i)].size()) != d)
            throw std::invalid_argument("frechet: ragged feature set");
        for (int j = 0; j < d; ++j) x(i, j) = feats[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

}  // namespace detail

// Frechet distance between Gaussian fits of two feature sets:
// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
// Falls back to a small ridge on both covariances if the symmetric-sqrt
// path produces a non-finite value.
inline double frechet_feature_distance(const std::vector<std::vector<double>>& a,
                                       const std::vector<std::vector<double>>& b) {
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    detail::fit_gaussian(a, mu_a, cov_a);
    detail::fit_gaussian(b, mu_b, cov_b);
    if (mu_a.size() != mu_b.size()) throw std::invalid_argument("frechet: feature dim mismatch");

    auto eval = [&](double ridge) {
        Eigen::MatrixXd sa = cov_a, sb = cov_b;
        if (ridge > 0.0) {
            sa += ridge * Eigen::MatrixXd::Identity(sa.rows(), sa.cols());
            sb += ridge * Eigen::MatrixXd::Identity(sb.rows(), sb.cols());
        }
        const Eigen::MatrixXd root_a = detail::psd_sqrt(sa);
        const Eigen::MatrixXd mid = detail::psd_sqrt(root_a * sb * root_a);
        const double tr = sa.trace() + sb.trace() - 2.0 * mid.trace();
        return (mu_a - mu_b).squaredNorm() + tr;
    };
    double d = eval(0.0);
    if (!std::isfinite(d)) d = eval(1e-6);
    return std::max(d, 0.0);
}

struct StyleDistance {
    double cosine = 0.0;     // 1 - cos similarity, 0 when colinear
    double euclidean = 0.0;  // plain L2
};

inline StyleDistance eval_style_distance(const std::vector<double>& a,
                                         const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("style distance: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0, l2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
        const double d = a[i] - b[i];
        l2 += d * d;
    }
    StyleDistance out;
    out.euclidean = std::sqrt(l2);
    const double denom = std::sqrt(na) * std::sqrt(nb);
    out.cosine = denom > 0.0 ? 1.0 - dot / denom : 1.0;
    return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: bad inputs");
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double num = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    const double denom = std::sqrt(va) * std::sqrt(vb);
    return denom > 0.0 ? num / denom : 0.0;
}

struct CoherenceResult {
    double mean_r = 0.0;        // mean Pearson r between generation i and R(c_x_i)
    double diag_fraction = 0.0; // rows of the cross matrix where the diagonal wins
    Tensor cross;               // n x n Pearson matrix, r(gen_i, R(c_x_j))
};

// Scores conditional coherence of a generator against a dataset whose
// exact conditioning rule is known.
inline CoherenceResult eval_conditional_coherence(
    const SyntheticDataset& ds,
    const std::function<LatentSequence(const LatentSequence&)>& generate, int max_items = 25) {
    const int n = std::min<int>(max_items, static_cast<int>(ds.items.size()));
    if (n < 2) throw std::invalid_argument("coherence: need at least 2 items");

    std::vector<std::vector<double>> gen(static_cast<size_t>(n)), truth(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const LatentSequence y = generate(ds.items[static_cast<size_t>(i)].mix);
        gen[static_cast<size_t>(i)] = y.vectors.v;
        truth[static_cast<size_t>(i)] =
            ds.rule.apply(ds.items[static_cast<size_t>(i)].mix.vectors).v;
    }

    CoherenceResult res;
    res.cross = Tensor({n, n});
    int diag_wins = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            res.cross.at(i, j) = pearson(gen[static_cast<size_t>(i)], truth[static_cast<size_t>(j)]);
        res.mean_r += res.cross.at(i, i);
        bool win = true;
        for (int j = 0; j < n; ++j)
            if (j != i && res.cross.at(i, j) >= res.cross.at(i, i)) win = false;
        if (win) ++diag_wins;
    }
    res.mean_r /= n;
    res.diag_fraction = static_cast<double>(diag_wins) / n;
    return res;
}

}  // namespace stemgen
