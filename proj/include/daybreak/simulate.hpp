#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "daybreak/common.hpp"
#include "daybreak/io.hpp"
#include "daybreak/mixture.hpp"
#include "daybreak/numerics.hpp"

namespace daybreak {

// Synthetic label protocol: the sequence is cut into n_cps+1 partitions and
// each partition draws its own class distribution pi ~ Dir(alpha/K * 1).
// Change points sit at evenly spaced positions with a seeded jitter.
// Consecutive partitions are resampled until their distributions differ by
// at least min_tv in total variation, so planted changes are detectable
// rather than vacuous.
struct LabelSimConfig {
    int t_len = 500;
    int k = 5;
    int n_cps = 4;
    double alpha = 25.0;
    double min_tv = 0.4;
    double missing_rate = 0.0;  // MCAR at the step level
    std::uint64_t seed = 0;
};

struct LabelSim {
    std::vector<int> labels;  // 0-based, kMissingLabel where masked
    std::vector<int> cp_times;
    std::vector<Eigen::VectorXd> partition_probs;
};

inline LabelSim simulate_labels(const LabelSimConfig& cfg) {
    if (cfg.k < 1 || cfg.t_len < cfg.n_cps + 1) throw DataError("simulate_labels: bad shape");
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x51));
    LabelSim sim;

    const int segments = cfg.n_cps + 1;
    const double jitter_span = cfg.t_len / (25.0 * std::max(1, segments));
    std::uniform_real_distribution<double> jitter(-jitter_span, jitter_span);
    for (int i = 1; i <= cfg.n_cps; ++i) {
        const double base = static_cast<double>(cfg.t_len) * i / segments;
        int cp = static_cast<int>(std::lround(base + jitter(rng)));
        cp = std::clamp(cp, 2, cfg.t_len - 1);
        sim.cp_times.push_back(cp);
    }
    std::sort(sim.cp_times.begin(), sim.cp_times.end());

    const Eigen::VectorXd conc = Eigen::VectorXd::Constant(cfg.k, cfg.alpha / cfg.k);
    for (int s = 0; s < segments; ++s) {
        Eigen::VectorXd pi;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            pi = sample_dirichlet(conc, rng);
            if (s == 0) break;
            const double tv = 0.5 * (pi - sim.partition_probs.back()).cwiseAbs().sum();
            if (tv >= cfg.min_tv) break;
        }
        sim.partition_probs.push_back(pi);
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    sim.labels.resize(static_cast<std::size_t>(cfg.t_len));
    int seg = 0;
    for (int t = 1; t <= cfg.t_len; ++t) {
        while (seg < cfg.n_cps && t >= sim.cp_times[static_cast<std::size_t>(seg)]) ++seg;
        const auto& pi = sim.partition_probs[static_cast<std::size_t>(seg)];
        double u = unit(rng);
        int z = cfg.k - 1;
        for (int kk = 0; kk < cfg.k; ++kk) {
            u -= pi[kk];
            if (u <= 0.0) {
                z = kk;
                break;
            }
        }
        sim.labels[static_cast<std::size_t>(t - 1)] = z;
    }

    if (cfg.missing_rate > 0.0) {
        for (auto& z : sim.labels)
            if (unit(rng) < cfg.missing_rate) z = kMissingLabel;
    }
    return sim;
}

// Random generative mixture for synthetic datasets. The data-generating
// Fourier order may be lower than the fitting order. Class Bernoulli
// profiles are redrawn until pairwise mean absolute separation reaches
// min_profile_sep, keeping classes identifiable.
struct GeneratorConfig {
    int k = 5;
    int d = 24;
    int fourier_order = 2;
    double min_profile_sep = 0.15;
    std::uint64_t seed = 0;
};

inline MixtureParams random_generator_params(const GeneratorConfig& cfg) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x52));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> one_two(1.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    MixtureParams p;
    p.weights = Eigen::VectorXd::Constant(cfg.k, 1.0 / cfg.k);
    p.bern_means.resize(cfg.k, cfg.d);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        for (int k = 0; k < cfg.k; ++k)
            for (int j = 0; j < cfg.d; ++j)
                p.bern_means(k, j) = std::clamp(unit(rng), kProbClamp, 1.0 - kProbClamp);
        double min_sep = 1.0;
        for (int a = 0; a < cfg.k; ++a)
            for (int b = a + 1; b < cfg.k; ++b)
                min_sep = std::min(min_sep,
                                   (p.bern_means.row(a) - p.bern_means.row(b)).cwiseAbs().mean());
        if (min_sep >= cfg.min_profile_sep || cfg.k == 1) break;
    }
    p.kernels.resize(static_cast<std::size_t>(cfg.k));
    for (auto& hp : p.kernels) {
        hp.period = cfg.d;
        hp.amplitude = one_two(rng);
        hp.lengthscale = one_two(rng);
        hp.fourier_cos.resize(cfg.fourier_order + 1);
        hp.fourier_sin.resize(cfg.fourier_order);
        for (int c = 0; c <= cfg.fourier_order; ++c) hp.fourier_cos[c] = gauss(rng);
        for (int c = 0; c < cfg.fourier_order; ++c) hp.fourier_sin[c] = gauss(rng);
    }
    p.noise.sd.resize(cfg.d);
    for (int j = 0; j < cfg.d; ++j) p.noise.sd[j] = 0.2 + 0.8 * unit(rng);
    return p;
}

// Masks whole observations (all 2D entries) completely at random.
inline void mask_days_mcar(Dataset& data, const std::vector<int>& labels, double rate) {
    for (std::size_t t = 0; t < data.size(); ++t) {
        if (labels[t] == kMissingLabel && rate > 0.0) {
            const int d = data[t].dim();
            data[t] = HeteroObservation::empty(d);
        }
    }
}

// Synthetic posterior rows concentrated on the true labels: row_t ~
// Dir(boost * e_{z_t} + base * 1). Used to exercise the probability-vector
// detector without running the mixture.
inline PosteriorRows synthesize_posterior_rows(const std::vector<int>& labels, int k,
                                               double boost, double base, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x53));
    PosteriorRows out;
    out.rows.reserve(labels.size());
    out.missing.reserve(labels.size());
    for (int z : labels) {
        if (z == kMissingLabel) {
            out.rows.emplace_back();
            out.missing.push_back(1);
            continue;
        }
        Eigen::VectorXd alpha = Eigen::VectorXd::Constant(k, base);
        alpha[z] += boost;
        out.rows.push_back(sample_dirichlet(alpha, rng));
        out.missing.push_back(0);
    }
    return out;
}

}  // namespace daybreak
