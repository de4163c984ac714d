#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "daybreak/common.hpp"
#include "daybreak/numerics.hpp"

namespace daybreak {

// Priors of the FPO observation model: probability vectors are Dirichlet
// with natural parameter split as concentration * mean, where
// concentration ~ Ga(kappa, nu) and mean ~ Dir(beta).
struct FpoPriors {
    double kappa = 1.0;
    double nu = 1.0;
    Eigen::VectorXd beta;  // on the simplex

    void validate() const {
        if (kappa <= 0.0 || nu <= 0.0) throw DataError("fpo: kappa and nu must be positive");
        if (beta.size() < 2 || std::abs(beta.sum() - 1.0) > 1e-8 || (beta.array() <= 0.0).any())
            throw DataError("fpo: beta must lie on the simplex interior");
    }
};

// Sufficient statistics of one run's probability vectors: the Dirichlet
// likelihood of a partition depends on the data only through the count and
// the per-component sums of logs.
struct PartitionStats {
    int count = 0;
    Eigen::VectorXd sum_log;  // length K

    static PartitionStats empty(int k) {
        PartitionStats s;
        s.sum_log = Eigen::VectorXd::Zero(k);
        return s;
    }

    void add(const Eigen::VectorXd& z) {
        ++count;
        sum_log += z.array().log().matrix();
    }
};

inline PartitionStats partition_stats(std::span<const Eigen::VectorXd> partition, int k) {
    PartitionStats s = PartitionStats::empty(k);
    for (const auto& z : partition) s.add(z);
    return s;
}

struct McmcSample {
    double concentration;
    Eigen::VectorXd mean;
};

struct McmcDiagnostics {
    double concentration_accept = 0.0;
    double mean_accept = 0.0;
    double proposal_scale = 0.0;
};

namespace detail {

// log prod_tau Dir(z_tau | c * lambda) through the partition suffstats.
inline double partition_loglik(const PartitionStats& stats, double c,
                               const Eigen::VectorXd& lambda) {
    if (stats.count == 0) return 0.0;
    double ll = stats.count * std::lgamma(c);
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        const double a = c * lambda[k];
        ll -= stats.count * std::lgamma(a);
        ll += (a - 1.0) * stats.sum_log[k];
    }
    return ll;
}

}  // namespace detail

// Alternating MH updates targeting the run posterior
// p(c, lambda | partition) with the concentration refreshed by an
// independence proposal from its Gamma prior and the mean random-walked in
// softmax coordinates (last component pinned, Jacobian prod_k lambda_k).
// The walk scale is adapted toward 0.3 acceptance during burn-in only.
inline std::vector<McmcSample> gibbs_within_mh(const PartitionStats& stats,
                                               const FpoPriors& priors, int n_samples,
                                               int burn_in, std::uint64_t seed,
                                               McmcDiagnostics* diag = nullptr) {
    priors.validate();
    if (n_samples < 1) throw DataError("gibbs_within_mh: need at least one sample");
    const int k = static_cast<int>(priors.beta.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double c = priors.kappa / priors.nu;
    Eigen::VectorXd v(k - 1);
    for (int i = 0; i < k - 1; ++i) v[i] = std::log(priors.beta[i] / priors.beta[k - 1]);
    Eigen::VectorXd lambda = softmax_with_reference(v);

    auto mean_log_target = [&](const Eigen::VectorXd& lam) {
        // Dirichlet prior plus likelihood plus the softmax Jacobian.
        return log_dirichlet_pdf(lam, priors.beta) + lam.array().log().sum() +
               detail::partition_loglik(stats, c, lam);
    };

    double ll_c = detail::partition_loglik(stats, c, lambda);

    double scale = 0.5;
    long c_acc = 0, c_tot = 0, v_acc = 0, v_tot = 0;
    const int total = burn_in + n_samples;
    std::vector<McmcSample> out;
    out.reserve(static_cast<std::size_t>(n_samples));

    int batch_acc = 0, batch_tot = 0;
    for (int it = 0; it < total; ++it) {
        // concentration block: independence proposal from the prior, so the
        // acceptance ratio reduces to the likelihood ratio.
        {
            const double c_prop = sample_gamma(priors.kappa, priors.nu, rng);
            const double ll_prop = detail::partition_loglik(stats, c_prop, lambda);
            ++c_tot;
            if (std::log(unit(rng)) < ll_prop - ll_c) {
                c = c_prop;
                ll_c = ll_prop;
                ++c_acc;
            }
        }
        // mean block: random walk in softmax coordinates.
        {
            Eigen::VectorXd v_prop = v;
            for (int i = 0; i < k - 1; ++i) v_prop[i] += scale * gauss(rng);
            const Eigen::VectorXd lam_prop = softmax_with_reference(v_prop);
            const double cur = mean_log_target(lambda);
            const double prop = mean_log_target(lam_prop);
            ++v_tot;
            ++batch_tot;
            if (std::log(unit(rng)) < prop - cur) {
                v = v_prop;
                lambda = lam_prop;
                ll_c = detail::partition_loglik(stats, c, lambda);
                ++v_acc;
                ++batch_acc;
            }
        }
        if (it < burn_in && batch_tot == 50) {
            const double rate = static_cast<double>(batch_acc) / 50.0;
            scale *= std::exp(0.5 * (rate - 0.3));
            scale = std::clamp(scale, 1e-3, 10.0);
            batch_acc = 0;
            batch_tot = 0;
        }
        if (it >= burn_in) out.push_back({c, lambda});
    }

    const double acc_c = static_cast<double>(c_acc) / static_cast<double>(c_tot);
    const double acc_v = static_cast<double>(v_acc) / static_cast<double>(v_tot);
    if (diag) {
        diag->concentration_accept = acc_c;
        diag->mean_accept = acc_v;
        diag->proposal_scale = scale;
    }
    if (v_tot >= 200 && acc_v < 1e-3)
        throw SamplerStuck("gibbs_within_mh: random-walk acceptance rate collapsed");
    return out;
}

inline std::vector<McmcSample> gibbs_within_mh(std::span<const Eigen::VectorXd> partition,
                                               const FpoPriors& priors, int n_samples,
                                               int burn_in, std::uint64_t seed,
                                               McmcDiagnostics* diag = nullptr) {
    return gibbs_within_mh(partition_stats(partition, static_cast<int>(priors.beta.size())),
                           priors, n_samples, burn_in, seed, diag);
}

// Monte Carlo estimate of the posterior predictive density of z_new under
// the run's parameter posterior, returned in log space:
//
//   log (1/S) sum_s Dir(z_new | c^s * lambda^s)
inline double fpo_log_predictive(const PartitionStats& stats, const Eigen::VectorXd& z_new,
                                 const FpoPriors& priors, int n_samples, int burn_in,
                                 std::uint64_t seed) {
    const auto samples = gibbs_within_mh(stats, priors, n_samples, burn_in, seed);
    std::vector<double> log_dens;
    log_dens.reserve(samples.size());
    for (const auto& s : samples)
        log_dens.push_back(log_dirichlet_pdf_split(z_new, s.concentration, s.mean));
    return log_sum_exp(log_dens) - std::log(static_cast<double>(samples.size()));
}

inline double fpo_predictive(std::span<const Eigen::VectorXd> partition,
                             const Eigen::VectorXd& z_new, const FpoPriors& priors,
                             int n_samples, std::uint64_t seed, int burn_in = 200) {
    return std::exp(fpo_log_predictive(
        partition_stats(partition, static_cast<int>(priors.beta.size())), z_new, priors,
        n_samples, burn_in, seed));
}

}  // namespace daybreak
