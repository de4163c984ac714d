#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "daybreak/common.hpp"
#include "daybreak/kernel.hpp"
#include "daybreak/numerics.hpp"

namespace daybreak {

// Bernoulli means live in [kProbClamp, 1 - kProbClamp]; the closed-form
// M-step can hit exact 0/1 on small data, which makes the log-likelihood
// unbounded.
inline constexpr double kProbClamp = 1e-6;

// One period of heterogeneous data: real-valued and binary slots, each entry
// independently missable.
struct HeteroObservation {
    Eigen::VectorXd real_values;
    std::vector<std::uint8_t> real_missing;
    Eigen::VectorXi bin_values;
    std::vector<std::uint8_t> bin_missing;

    int dim() const { return static_cast<int>(real_values.size()); }

    bool fully_missing() const {
        for (auto m : real_missing)
            if (!m) return false;
        for (auto m : bin_missing)
            if (!m) return false;
        return true;
    }

    static HeteroObservation empty(int d) {
        HeteroObservation obs;
        obs.real_values = Eigen::VectorXd::Zero(d);
        obs.real_missing.assign(static_cast<std::size_t>(d), 1);
        obs.bin_values = Eigen::VectorXi::Zero(d);
        obs.bin_missing.assign(static_cast<std::size_t>(d), 1);
        return obs;
    }
};

using Dataset = std::vector<HeteroObservation>;

struct MixtureParams {
    Eigen::VectorXd weights;           // K, on the simplex
    Eigen::MatrixXd bern_means;        // K x D, clamped to the open interval
    std::vector<KernelParams> kernels; // K entries
    NoiseModel noise;                  // shared across classes

    int num_classes() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(bern_means.cols()); }

    void validate() const {
        if (weights.size() == 0) throw DataError("mixture: no classes");
        if (std::abs(weights.sum() - 1.0) > 1e-10 || (weights.array() < 0.0).any())
            throw DataError("mixture: weights must form a simplex");
        if (bern_means.rows() != weights.size())
            throw DataError("mixture: bern_means rows must match class count");
        if ((bern_means.array() < kProbClamp - 1e-15).any() ||
            (bern_means.array() > 1.0 - kProbClamp + 1e-15).any())
            throw DataError("mixture: bern_means outside clamp interval");
        if (static_cast<int>(kernels.size()) != num_classes())
            throw DataError("mixture: kernel count must match class count");
        for (const auto& k : kernels) k.validate();
        noise.validate();
        if (noise.sd.size() != dim()) throw DataError("mixture: noise length must equal dim");
    }
};

struct LatentPosterior {
    Eigen::MatrixXd probs;                   // T x K, rows on the simplex
    std::vector<std::uint8_t> fully_missing; // length T; such rows are uniform

    int size() const { return static_cast<int>(probs.rows()); }
};

// Conditional moments of the missing real block given the observed one,
// under one class. Empty observed set falls back to the prior (zero mean,
// full covariance).
struct MissingMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct EStepResult {
    LatentPosterior posterior;
    double loglik = 0.0;  // observed-data mixture log-likelihood
    std::vector<std::vector<int>> observed_idx;           // per t, real part
    std::vector<std::vector<int>> missing_idx;            // per t, real part
    std::vector<std::vector<MissingMoments>> moments;     // [t][k]
};

namespace detail {

struct PatternBlock {
    std::vector<int> obs_idx;
    std::vector<int> mis_idx;
    Eigen::MatrixXd chol_oo;    // lower factor of Sigma_oo (empty if no observed)
    double log_det_oo = 0.0;
    Eigen::MatrixXd cond_gain;  // Sigma_mo Sigma_oo^-1, m x o
    Eigen::MatrixXd cond_cov;   // Sigma_mm - Sigma_mo Sigma_oo^-1 Sigma_om
};

inline std::string pattern_key(const std::vector<std::uint8_t>& missing) {
    std::string key(missing.size(), '0');
    for (std::size_t i = 0; i < missing.size(); ++i)
        if (missing[i]) key[i] = '1';
    return key;
}

inline PatternBlock make_pattern_block(const Eigen::MatrixXd& sigma,
                                       const std::vector<std::uint8_t>& missing) {
    PatternBlock blk;
    const int d = static_cast<int>(sigma.rows());
    for (int j = 0; j < d; ++j) {
        if (missing[static_cast<std::size_t>(j)])
            blk.mis_idx.push_back(j);
        else
            blk.obs_idx.push_back(j);
    }
    const int no = static_cast<int>(blk.obs_idx.size());
    const int nm = static_cast<int>(blk.mis_idx.size());
    if (no == 0) {
        blk.cond_cov = sigma;
        return blk;
    }
    Eigen::MatrixXd soo(no, no);
    for (int i = 0; i < no; ++i)
        for (int j = 0; j < no; ++j) soo(i, j) = sigma(blk.obs_idx[i], blk.obs_idx[j]);
    Eigen::LLT<Eigen::MatrixXd> llt(soo);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("e_step: observed covariance block not positive definite");
    blk.chol_oo = llt.matrixL();
    blk.log_det_oo = 2.0 * blk.chol_oo.diagonal().array().log().sum();
    if (nm > 0) {
        Eigen::MatrixXd som(no, nm);
        Eigen::MatrixXd smm(nm, nm);
        for (int i = 0; i < nm; ++i) {
            for (int j = 0; j < no; ++j) som(j, i) = sigma(blk.obs_idx[j], blk.mis_idx[i]);
            for (int j = 0; j < nm; ++j) smm(i, j) = sigma(blk.mis_idx[i], blk.mis_idx[j]);
        }
        // gain^T = Sigma_oo^-1 Sigma_om
        Eigen::MatrixXd gain_t = llt.solve(som);
        blk.cond_gain = gain_t.transpose();
        blk.cond_cov = smm - blk.cond_gain * som;
    } else {
        blk.cond_cov.resize(0, 0);
    }
    return blk;
}

inline double gaussian_block_loglik(const PatternBlock& blk, const Eigen::VectorXd& x_obs) {
    const int no = static_cast<int>(blk.obs_idx.size());
    if (no == 0) return 0.0;
    Eigen::VectorXd y = blk.chol_oo.triangularView<Eigen::Lower>().solve(x_obs);
    const double quad = y.squaredNorm();
    return -0.5 * (no * std::log(2.0 * std::numbers::pi) + blk.log_det_oo + quad);
}

}  // namespace detail

// log N(x_obs | 0, Sigma_oo) over the observed real entries only; an
// all-missing real part contributes 0 by convention.
inline double gaussian_marginal_loglik(const HeteroObservation& obs, int k,
                                       const MixtureParams& params) {
    const CovMatrix cov = build_covariance(params.kernels[static_cast<std::size_t>(k)], params.noise);
    const auto blk = detail::make_pattern_block(cov.values, obs.real_missing);
    const int no = static_cast<int>(blk.obs_idx.size());
    if (no == 0) return 0.0;
    Eigen::VectorXd x_obs(no);
    for (int i = 0; i < no; ++i) x_obs[i] = obs.real_values[blk.obs_idx[i]];
    return detail::gaussian_block_loglik(blk, x_obs);
}

// Sum over observed binary entries; missing entries contribute 0.
inline double bernoulli_loglik(const HeteroObservation& obs, int k, const MixtureParams& params) {
    double ll = 0.0;
    for (int j = 0; j < obs.dim(); ++j) {
        if (obs.bin_missing[static_cast<std::size_t>(j)]) continue;
        const double mu = params.bern_means(k, j);
        ll += obs.bin_values[j] ? std::log(mu) : std::log1p(-mu);
    }
    return ll;
}

inline EStepResult e_step(const Dataset& data, const MixtureParams& params) {
    params.validate();
    const int t_len = static_cast<int>(data.size());
    const int k_len = params.num_classes();
    const int d = params.dim();

    EStepResult res;
    res.posterior.probs.resize(t_len, k_len);
    res.posterior.fully_missing.assign(static_cast<std::size_t>(t_len), 0);
    res.observed_idx.resize(static_cast<std::size_t>(t_len));
    res.missing_idx.resize(static_cast<std::size_t>(t_len));
    res.moments.resize(static_cast<std::size_t>(t_len));

    std::vector<CovMatrix> covs;
    covs.reserve(static_cast<std::size_t>(k_len));
    for (int k = 0; k < k_len; ++k)
        covs.push_back(build_covariance(params.kernels[static_cast<std::size_t>(k)], params.noise));

    // Factorizations depend only on the missing pattern; cache them per class.
    std::unordered_map<std::string, std::vector<detail::PatternBlock>> blocks;
    for (int t = 0; t < t_len; ++t) {
        const auto& obs = data[static_cast<std::size_t>(t)];
        if (obs.dim() != d || static_cast<int>(obs.bin_values.size()) != d)
            throw DataError("e_step: observation dimension mismatch");
        const auto key = detail::pattern_key(obs.real_missing);
        auto it = blocks.find(key);
        if (it == blocks.end()) {
            std::vector<detail::PatternBlock> per_class;
            per_class.reserve(static_cast<std::size_t>(k_len));
            for (int k = 0; k < k_len; ++k)
                per_class.push_back(detail::make_pattern_block(covs[static_cast<std::size_t>(k)].values,
                                                               obs.real_missing));
            it = blocks.emplace(key, std::move(per_class)).first;
        }
        const auto& per_class = it->second;
        res.observed_idx[static_cast<std::size_t>(t)] = per_class[0].obs_idx;
        res.missing_idx[static_cast<std::size_t>(t)] = per_class[0].mis_idx;

        auto& moments_t = res.moments[static_cast<std::size_t>(t)];
        moments_t.resize(static_cast<std::size_t>(k_len));

        if (obs.fully_missing()) {
            res.posterior.fully_missing[static_cast<std::size_t>(t)] = 1;
            res.posterior.probs.row(t).setConstant(1.0 / static_cast<double>(k_len));
            for (int k = 0; k < k_len; ++k) {
                moments_t[static_cast<std::size_t>(k)].mean = Eigen::VectorXd::Zero(d);
                moments_t[static_cast<std::size_t>(k)].cov = covs[static_cast<std::size_t>(k)].values;
            }
            continue;
        }

        const int no = static_cast<int>(per_class[0].obs_idx.size());
        Eigen::VectorXd x_obs(no);
        for (int i = 0; i < no; ++i) x_obs[i] = obs.real_values[per_class[0].obs_idx[i]];

        Eigen::VectorXd log_post(k_len);
        for (int k = 0; k < k_len; ++k) {
            const auto& blk = per_class[static_cast<std::size_t>(k)];
            const double lg = detail::gaussian_block_loglik(blk, x_obs);
            const double lb = bernoulli_loglik(obs, k, params);
            log_post[k] = std::log(params.weights[k]) + lg + lb;

            auto& mom = moments_t[static_cast<std::size_t>(k)];
            const int nm = static_cast<int>(blk.mis_idx.size());
            if (nm == 0) {
                mom.mean.resize(0);
                mom.cov.resize(0, 0);
            } else if (no == 0) {
                mom.mean = Eigen::VectorXd::Zero(nm);
                mom.cov = blk.cond_cov;
            } else {
                mom.mean = blk.cond_gain * x_obs;
                mom.cov = blk.cond_cov;
            }
        }
        const double lse = log_sum_exp(log_post);
        if (lse == kNegInf || !std::isfinite(lse))
            throw DegenerateResponsibility("e_step: joint density vanished for every class");
        res.posterior.probs.row(t) = (log_post.array() - lse).exp();
        res.loglik += lse;
    }
    return res;
}

inline double observed_loglik(const Dataset& data, const MixtureParams& params) {
    return e_step(data, params).loglik;
}

struct BernoulliUpdate {
    Eigen::VectorXd weights;
    Eigen::MatrixXd bern_means;
    std::vector<int> empty_classes;
};

// Closed-form update of mixing weights and Bernoulli means. Missing binary
// entries enter through their conditional expectation under the previous
// parameters (mu_old). Classes whose responsibility mass falls below
// 1e-8 * T keep their previous means.
inline BernoulliUpdate m_step_bernoulli(const Dataset& data, const EStepResult& res,
                                        const MixtureParams& current) {
    const int t_len = static_cast<int>(data.size());
    const int k_len = current.num_classes();
    const int d = current.dim();
    const double eps_w = 1e-8 * static_cast<double>(t_len);

    BernoulliUpdate upd;
    upd.bern_means = current.bern_means;
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(k_len);
    Eigen::MatrixXd numer = Eigen::MatrixXd::Zero(k_len, d);

    for (int t = 0; t < t_len; ++t) {
        if (res.posterior.fully_missing[static_cast<std::size_t>(t)]) continue;
        const auto& obs = data[static_cast<std::size_t>(t)];
        for (int k = 0; k < k_len; ++k) {
            const double r = res.posterior.probs(t, k);
            denom[k] += r;
            for (int j = 0; j < d; ++j) {
                const double x_hat = obs.bin_missing[static_cast<std::size_t>(j)]
                                         ? current.bern_means(k, j)
                                         : static_cast<double>(obs.bin_values[j]);
                numer(k, j) += r * x_hat;
            }
        }
    }

    const double total = denom.sum();
    if (total <= 0.0) throw DegenerateResponsibility("m_step_bernoulli: no responsibility mass");
    upd.weights = denom / total;
    for (int k = 0; k < k_len; ++k) {
        if (denom[k] < eps_w) {
            upd.empty_classes.push_back(k);
            continue;
        }
        for (int j = 0; j < d; ++j)
            upd.bern_means(k, j) = std::clamp(numer(k, j) / denom[k], kProbClamp, 1.0 - kProbClamp);
    }
    return upd;
}

// Expected complete-data objective for the Gaussian block with the E-step
// expectations frozen:
//
//   Q(theta) = sum_k -1/2 [ R_k (D log 2pi + log|Sigma_k|) + tr(Sigma_k^-1 S_k) ]
//
// where S_k = sum_t r_tk (xhat_tk xhat_tk^T + A_tk), xhat fills missing real
// entries with their conditional mean and A_tk carries the conditional
// covariance on the missing block. Hyperparameters with positivity
// constraints are optimized through their logarithms.
class GaussianQ {
public:
    GaussianQ(const Dataset& data, const EStepResult& res, const MixtureParams& params)
        : d_(params.dim()), k_len_(params.num_classes()), order_(params.kernels[0].order()) {
        resp_totals_ = Eigen::VectorXd::Zero(k_len_);
        scatter_.assign(static_cast<std::size_t>(k_len_), Eigen::MatrixXd::Zero(d_, d_));
        const int t_len = static_cast<int>(data.size());
        for (int t = 0; t < t_len; ++t) {
            if (res.posterior.fully_missing[static_cast<std::size_t>(t)]) continue;
            const auto& obs = data[static_cast<std::size_t>(t)];
            const auto& o_idx = res.observed_idx[static_cast<std::size_t>(t)];
            const auto& m_idx = res.missing_idx[static_cast<std::size_t>(t)];
            for (int k = 0; k < k_len_; ++k) {
                const double r = res.posterior.probs(t, k);
                resp_totals_[k] += r;
                const auto& mom = res.moments[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
                Eigen::VectorXd filled(d_);
                for (std::size_t i = 0; i < o_idx.size(); ++i)
                    filled[o_idx[i]] = obs.real_values[o_idx[i]];
                for (std::size_t i = 0; i < m_idx.size(); ++i)
                    filled[m_idx[i]] = mom.mean[static_cast<Eigen::Index>(i)];
                auto& s = scatter_[static_cast<std::size_t>(k)];
                s.noalias() += r * (filled * filled.transpose());
                for (std::size_t i = 0; i < m_idx.size(); ++i)
                    for (std::size_t j = 0; j < m_idx.size(); ++j)
                        s(m_idx[i], m_idx[j]) +=
                            r * mom.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }

    int num_params() const { return k_len_ * (2 * order_ + 3) + d_; }

    Eigen::VectorXd pack(const std::vector<KernelParams>& kernels, const NoiseModel& noise) const {
        Eigen::VectorXd x(num_params());
        int at = 0;
        for (int k = 0; k < k_len_; ++k) {
            const auto& hp = kernels[static_cast<std::size_t>(k)];
            x[at++] = std::log(hp.amplitude);
            x[at++] = std::log(hp.lengthscale);
            for (int c = 0; c <= order_; ++c) x[at++] = hp.fourier_cos[c];
            for (int c = 0; c < order_; ++c) x[at++] = hp.fourier_sin[c];
        }
        for (int j = 0; j < d_; ++j) x[at++] = std::log(noise.sd[j]);
        return x;
    }

    void unpack(const Eigen::VectorXd& x, std::vector<KernelParams>& kernels,
                NoiseModel& noise) const {
        int at = 0;
        for (int k = 0; k < k_len_; ++k) {
            auto& hp = kernels[static_cast<std::size_t>(k)];
            hp.amplitude = std::exp(x[at++]);
            hp.lengthscale = std::exp(x[at++]);
            for (int c = 0; c <= order_; ++c) hp.fourier_cos[c] = x[at++];
            for (int c = 0; c < order_; ++c) hp.fourier_sin[c] = x[at++];
        }
        for (int j = 0; j < d_; ++j) noise.sd[j] = std::exp(x[at++]);
    }

    double value(const std::vector<KernelParams>& kernels, const NoiseModel& noise) const {
        double q = 0.0;
        for (int k = 0; k < k_len_; ++k) {
            const CovMatrix cov = build_covariance(kernels[static_cast<std::size_t>(k)], noise);
            Eigen::LLT<Eigen::MatrixXd> llt(cov.values);
            const Eigen::MatrixXd x = llt.solve(scatter_[static_cast<std::size_t>(k)]);
            q += -0.5 * (resp_totals_[k] * (d_ * std::log(2.0 * std::numbers::pi) + cov.log_det()) +
                         x.trace());
        }
        return q;
    }

    Eigen::VectorXd gradient(const std::vector<KernelParams>& kernels,
                             const NoiseModel& noise) const {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(num_params());
        Eigen::VectorXd noise_grad = Eigen::VectorXd::Zero(d_);
        int at = 0;
        for (int k = 0; k < k_len_; ++k) {
            const auto& hp = kernels[static_cast<std::size_t>(k)];
            const CovMatrix cov = build_covariance(hp, noise);
            Eigen::LLT<Eigen::MatrixXd> llt(cov.values);
            const Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(d_, d_));
            const Eigen::MatrixXd sis = sigma_inv * scatter_[static_cast<std::size_t>(k)] * sigma_inv;
            const Eigen::MatrixXd m = sis - resp_totals_[k] * sigma_inv;

            double d_amp = 0.0;
            double d_ell = 0.0;
            Eigen::VectorXd d_cos = Eigen::VectorXd::Zero(order_ + 1);
            Eigen::VectorXd d_sin = Eigen::VectorXd::Zero(order_);
            for (int i = 0; i < d_; ++i) {
                for (int j = 0; j <= i; ++j) {
                    const double w = (i == j) ? m(i, i) : m(i, j) + m(j, i);
                    const auto g = kernel_gradients(hp, i + 1.0, j + 1.0);
                    d_amp += 0.5 * w * g.d_amplitude;
                    d_ell += 0.5 * w * g.d_lengthscale;
                    d_cos += 0.5 * w * g.d_cos;
                    d_sin += 0.5 * w * g.d_sin;
                }
            }
            grad[at++] = d_amp * hp.amplitude;     // d/d log amplitude
            grad[at++] = d_ell * hp.lengthscale;   // d/d log lengthscale
            for (int c = 0; c <= order_; ++c) grad[at++] = d_cos[c];
            for (int c = 0; c < order_; ++c) grad[at++] = d_sin[c];

            for (int j = 0; j < d_; ++j)
                noise_grad[j] += m(j, j) * noise.sd[j] * noise.sd[j];
        }
        for (int j = 0; j < d_; ++j) grad[at++] = noise_grad[j];
        return grad;
    }

private:
    int d_;
    int k_len_;
    int order_;
    Eigen::VectorXd resp_totals_;
    std::vector<Eigen::MatrixXd> scatter_;
};

struct GaussianStepResult {
    std::vector<KernelParams> kernels;
    NoiseModel noise;
    bool improved = false;
    int evals_used = 0;
};

// Conjugate-gradient ascent (Polak-Ribiere with Armijo backtracking) on the
// frozen Q surface. Each objective evaluation counts against the budget; a
// failed first line search leaves the previous hyperparameters in place,
// which keeps the outer EM valid.
inline GaussianStepResult m_step_gaussian(const GaussianQ& q,
                                          const std::vector<KernelParams>& kernels,
                                          const NoiseModel& noise, int budget) {
    GaussianStepResult out;
    out.kernels = kernels;
    out.noise = noise;

    std::vector<KernelParams> work_k = kernels;
    NoiseModel work_n = noise;

    auto eval = [&](const Eigen::VectorXd& x) -> double {
        q.unpack(x, work_k, work_n);
        try {
            return q.value(work_k, work_n);
        } catch (const NotPositiveDefinite&) {
            return kNegInf;
        }
    };

    Eigen::VectorXd x = q.pack(kernels, noise);
    double f = eval(x);
    ++out.evals_used;
    if (!std::isfinite(f)) return out;

    Eigen::VectorXd g = q.gradient(kernels, noise);
    Eigen::VectorXd dir = g;
    double step = 1.0 / std::max(1.0, g.norm());

    while (out.evals_used < budget) {
        double slope = g.dot(dir);
        if (slope <= 0.0) {
            dir = g;
            slope = g.squaredNorm();
            if (slope <= 0.0) break;
        }
        // Armijo backtracking on the ascent direction.
        double alpha = step;
        bool moved = false;
        for (int ls = 0; ls < 8 && out.evals_used < budget; ++ls) {
            const Eigen::VectorXd x_try = x + alpha * dir;
            const double f_try = eval(x_try);
            ++out.evals_used;
            if (std::isfinite(f_try) && f_try >= f + 1e-4 * alpha * slope) {
                x = x_try;
                f = f_try;
                step = alpha * 2.0;
                moved = true;
                break;
            }
            alpha *= 0.25;
        }
        if (!moved) break;

        q.unpack(x, work_k, work_n);
        Eigen::VectorXd g_new = q.gradient(work_k, work_n);
        const double denom = g.squaredNorm();
        const double beta = denom > 0.0 ? std::max(0.0, g_new.dot(g_new - g) / denom) : 0.0;
        dir = g_new + beta * dir;
        g = g_new;
        out.improved = true;
        if (g.norm() < 1e-10) break;
    }

    if (out.improved) {
        q.unpack(x, out.kernels, out.noise);
    }
    return out;
}

struct FitConfig {
    int n_init = 5;
    int max_em_iters = 200;
    double epsilon_q = 250.0;  // convergence slack on the objective trace
    int max_m_evals = 10;      // objective evaluations per Gaussian M-step
    std::uint64_t seed = 0;
    bool optimize_gaussian = true;
    bool parallel_restarts = true;
};

struct FitResult {
    MixtureParams params;
    LatentPosterior posterior;
    std::vector<double> q_trace;
    int iterations = 0;
    int best_restart = 0;
    std::uint64_t seed = 0;
    std::vector<int> empty_class_events;  // class indices that went empty at any point
};

inline MixtureParams random_init(int k_len, int d, int order, std::mt19937_64& rng) {
    MixtureParams p;
    p.weights = sample_dirichlet(Eigen::VectorXd::Constant(k_len, 50.0), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> one_two(1.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    p.bern_means.resize(k_len, d);
    for (int k = 0; k < k_len; ++k)
        for (int j = 0; j < d; ++j)
            p.bern_means(k, j) = std::clamp(unit(rng), kProbClamp, 1.0 - kProbClamp);
    p.kernels.resize(static_cast<std::size_t>(k_len));
    for (auto& hp : p.kernels) {
        hp.period = d;
        hp.amplitude = one_two(rng);
        hp.lengthscale = one_two(rng);
        hp.fourier_cos.resize(order + 1);
        hp.fourier_sin.resize(order);
        for (int c = 0; c <= order; ++c) hp.fourier_cos[c] = gauss(rng);
        for (int c = 0; c < order; ++c) hp.fourier_sin[c] = gauss(rng);
    }
    p.noise.sd.resize(d);
    for (int j = 0; j < d; ++j) p.noise.sd[j] = std::max(unit(rng), 1e-3);
    return p;
}

namespace detail {

struct EmRun {
    MixtureParams params;
    LatentPosterior posterior;
    std::vector<double> trace;
    int iterations = 0;
    std::vector<int> empty_class_events;
};

inline EmRun run_em(const Dataset& data, int k_len, int order, const FitConfig& cfg,
                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int d = data.front().dim();
    EmRun run;
    run.params = random_init(k_len, d, order, rng);

    EStepResult estep = e_step(data, run.params);
    run.trace.push_back(estep.loglik);

    for (int iter = 0; iter < cfg.max_em_iters; ++iter) {
        auto bern = m_step_bernoulli(data, estep, run.params);
        run.params.weights = bern.weights;
        run.params.bern_means = bern.bern_means;
        for (int k : bern.empty_classes) run.empty_class_events.push_back(k);

        if (cfg.optimize_gaussian) {
            GaussianQ q(data, estep, run.params);
            auto gstep = m_step_gaussian(q, run.params.kernels, run.params.noise, cfg.max_m_evals);
            run.params.kernels = gstep.kernels;
            run.params.noise = gstep.noise;
        }

        estep = e_step(data, run.params);
        run.trace.push_back(estep.loglik);
        run.iterations = iter + 1;
        const std::size_t n = run.trace.size();
        if (std::abs(run.trace[n - 1] - run.trace[n - 2]) < cfg.epsilon_q) break;
    }
    run.posterior = estep.posterior;
    return run;
}

}  // namespace detail

// EM with multiple random restarts. Restarts are independent given their
// derived seeds and run concurrently; the one with the highest final
// objective wins (ties break toward the lowest restart index).
inline FitResult fit(const Dataset& data, int k_len, const FitConfig& cfg, int fourier_order = 3) {
    if (data.empty()) throw EmptyDataset("fit: empty dataset");
    int usable = 0;
    for (const auto& obs : data)
        if (!obs.fully_missing()) ++usable;
    if (usable < k_len) throw DataError("fit: need at least K non-missing observations");

    const int n_init = std::max(1, cfg.n_init);
    std::vector<std::optional<detail::EmRun>> runs(static_cast<std::size_t>(n_init));
    std::vector<std::string> errors(static_cast<std::size_t>(n_init));

    auto worker = [&](int i) {
        try {
            runs[static_cast<std::size_t>(i)] =
                detail::run_em(data, k_len, fourier_order, cfg, derive_seed(cfg.seed, 0x11, i));
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    };

    if (cfg.parallel_restarts && n_init > 1) {
        std::vector<std::future<void>> futs;
        futs.reserve(static_cast<std::size_t>(n_init));
        for (int i = 0; i < n_init; ++i)
            futs.push_back(std::async(std::launch::async, worker, i));
        for (auto& f : futs) f.get();
    } else {
        for (int i = 0; i < n_init; ++i) worker(i);
    }

    int best = -1;
    for (int i = 0; i < n_init; ++i) {
        if (!runs[static_cast<std::size_t>(i)]) continue;
        if (best < 0 ||
            runs[static_cast<std::size_t>(i)]->trace.back() > runs[static_cast<std::size_t>(best)]->trace.back())
            best = i;
    }
    if (best < 0) {
        std::string detail = "fit: every initialization aborted";
        for (const auto& e : errors)
            if (!e.empty()) {
                detail += "; last error: " + e;
                break;
            }
        throw AllRunsFailed(detail);
    }

    auto& run = *runs[static_cast<std::size_t>(best)];
    FitResult out;
    out.params = std::move(run.params);
    out.posterior = std::move(run.posterior);
    out.q_trace = std::move(run.trace);
    out.iterations = run.iterations;
    out.best_restart = best;
    out.seed = cfg.seed;
    out.empty_class_events = std::move(run.empty_class_events);
    return out;
}

// MAP class labels from a posterior; fully-missing rows map to kMissingLabel.
inline std::vector<int> map_labels(const LatentPosterior& post) {
    std::vector<int> labels(static_cast<std::size_t>(post.size()));
    for (int t = 0; t < post.size(); ++t) {
        if (post.fully_missing[static_cast<std::size_t>(t)]) {
            labels[static_cast<std::size_t>(t)] = kMissingLabel;
            continue;
        }
        Eigen::Index arg = 0;
        post.probs.row(t).maxCoeff(&arg);
        labels[static_cast<std::size_t>(t)] = static_cast<int>(arg);
    }
    return labels;
}

// Draws one observation per label: real part from N(0, K_k + diag(sd^2)),
// binary part from the class Bernoulli means. Fully observed.
inline Dataset sample_synthetic(const MixtureParams& params, const std::vector<int>& labels,
                                std::uint64_t seed) {
    params.validate();
    const int d = params.dim();
    std::vector<Eigen::MatrixXd> chol;
    chol.reserve(params.kernels.size());
    for (const auto& hp : params.kernels)
        chol.push_back(build_covariance(hp, params.noise).cholesky_factor);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Dataset data;
    data.reserve(labels.size());
    for (int z : labels) {
        if (z < 0 || z >= params.num_classes())
            throw DataError("sample_synthetic: label out of range");
        HeteroObservation obs;
        Eigen::VectorXd white(d);
        for (int j = 0; j < d; ++j) white[j] = gauss(rng);
        obs.real_values = chol[static_cast<std::size_t>(z)] * white;
        obs.real_missing.assign(static_cast<std::size_t>(d), 0);
        obs.bin_values.resize(d);
        for (int j = 0; j < d; ++j)
            obs.bin_values[j] = unit(rng) < params.bern_means(z, j) ? 1 : 0;
        obs.bin_missing.assign(static_cast<std::size_t>(d), 0);
        data.push_back(std::move(obs));
    }
    return data;
}

}  // namespace daybreak
