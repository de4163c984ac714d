#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "daybreak/common.hpp"
#include "daybreak/mcmc.hpp"
#include "daybreak/numerics.hpp"

namespace daybreak {

// Constant per-step change probability 1/tau.
struct HazardConfig {
    double tau = 100.0;

    void validate() const {
        if (tau <= 1.0) throw DataError("hazard: tau must exceed 1");
    }
};

struct Hazard {
    double p_change;
    double p_grow;
};

inline Hazard hazard(long /*r_prev*/, const HazardConfig& cfg) {
    cfg.validate();
    return {1.0 / cfg.tau, 1.0 - 1.0 / cfg.tau};
}

// Posterior predictive of the conjugate categorical run model:
// gamma_k / sum(gamma).
inline double peo_predictive(const Eigen::VectorXd& gamma, int z_star) {
    if ((gamma.array() <= 0.0).any()) throw DataError("peo_predictive: counts must be positive");
    if (z_star < 0 || z_star >= gamma.size()) throw DataError("peo_predictive: class out of range");
    return gamma[z_star] / gamma.sum();
}

// ---------------------------------------------------------------------------
// Run models. A run model owns the sufficient statistics of one run (the last
// r observations) and provides the log predictive density of the next
// observation. fresh_after(i) yields the empty-run model created while
// processing observation index i.
// ---------------------------------------------------------------------------

class DirichletCategoricalRun {
public:
    using Observation = int;  // 0-based class label

    explicit DirichletCategoricalRun(Eigen::VectorXd prior_gamma)
        : gamma_(std::move(prior_gamma)) {}

    double log_predictive(int z, std::uint64_t /*seed*/) const {
        return std::log(peo_predictive(gamma_, z));
    }
    void update(int z) { gamma_[z] += 1.0; }
    DirichletCategoricalRun fresh_after(long /*i*/) const { return *this; }

    const Eigen::VectorXd& gamma() const { return gamma_; }

private:
    Eigen::VectorXd gamma_;
};

// Discrete prior over the categorical parameter: support points theta_g with
// weights w_g. Exact predictive under the gridded posterior; used as the
// recursive twin of the enumeration oracle.
struct ThetaGrid {
    Eigen::MatrixXd theta;    // G x K rows on the simplex
    Eigen::VectorXd weights;  // G, sums to 1

    void validate() const {
        if (theta.rows() != weights.size() || theta.rows() == 0)
            throw DataError("theta grid: shape mismatch");
        if (std::abs(weights.sum() - 1.0) > 1e-8) throw DataError("theta grid: weights must sum to 1");
    }
};

class GriddedCategoricalRun {
public:
    using Observation = int;

    explicit GriddedCategoricalRun(const ThetaGrid* grid)
        : grid_(grid), log_lik_(Eigen::VectorXd::Zero(grid->theta.rows())) {}

    double log_predictive(int z, std::uint64_t /*seed*/) const {
        const auto g = static_cast<int>(grid_->theta.rows());
        std::vector<double> num(static_cast<std::size_t>(g)), den(static_cast<std::size_t>(g));
        for (int i = 0; i < g; ++i) {
            const double base = std::log(grid_->weights[i]) + log_lik_[i];
            den[static_cast<std::size_t>(i)] = base;
            num[static_cast<std::size_t>(i)] = base + std::log(grid_->theta(i, z));
        }
        return log_sum_exp(num) - log_sum_exp(den);
    }
    void update(int z) {
        for (Eigen::Index i = 0; i < log_lik_.size(); ++i)
            log_lik_[i] += std::log(grid_->theta(i, z));
    }
    GriddedCategoricalRun fresh_after(long /*i*/) const { return GriddedCategoricalRun(grid_); }

private:
    const ThetaGrid* grid_;
    Eigen::VectorXd log_lik_;
};

// Shared context for FPO runs: the clamped probability vectors with prefix
// sums of logs, so any run's likelihood statistics are two lookups. Runs then
// only need their start index, which keeps memory linear in T.
struct FpoContext {
    std::vector<Eigen::VectorXd> rows;   // clamped to the simplex interior
    std::vector<std::uint8_t> missing;   // per step
    Eigen::MatrixXd prefix_sum_log;      // (T+1) x K over non-missing rows
    std::vector<int> prefix_count;       // length T+1
    FpoPriors priors;
    int n_samples = 500;
    int burn_in = 200;

    static FpoContext build(const std::vector<Eigen::VectorXd>& raw,
                            const std::vector<std::uint8_t>& missing_flags,
                            const FpoPriors& priors, int n_samples, int burn_in,
                            double interior_eps = 1e-8) {
        priors.validate();
        const int t_len = static_cast<int>(raw.size());
        const int k = static_cast<int>(priors.beta.size());
        FpoContext ctx;
        ctx.priors = priors;
        ctx.n_samples = n_samples;
        ctx.burn_in = burn_in;
        ctx.missing = missing_flags;
        ctx.rows.resize(static_cast<std::size_t>(t_len));
        ctx.prefix_sum_log = Eigen::MatrixXd::Zero(t_len + 1, k);
        ctx.prefix_count.assign(static_cast<std::size_t>(t_len) + 1, 0);
        for (int i = 0; i < t_len; ++i) {
            ctx.prefix_sum_log.row(i + 1) = ctx.prefix_sum_log.row(i);
            ctx.prefix_count[static_cast<std::size_t>(i) + 1] =
                ctx.prefix_count[static_cast<std::size_t>(i)];
            if (missing_flags[static_cast<std::size_t>(i)]) continue;
            if (raw[static_cast<std::size_t>(i)].size() != k)
                throw DataError("fpo: probability row has wrong dimension");
            ctx.rows[static_cast<std::size_t>(i)] =
                clamp_to_simplex_interior(raw[static_cast<std::size_t>(i)], interior_eps);
            ctx.prefix_sum_log.row(i + 1) +=
                ctx.rows[static_cast<std::size_t>(i)].array().log().matrix().transpose();
            ctx.prefix_count[static_cast<std::size_t>(i) + 1] += 1;
        }
        return ctx;
    }

    PartitionStats stats_between(int lo, int hi) const {
        PartitionStats s;
        s.count = prefix_count[static_cast<std::size_t>(hi)] - prefix_count[static_cast<std::size_t>(lo)];
        s.sum_log = (prefix_sum_log.row(hi) - prefix_sum_log.row(lo)).transpose();
        return s;
    }
};

class FpoRun {
public:
    using Observation = int;  // index into the context rows

    FpoRun(const FpoContext* ctx, int start) : ctx_(ctx), start_(start) {}

    double log_predictive(int i, std::uint64_t seed) const {
        const PartitionStats stats = ctx_->stats_between(start_, i);
        return fpo_log_predictive(stats, ctx_->rows[static_cast<std::size_t>(i)], ctx_->priors,
                                  ctx_->n_samples, ctx_->burn_in, seed);
    }
    void update(int /*i*/) {}  // coverage is derived from start and the query index
    FpoRun fresh_after(long i) const { return FpoRun(ctx_, static_cast<int>(i) + 1); }

    int start() const { return start_; }

private:
    const FpoContext* ctx_;
    int start_;
};

// ---------------------------------------------------------------------------
// Run-length recursion. Maintains the unnormalized log joint
// log p(r_t, observations so far) over run lengths 0..t together with one run
// model per run length. A missing observation contributes a unit predictive
// and leaves the sufficient statistics untouched, so the posterior is the
// hazard-propagated previous one.
// ---------------------------------------------------------------------------
template <class Model>
class RunLengthRecursion {
public:
    using Observation = typename Model::Observation;

    RunLengthRecursion(Model prior, HazardConfig cfg, std::uint64_t seed = 0,
                       bool parallel_predictive = false)
        : prior_(std::move(prior)), cfg_(cfg), seed_(seed), parallel_(parallel_predictive) {
        cfg_.validate();
        log_joint_.push_back(0.0);
        models_.push_back(prior_.fresh_after(-1));
    }

    long step_index() const { return step_; }
    const std::vector<double>& log_joint() const { return log_joint_; }

    std::vector<double> posterior_row() const {
        const double norm = log_sum_exp(log_joint_);
        std::vector<double> row(log_joint_.size());
        for (std::size_t r = 0; r < row.size(); ++r) row[r] = std::exp(log_joint_[r] - norm);
        return row;
    }

    int map_run_length() const {
        int best = 0;
        for (std::size_t r = 1; r < log_joint_.size(); ++r)
            if (log_joint_[r] > log_joint_[static_cast<std::size_t>(best)]) best = static_cast<int>(r);
        return best;
    }

    const std::vector<Model>& models() const { return models_; }

    void step(const std::optional<Observation>& obs) {
        const std::size_t n = log_joint_.size();
        const auto hz = hazard(static_cast<long>(n) - 1, cfg_);
        const double log_change = std::log(hz.p_change);
        const double log_grow = std::log(hz.p_grow);

        std::vector<double> lp(n, 0.0);
        if (obs) {
            auto eval = [&](std::size_t r) {
                lp[r] = models_[r].log_predictive(*obs, derive_seed(seed_, static_cast<std::uint64_t>(step_),
                                                                    static_cast<std::uint64_t>(r)));
            };
            if (parallel_) {
                parallel_for(n, eval, 8);
            } else {
                for (std::size_t r = 0; r < n; ++r) eval(r);
            }
        }

        std::vector<double> next(n + 1, kNegInf);
        std::vector<double> change_terms(n);
        for (std::size_t r = 0; r < n; ++r) {
            const double mass = log_joint_[r] + lp[r];
            next[r + 1] = mass + log_grow;
            change_terms[r] = mass + log_change;
        }
        next[0] = log_sum_exp(change_terms);
        if (log_sum_exp(next) == kNegInf)
            throw NumericalUnderflow("run-length recursion: joint vanished at every run length");

        std::vector<Model> next_models;
        next_models.reserve(n + 1);
        next_models.push_back(prior_.fresh_after(step_));
        for (std::size_t r = 0; r < n; ++r) {
            next_models.push_back(models_[r]);
            if (obs) next_models.back().update(*obs);
        }
        log_joint_ = std::move(next);
        models_ = std::move(next_models);
        ++step_;
    }

private:
    Model prior_;
    HazardConfig cfg_;
    std::uint64_t seed_;
    bool parallel_;
    long step_ = 0;
    std::vector<double> log_joint_;
    std::vector<Model> models_;
};

using PeoState = RunLengthRecursion<DirichletCategoricalRun>;

// One recursion step of the conjugate categorical detector.
inline PeoState peo_step(PeoState state, std::optional<int> z_star) {
    state.step(z_star);
    return state;
}

struct CpEvent {
    int time;               // step at which the drop fired (1-based)
    int estimated_cp_time;  // time minus the MAP run length
};

struct CpReport {
    std::vector<int> runlength_map;              // MAP run length per step
    std::vector<std::vector<double>> posterior;  // row t: p(r_{t+1} = 0..t+1 | data)
    std::vector<CpEvent> detected_cps;
};

namespace detail {

// A change point is declared when the MAP run length falls by more than
// max(5, half its previous value); consecutive drops whose estimated change
// times agree within 5 steps refine the same event instead of duplicating it.
inline void scan_for_drops(CpReport& report) {
    for (std::size_t i = 1; i < report.runlength_map.size(); ++i) {
        const int prev = report.runlength_map[i - 1];
        const int cur = report.runlength_map[i];
        const double threshold = std::max(5.0, 0.5 * prev);
        if (cur < prev - threshold) {
            const int time = static_cast<int>(i) + 1;
            const CpEvent ev{time, time - cur};
            if (!report.detected_cps.empty() &&
                std::abs(ev.estimated_cp_time - report.detected_cps.back().estimated_cp_time) <= 5) {
                report.detected_cps.back() = ev;
            } else {
                report.detected_cps.push_back(ev);
            }
        }
    }
}

template <class Model, class ObsAt>
CpReport run_detector(RunLengthRecursion<Model> rec, long t_len, ObsAt&& obs_at) {
    CpReport report;
    report.runlength_map.reserve(static_cast<std::size_t>(t_len));
    report.posterior.reserve(static_cast<std::size_t>(t_len));
    for (long t = 0; t < t_len; ++t) {
        rec.step(obs_at(t));
        report.posterior.push_back(rec.posterior_row());
        report.runlength_map.push_back(rec.map_run_length());
    }
    scan_for_drops(report);
    return report;
}

}  // namespace detail

// Detector over MAP label sequences (entries in 0..K-1 or kMissingLabel).
inline CpReport peo_detect(const std::vector<int>& labels, const Eigen::VectorXd& prior_gamma,
                           const HazardConfig& cfg) {
    const int k = static_cast<int>(prior_gamma.size());
    if ((prior_gamma.array() <= 0.0).any())
        throw DataError("peo_detect: prior counts must be positive");
    for (int z : labels)
        if (z != kMissingLabel && (z < 0 || z >= k))
            throw DataError("peo_detect: label out of range");
    RunLengthRecursion<DirichletCategoricalRun> rec(DirichletCategoricalRun(prior_gamma), cfg);
    return detail::run_detector(std::move(rec), static_cast<long>(labels.size()),
                                [&](long t) -> std::optional<int> {
                                    const int z = labels[static_cast<std::size_t>(t)];
                                    if (z == kMissingLabel) return std::nullopt;
                                    return z;
                                });
}

// Detector over posterior probability rows. Missing rows propagate the
// hazard only. Chains for different run lengths draw from independent seeded
// streams and are reduced in run-length order, so the result does not depend
// on thread count.
inline CpReport fpo_detect(const std::vector<Eigen::VectorXd>& rows,
                           const std::vector<std::uint8_t>& missing, const FpoPriors& priors,
                           const HazardConfig& cfg, int n_samples, std::uint64_t seed,
                           int burn_in = 200) {
    if (rows.size() != missing.size()) throw DataError("fpo_detect: flag length mismatch");
    FpoContext ctx = FpoContext::build(rows, missing, priors, n_samples, burn_in);
    RunLengthRecursion<FpoRun> rec(FpoRun(&ctx, 0), cfg, seed, true);
    return detail::run_detector(std::move(rec), static_cast<long>(rows.size()),
                                [&](long t) -> std::optional<int> {
                                    if (missing[static_cast<std::size_t>(t)]) return std::nullopt;
                                    return static_cast<int>(t);
                                });
}

// Recursive joint over run lengths for a label sequence under a gridded
// parameter prior. Same recursion as peo_detect with the conjugate predictive
// swapped for the exact gridded one; paired with the enumeration below.
inline std::vector<std::vector<double>> gridded_label_log_joint(const std::vector<int>& labels,
                                                                const ThetaGrid& grid,
                                                                const HazardConfig& cfg) {
    grid.validate();
    RunLengthRecursion<GriddedCategoricalRun> rec(GriddedCategoricalRun(&grid), cfg);
    std::vector<std::vector<double>> rows;
    rows.reserve(labels.size());
    for (int z : labels) {
        rec.step(z == kMissingLabel ? std::optional<int>{} : std::optional<int>{z});
        rows.push_back(rec.log_joint());
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Exhaustive reference for the hierarchical marginal on tiny instances.
// Enumerates every latent sequence and every change-point placement; the cost
// is (2K)^T, so instances are size-guarded. Returns log p(r_t, X_{1:t}) for
// every step.
// ---------------------------------------------------------------------------
inline std::vector<std::vector<double>> exact_hierarchical_marginal(
    const std::vector<int>& symbols, const Eigen::MatrixXd& emission, const ThetaGrid& grid,
    const HazardConfig& cfg) {
    grid.validate();
    cfg.validate();
    const int t_len = static_cast<int>(symbols.size());
    const int k = static_cast<int>(grid.theta.cols());
    const int g = static_cast<int>(grid.theta.rows());
    if (t_len == 0) throw EmptyDataset("exact_hierarchical_marginal: no observations");
    if (std::pow(static_cast<double>(k), t_len) > 1e6 ||
        std::pow(2.0 * k, t_len) > 1.7e7)
        throw InstanceTooLarge("exact_hierarchical_marginal: enumeration bound exceeded");
    for (int s : symbols)
        if (s < 0 || s >= emission.rows())
            throw DataError("exact_hierarchical_marginal: symbol out of range");

    const auto hz = hazard(0, cfg);
    const double log_h = std::log(hz.p_change);
    const double log_1mh = std::log(hz.p_grow);

    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(t_len));

    std::vector<int> z(static_cast<std::size_t>(t_len), 0);
    for (int horizon = 1; horizon <= t_len; ++horizon) {
        std::vector<double> joint(static_cast<std::size_t>(horizon) + 1, kNegInf);
        const long n_masks = 1L << horizon;
        const long n_seqs = static_cast<long>(std::llround(std::pow(k, horizon)));
        for (long mask = 0; mask < n_masks; ++mask) {
            // mask bit i set: change point at step i+1 (run length drops to 0).
            double log_prior = 0.0;
            int last_cp = 0;
            for (int i = 0; i < horizon; ++i) {
                if (mask & (1L << i)) {
                    log_prior += log_h;
                    last_cp = i + 1;
                } else {
                    log_prior += log_1mh;
                }
            }
            const int run = horizon - last_cp;
            for (long code = 0; code < n_seqs; ++code) {
                long rest = code;
                double log_obs = 0.0;
                for (int i = 0; i < horizon; ++i) {
                    z[static_cast<std::size_t>(i)] = static_cast<int>(rest % k);
                    rest /= k;
                    log_obs += std::log(emission(symbols[static_cast<std::size_t>(i)],
                                                 z[static_cast<std::size_t>(i)]));
                }
                // segment marginals under the gridded prior
                double log_seg = 0.0;
                int seg_start = 0;
                for (int i = 0; i < horizon; ++i) {
                    const bool closes = (mask & (1L << i)) != 0;
                    if (!closes && i + 1 < horizon) continue;
                    const int seg_end = closes ? i + 1 : horizon;  // exclusive
                    if (seg_end > seg_start) {
                        std::vector<double> terms(static_cast<std::size_t>(g));
                        for (int gi = 0; gi < g; ++gi) {
                            double s = std::log(grid.weights[gi]);
                            for (int j = seg_start; j < seg_end; ++j)
                                s += std::log(grid.theta(gi, z[static_cast<std::size_t>(j)]));
                            terms[static_cast<std::size_t>(gi)] = s;
                        }
                        log_seg += log_sum_exp(terms);
                    }
                    seg_start = seg_end;
                }
                joint[static_cast<std::size_t>(run)] =
                    log_add(joint[static_cast<std::size_t>(run)], log_prior + log_obs + log_seg);
            }
        }
        out.push_back(std::move(joint));
    }
    return out;
}

}  // namespace daybreak
