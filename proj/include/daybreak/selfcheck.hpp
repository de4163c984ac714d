#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "daybreak/detector.hpp"
#include "daybreak/kernel.hpp"
#include "daybreak/mcmc.hpp"
#include "daybreak/mixture.hpp"
#include "daybreak/simulate.hpp"

namespace daybreak {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace selfcheck {

// Central finite differences of the covariance function against the analytic
// gradients, over random hyperparameter draws and index pairs. flip_sign is a
// negative-control hook used by the test suite.
inline CheckResult kernel_gradients_vs_fd(int n_draws, std::uint64_t seed, bool flip_sign = false) {
    std::mt19937_64 rng(derive_seed(seed, 0x71));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> one_two(1.0, 2.0);
    std::uniform_int_distribution<int> idx(1, 24);

    double worst = 0.0;
    const double h = 1e-6;
    for (int draw = 0; draw < n_draws; ++draw) {
        KernelParams hp;
        hp.period = 24;
        hp.amplitude = one_two(rng);
        hp.lengthscale = one_two(rng);
        hp.fourier_cos.resize(4);
        hp.fourier_sin.resize(3);
        for (int c = 0; c < 4; ++c) hp.fourier_cos[c] = gauss(rng);
        for (int c = 0; c < 3; ++c) hp.fourier_sin[c] = gauss(rng);
        const double t1 = idx(rng);
        const double t2 = idx(rng);

        auto fd = [&](auto&& setter) {
            KernelParams lo = hp, hi = hp;
            setter(lo, -h);
            setter(hi, h);
            return (nonstationary_kernel(hi, t1, t2) - nonstationary_kernel(lo, t1, t2)) / (2 * h);
        };
        auto check = [&](double analytic, double numeric) {
            if (std::abs(analytic) < 1e-8 && std::abs(numeric) < 1e-6) return;
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            worst = std::max(worst, rel);
        };

        auto grad = kernel_gradients(hp, t1, t2);
        if (flip_sign) grad.d_lengthscale = -grad.d_lengthscale;
        check(grad.d_amplitude, fd([](KernelParams& p, double d) { p.amplitude += d; }));
        check(grad.d_lengthscale, fd([](KernelParams& p, double d) { p.lengthscale += d; }));
        for (int c = 0; c < 4; ++c)
            check(grad.d_cos[c], fd([c](KernelParams& p, double d) { p.fourier_cos[c] += d; }));
        for (int c = 0; c < 3; ++c)
            check(grad.d_sin[c], fd([c](KernelParams& p, double d) { p.fourier_sin[c] += d; }));
    }

    CheckResult res;
    res.name = "kernel-gradients";
    res.pass = worst < 1e-5;
    std::ostringstream ss;
    ss << "max relative error " << worst << " (tolerance 1e-5, " << n_draws << " draws)";
    res.detail = ss.str();
    return res;
}

// Finite differences of the Gaussian M-step objective against its analytic
// gradient on random small instances with missing entries.
inline CheckResult q_gradients_vs_fd(int n_instances, std::uint64_t seed) {
    double worst = 0.0;
    for (int inst = 0; inst < n_instances; ++inst) {
        const std::uint64_t s = derive_seed(seed, 0x72, inst);
        std::mt19937_64 rng(s);
        GeneratorConfig gen;
        gen.k = 2;
        gen.d = 6;
        gen.fourier_order = 2;
        gen.seed = s;
        const MixtureParams truth = random_generator_params(gen);
        std::vector<int> labels(5);
        std::uniform_int_distribution<int> pick(0, 1);
        for (auto& z : labels) z = pick(rng);
        Dataset data = sample_synthetic(truth, labels, derive_seed(s, 1));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (auto& obs : data)
            for (int j = 0; j < obs.dim(); ++j) {
                if (unit(rng) < 0.25) obs.real_missing[static_cast<std::size_t>(j)] = 1;
                if (unit(rng) < 0.25) obs.bin_missing[static_cast<std::size_t>(j)] = 1;
            }

        MixtureParams params = random_init(2, 6, 2, rng);
        const EStepResult estep = e_step(data, params);
        GaussianQ q(data, estep, params);

        auto kernels = params.kernels;
        auto noise = params.noise;
        const Eigen::VectorXd x0 = q.pack(kernels, noise);
        const Eigen::VectorXd analytic = q.gradient(kernels, noise);
        const double h = 1e-5;
        for (int i = 0; i < x0.size(); ++i) {
            Eigen::VectorXd xp = x0, xm = x0;
            xp[i] += h;
            xm[i] -= h;
            auto wk = kernels;
            auto wn = noise;
            q.unpack(xp, wk, wn);
            const double fp = q.value(wk, wn);
            q.unpack(xm, wk, wn);
            const double fm = q.value(wk, wn);
            const double numeric = (fp - fm) / (2 * h);
            if (std::abs(analytic[i]) < 1e-8 && std::abs(numeric) < 1e-6) continue;
            const double rel = std::abs(analytic[i] - numeric) /
                               std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
            worst = std::max(worst, rel);
        }
    }
    CheckResult res;
    res.name = "q-gradients";
    res.pass = worst < 1e-4;
    std::ostringstream ss;
    ss << "max relative error " << worst << " (tolerance 1e-4, " << n_instances << " instances)";
    res.detail = ss.str();
    return res;
}

// Recursive joint under a gridded parameter prior against the exhaustive
// enumeration, on a deterministic-emission instance.
inline CheckResult enumeration_equivalence(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x73));
    const int k = 2;
    const int t_len = 6;
    ThetaGrid grid;
    grid.theta.resize(3, k);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    for (int g = 0; g < 3; ++g) {
        const double p = unit(rng);
        grid.theta(g, 0) = p;
        grid.theta(g, 1) = 1.0 - p;
    }
    grid.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);

    std::uniform_int_distribution<int> pick(0, k - 1);
    std::vector<int> labels(static_cast<std::size_t>(t_len));
    for (auto& z : labels) z = pick(rng);

    Eigen::MatrixXd emission = Eigen::MatrixXd::Identity(k, k);
    HazardConfig cfg{10.0};
    const auto exact = exact_hierarchical_marginal(labels, emission, grid, cfg);
    const auto recursive = gridded_label_log_joint(labels, grid, cfg);

    double worst = 0.0;
    for (std::size_t t = 0; t < exact.size(); ++t) {
        for (std::size_t r = 0; r < exact[t].size(); ++r) {
            const double a = exact[t][r];
            const double b = recursive[t][r];
            if (a == kNegInf && b == kNegInf) continue;
            worst = std::max(worst, std::abs(std::expm1(a - b)));
        }
    }
    CheckResult res;
    res.name = "enumeration-equivalence";
    res.pass = worst < 1e-9;
    std::ostringstream ss;
    ss << "max relative error " << worst << " (tolerance 1e-9, K=2, T=6)";
    res.detail = ss.str();
    return res;
}

// Sampling-based predictive against 2-D midpoint quadrature of the exact
// posterior predictive integral on a two-class instance.
inline CheckResult fpo_quadrature(std::uint64_t seed, int n_samples = 20000) {
    std::mt19937_64 rng(derive_seed(seed, 0x74));
    FpoPriors priors;
    priors.kappa = 2.0;
    priors.nu = 1.0;
    priors.beta = Eigen::VectorXd::Constant(2, 0.5);

    std::uniform_real_distribution<double> unit(0.2, 0.8);
    std::vector<Eigen::VectorXd> partition;
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd z(2);
        z[0] = unit(rng);
        z[1] = 1.0 - z[0];
        partition.push_back(z);
    }
    Eigen::VectorXd z_new(2);
    z_new[0] = 0.55;
    z_new[1] = 0.45;

    const PartitionStats stats = partition_stats(partition, 2);
    auto log_post = [&](double eta, double lam1) {
        Eigen::VectorXd lam(2);
        lam[0] = lam1;
        lam[1] = 1.0 - lam1;
        return log_gamma_pdf(eta, priors.kappa, priors.nu) + log_dirichlet_pdf(lam, priors.beta) +
               detail::partition_loglik(stats, eta, lam);
    };

    const int n_eta = 1200, n_lam = 1200;
    const double eta_max = 120.0;
    double numer = 0.0, denom = 0.0;
    for (int i = 0; i < n_eta; ++i) {
        const double eta = (i + 0.5) * eta_max / n_eta;
        for (int j = 0; j < n_lam; ++j) {
            const double lam1 = (j + 0.5) / n_lam;
            const double w = std::exp(log_post(eta, lam1));
            Eigen::VectorXd lam(2);
            lam[0] = lam1;
            lam[1] = 1.0 - lam1;
            numer += w * std::exp(log_dirichlet_pdf_split(z_new, eta, lam));
            denom += w;
        }
    }
    const double quad = numer / denom;
    const double mcmc = std::exp(
        fpo_log_predictive(stats, z_new, priors, n_samples, 500, derive_seed(seed, 0x75)));
    const double rel = std::abs(mcmc - quad) / quad;

    CheckResult res;
    res.name = "fpo-quadrature";
    res.pass = rel < 0.05;
    std::ostringstream ss;
    ss << "sampler " << mcmc << " vs quadrature " << quad << ", relative error " << rel
       << " (tolerance 0.05)";
    res.detail = ss.str();
    return res;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
    std::vector<CheckResult> results;
    results.push_back(kernel_gradients_vs_fd(50, seed));
    results.push_back(q_gradients_vs_fd(10, seed));
    results.push_back(enumeration_equivalence(seed));
    results.push_back(fpo_quadrature(seed));
    return results;
}

}  // namespace selfcheck
}  // namespace daybreak
