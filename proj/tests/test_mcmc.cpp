#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "daybreak/mcmc.hpp"
#include "daybreak/numerics.hpp"
#include "daybreak/selfcheck.hpp"

using namespace daybreak;

namespace {

FpoPriors uniform_priors(int k, double kappa = 2.0, double nu = 1.0) {
    FpoPriors priors;
    priors.kappa = kappa;
    priors.nu = nu;
    priors.beta = Eigen::VectorXd::Constant(k, 1.0 / k);
    return priors;
}

}  // namespace

TEST_CASE("empty partition recovers the prior moments") {
    const auto priors = uniform_priors(3, 2.0, 1.5);
    const auto stats = PartitionStats::empty(3);
    const auto samples = gibbs_within_mh(stats, priors, 20000, 1000, 99);

    // Concentration updates use an independence proposal from the prior, so
    // with no likelihood every proposal is accepted and draws are iid.
    double mean = 0.0, var = 0.0;
    for (const auto& s : samples) mean += s.concentration;
    mean /= static_cast<double>(samples.size());
    for (const auto& s : samples) var += (s.concentration - mean) * (s.concentration - mean);
    var /= static_cast<double>(samples.size());
    const double true_mean = priors.kappa / priors.nu;
    const double true_var = priors.kappa / (priors.nu * priors.nu);
    const double se_mean = std::sqrt(true_var / static_cast<double>(samples.size()));
    CHECK(std::abs(mean - true_mean) < 4.0 * se_mean);
    CHECK_THAT(var, Catch::Matchers::WithinRel(true_var, 0.1));

    // The mean vector targets Dir(beta); its marginal means are beta.
    Eigen::VectorXd lam_mean = Eigen::VectorXd::Zero(3);
    for (const auto& s : samples) lam_mean += s.mean;
    lam_mean /= static_cast<double>(samples.size());
    for (int k = 0; k < 3; ++k) CHECK(std::abs(lam_mean[k] - 1.0 / 3.0) < 0.03);
}

TEST_CASE("acceptance rates sit inside the working band after tuning") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.1, 0.8);
    PartitionStats stats = PartitionStats::empty(3);
    for (int i = 0; i < 8; ++i) {
        Eigen::VectorXd z(3);
        z << unit(rng), unit(rng), unit(rng);
        z /= z.sum();
        stats.add(z);
    }
    McmcDiagnostics diag;
    gibbs_within_mh(stats, uniform_priors(3), 4000, 1500, 31, &diag);
    CHECK(diag.mean_accept > 0.05);
    CHECK(diag.mean_accept < 0.95);
    CHECK(diag.concentration_accept > 0.05);
    CHECK(diag.concentration_accept < 0.95);
}

TEST_CASE("relabeling classes permutes the posterior moments") {
    std::vector<Eigen::VectorXd> partition;
    Eigen::VectorXd z1(3), z2(3), z3(3);
    z1 << 0.7, 0.2, 0.1;
    z2 << 0.6, 0.3, 0.1;
    z3 << 0.65, 0.2, 0.15;
    partition = {z1, z2, z3};

    FpoPriors priors;
    priors.kappa = 2.0;
    priors.nu = 1.0;
    priors.beta.resize(3);
    priors.beta << 0.5, 0.3, 0.2;

    const std::array<int, 3> perm{1, 2, 0};  // permuted slot p holds original perm[p]
    std::vector<Eigen::VectorXd> permuted_partition;
    for (const auto& z : partition) {
        Eigen::VectorXd zp(3);
        for (int p = 0; p < 3; ++p) zp[p] = z[perm[static_cast<std::size_t>(p)]];
        permuted_partition.push_back(zp);
    }
    FpoPriors permuted_priors = priors;
    for (int p = 0; p < 3; ++p)
        permuted_priors.beta[p] = priors.beta[perm[static_cast<std::size_t>(p)]];

    const auto base = gibbs_within_mh(partition_stats(partition, 3), priors, 30000, 2000, 7);
    const auto swapped =
        gibbs_within_mh(partition_stats(permuted_partition, 3), permuted_priors, 30000, 2000, 8);

    Eigen::VectorXd mean_base = Eigen::VectorXd::Zero(3), mean_swapped = Eigen::VectorXd::Zero(3);
    for (const auto& s : base) mean_base += s.mean;
    for (const auto& s : swapped) mean_swapped += s.mean;
    mean_base /= static_cast<double>(base.size());
    mean_swapped /= static_cast<double>(swapped.size());
    for (int p = 0; p < 3; ++p)
        CHECK(std::abs(mean_swapped[p] - mean_base[perm[static_cast<std::size_t>(p)]]) < 0.02);
}

TEST_CASE("prior predictive matches direct Monte Carlo from the priors") {
    const auto priors = uniform_priors(2, 2.0, 1.0);
    Eigen::VectorXd z_new(2);
    z_new << 0.6, 0.4;

    const double chain_est = std::exp(
        fpo_log_predictive(PartitionStats::empty(2), z_new, priors, 60000, 2000, 12));

    std::mt19937_64 rng(13);
    double direct = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double eta = sample_gamma(priors.kappa, priors.nu, rng);
        const Eigen::VectorXd lam = sample_dirichlet(priors.beta, rng);
        direct += std::exp(log_dirichlet_pdf_split(z_new, eta, lam)) / n;
    }
    CHECK_THAT(chain_est, Catch::Matchers::WithinRel(direct, 0.05));
}

TEST_CASE("identical seeds give identical predictive estimates") {
    std::vector<Eigen::VectorXd> partition;
    Eigen::VectorXd z(2);
    z << 0.3, 0.7;
    partition = {z, z};
    const auto priors = uniform_priors(2);
    const double a = fpo_predictive(partition, z, priors, 500, 77);
    const double b = fpo_predictive(partition, z, priors, 500, 77);
    CHECK(a == b);
    const double c = fpo_predictive(partition, z, priors, 500, 78);
    CHECK(a != c);
}

TEST_CASE("sampler matches quadrature on a two-class partition") {
    const auto res = selfcheck::fpo_quadrature(2025, 20000);
    INFO(res.detail);
    CHECK(res.pass);
}

TEST_CASE("sampler estimate tightens as the budget grows") {
    const auto priors = uniform_priors(2, 2.0, 1.0);
    std::vector<Eigen::VectorXd> partition;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unit(0.3, 0.7);
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd z(2);
        z[0] = unit(rng);
        z[1] = 1.0 - z[0];
        partition.push_back(z);
    }
    Eigen::VectorXd z_new(2);
    z_new << 0.55, 0.45;
    const auto stats = partition_stats(partition, 2);

    auto spread = [&](int s) {
        std::vector<double> est;
        for (int rep = 0; rep < 8; ++rep)
            est.push_back(std::exp(fpo_log_predictive(stats, z_new, priors, s, 300,
                                                      derive_seed(91, s, rep))));
        double mean = 0.0;
        for (double e : est) mean += e;
        mean /= static_cast<double>(est.size());
        double var = 0.0;
        for (double e : est) var += (e - mean) * (e - mean);
        return std::sqrt(var / static_cast<double>(est.size()));
    };
    // Standard error should shrink roughly like 1/sqrt(S); allow slack for
    // chain autocorrelation.
    const double sd_small = spread(250);
    const double sd_large = spread(4000);
    CHECK(sd_large < sd_small);
}

TEST_CASE("a frozen proposal against a razor target raises SamplerStuck") {
    FpoPriors priors = uniform_priors(2, 1.0, 1.0);
    PartitionStats stats = PartitionStats::empty(2);
    stats.count = 100000000;
    Eigen::VectorXd z(2);
    z << 0.9, 0.1;
    stats.sum_log = stats.count * z.array().log().matrix();
    CHECK_THROWS_AS(gibbs_within_mh(stats, priors, 30000, 0, 4), SamplerStuck);
}

TEST_CASE("priors are validated") {
    FpoPriors bad;
    bad.kappa = -1.0;
    bad.nu = 1.0;
    bad.beta = Eigen::VectorXd::Constant(2, 0.5);
    CHECK_THROWS_AS(bad.validate(), DataError);

    FpoPriors off_simplex = uniform_priors(2);
    off_simplex.beta *= 2.0;
    CHECK_THROWS_AS(off_simplex.validate(), DataError);
}
