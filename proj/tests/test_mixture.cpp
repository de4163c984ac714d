#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "daybreak/mixture.hpp"
#include "daybreak/selfcheck.hpp"
#include "daybreak/simulate.hpp"
#include "support/reference.hpp"

using namespace daybreak;

namespace {

KernelParams zero_kernel(int d) {
    KernelParams hp;
    hp.period = d;
    hp.fourier_cos = Eigen::VectorXd::Zero(2);
    hp.fourier_sin = Eigen::VectorXd::Zero(1);
    hp.amplitude = 1.0;
    hp.lengthscale = 1.0;
    return hp;
}

MixtureParams diagonal_params(int k, int d, double sd = 1.0) {
    MixtureParams p;
    p.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    p.bern_means = Eigen::MatrixXd::Constant(k, d, 0.5);
    p.kernels.assign(static_cast<std::size_t>(k), zero_kernel(d));
    p.noise.sd = Eigen::VectorXd::Constant(d, sd);
    return p;
}

HeteroObservation observed(const Eigen::VectorXd& real, const Eigen::VectorXi& bin) {
    HeteroObservation obs;
    obs.real_values = real;
    obs.real_missing.assign(static_cast<std::size_t>(real.size()), 0);
    obs.bin_values = bin;
    obs.bin_missing.assign(static_cast<std::size_t>(bin.size()), 0);
    return obs;
}

}  // namespace

TEST_CASE("gaussian marginal log-likelihood basics") {
    auto params = diagonal_params(1, 1);
    HeteroObservation obs = observed(Eigen::VectorXd::Zero(1), Eigen::VectorXi::Zero(1));
    CHECK_THAT(gaussian_marginal_loglik(obs, 0, params),
               Catch::Matchers::WithinAbs(-0.5 * std::log(2.0 * std::numbers::pi), 1e-12));

    obs.real_missing[0] = 1;
    CHECK(gaussian_marginal_loglik(obs, 0, params) == 0.0);
}

TEST_CASE("gaussian marginal with masked entries matches explicit sub-density") {
    GeneratorConfig gen;
    gen.k = 1;
    gen.d = 4;
    gen.fourier_order = 1;
    gen.seed = 99;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Ones(1);

    Dataset data = sample_synthetic(params, {0}, 7);
    auto obs = data[0];
    obs.real_missing[1] = 1;
    obs.real_missing[3] = 1;

    const Eigen::MatrixXd sigma = build_covariance(params.kernels[0], params.noise).values;
    Eigen::VectorXd x_obs(2);
    x_obs << obs.real_values[0], obs.real_values[2];
    Eigen::MatrixXd sub(2, 2);
    sub << sigma(0, 0), sigma(0, 2), sigma(2, 0), sigma(2, 2);
    const double expected = reference::gaussian_logpdf_explicit(x_obs, sub);
    CHECK_THAT(gaussian_marginal_loglik(obs, 0, params), Catch::Matchers::WithinRel(expected, 1e-10));
}

TEST_CASE("bernoulli log-likelihood") {
    auto params = diagonal_params(1, 3);
    HeteroObservation obs = observed(Eigen::VectorXd::Zero(3), Eigen::VectorXi::Ones(3));
    CHECK_THAT(bernoulli_loglik(obs, 0, params),
               Catch::Matchers::WithinAbs(3.0 * std::log(0.5), 1e-13));

    obs.bin_missing.assign(3, 1);
    CHECK(bernoulli_loglik(obs, 0, params) == 0.0);

    params.bern_means.row(0) << 0.2, 0.7, 0.9;
    obs.bin_missing.assign(3, 0);
    obs.bin_values << 1, 0, 1;
    CHECK_THAT(bernoulli_loglik(obs, 0, params),
               Catch::Matchers::WithinAbs(std::log(0.2) + std::log(0.3) + std::log(0.9), 1e-12));
}

TEST_CASE("e_step with one class returns the all-ones column") {
    auto params = diagonal_params(1, 4);
    Dataset data = sample_synthetic(params, {0, 0, 0}, 3);
    const auto res = e_step(data, params);
    CHECK((res.posterior.probs.array() == 1.0).all());
}

TEST_CASE("e_step splits evenly between symmetric classes") {
    MixtureParams params = diagonal_params(2, 2);
    params.bern_means.row(0) << 0.3, 0.7;
    params.bern_means.row(1) << 0.7, 0.3;
    Eigen::VectorXi bin(2);
    bin << 1, 1;
    Dataset data{observed(Eigen::VectorXd::Zero(2), bin)};
    const auto res = e_step(data, params);
    CHECK_THAT(res.posterior.probs(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(res.posterior.probs(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("e_step conditional moments match Schur complements") {
    GeneratorConfig gen;
    gen.k = 2;
    gen.d = 4;
    gen.fourier_order = 1;
    gen.seed = 123;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Constant(2, 0.5);

    Dataset data = sample_synthetic(params, {0}, 11);
    data[0].real_missing[0] = 1;
    data[0].real_missing[2] = 1;

    const auto res = e_step(data, params);
    for (int k = 0; k < 2; ++k) {
        const Eigen::MatrixXd sigma = build_covariance(params.kernels[static_cast<std::size_t>(k)],
                                                       params.noise).values;
        Eigen::VectorXd x_obs(2);
        x_obs << data[0].real_values[1], data[0].real_values[3];
        const auto expected = reference::schur_conditional(sigma, {1, 3}, {0, 2}, x_obs);
        const auto& mom = res.moments[0][static_cast<std::size_t>(k)];
        CHECK((mom.mean - expected.mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((mom.cov - expected.cov).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("missing-data path with empty missing sets is bitwise identical") {
    GeneratorConfig gen;
    gen.k = 2;
    gen.d = 6;
    gen.seed = 21;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Constant(2, 0.5);
    Dataset a = sample_synthetic(params, {0, 1, 0, 1}, 5);
    Dataset b = a;
    for (auto& obs : b) {
        obs.real_missing.assign(static_cast<std::size_t>(obs.dim()), 0);
        obs.bin_missing.assign(static_cast<std::size_t>(obs.dim()), 0);
    }
    const auto ra = e_step(a, params);
    const auto rb = e_step(b, params);
    CHECK(ra.loglik == rb.loglik);
    CHECK((ra.posterior.probs.array() == rb.posterior.probs.array()).all());
}

TEST_CASE("e_step permutation equivariance") {
    GeneratorConfig gen;
    gen.k = 3;
    gen.d = 5;
    gen.seed = 33;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Zero(3);
    params.weights << 0.5, 0.3, 0.2;
    Dataset data = sample_synthetic(params, {0, 1, 2, 1}, 3);

    MixtureParams permuted = params;
    const std::array<int, 3> perm{2, 0, 1};  // permuted class p holds original perm[p]
    for (int p = 0; p < 3; ++p) {
        permuted.weights[p] = params.weights[perm[static_cast<std::size_t>(p)]];
        permuted.bern_means.row(p) = params.bern_means.row(perm[static_cast<std::size_t>(p)]);
        permuted.kernels[static_cast<std::size_t>(p)] =
            params.kernels[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
    }
    const auto base = e_step(data, params);
    const auto swapped = e_step(data, permuted);
    for (int t = 0; t < 4; ++t)
        for (int p = 0; p < 3; ++p)
            CHECK_THAT(swapped.posterior.probs(t, p),
                       Catch::Matchers::WithinAbs(
                           base.posterior.probs(t, perm[static_cast<std::size_t>(p)]), 1e-12));
}

TEST_CASE("e_step rows are normalized and fully-missing rows are uniform") {
    GeneratorConfig gen;
    gen.k = 3;
    gen.d = 6;
    gen.seed = 41;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    Dataset data = sample_synthetic(params, {0, 1, 2, 0, 1}, 9);
    data[2] = HeteroObservation::empty(6);
    const auto res = e_step(data, params);
    for (int t = 0; t < 5; ++t)
        CHECK_THAT(res.posterior.probs.row(t).sum(), Catch::Matchers::WithinAbs(1.0, 1e-10));
    CHECK(res.posterior.fully_missing[2] == 1);
    CHECK_THAT(res.posterior.probs(2, 0), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-14));
}

TEST_CASE("e_step flags degenerate input") {
    auto params = diagonal_params(2, 2);
    Eigen::VectorXd bad(2);
    bad << 1e300, -1e300;
    Dataset data{observed(bad, Eigen::VectorXi::Zero(2))};
    CHECK_THROWS_AS(e_step(data, params), DegenerateResponsibility);
}

TEST_CASE("m_step_bernoulli closed forms") {
    const int d = 3;
    auto params = diagonal_params(1, d);
    Eigen::VectorXi b0(3), b1(3), b2(3);
    b0 << 1, 0, 1;
    b1 << 1, 1, 0;
    b2 << 0, 0, 1;
    Dataset data{observed(Eigen::VectorXd::Zero(d), b0), observed(Eigen::VectorXd::Zero(d), b1),
                 observed(Eigen::VectorXd::Zero(d), b2)};
    const auto res = e_step(data, params);
    const auto upd = m_step_bernoulli(data, res, params);
    CHECK_THAT(upd.bern_means(0, 0), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(upd.bern_means(0, 1), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(upd.bern_means(0, 2), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK_THAT(upd.weights[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("m_step_bernoulli with hard responsibilities gives per-class means") {
    const int d = 2;
    auto params = diagonal_params(2, d);
    Eigen::VectorXi b0(2), b1(2), b2(2), b3(2);
    b0 << 1, 1;
    b1 << 1, 0;
    b2 << 0, 0;
    b3 << 0, 1;
    Dataset data{observed(Eigen::VectorXd::Zero(d), b0), observed(Eigen::VectorXd::Zero(d), b1),
                 observed(Eigen::VectorXd::Zero(d), b2), observed(Eigen::VectorXd::Zero(d), b3)};
    EStepResult res = e_step(data, params);
    res.posterior.probs << 1, 0, 1, 0, 0, 1, 0, 1;  // first two rows class 0
    const auto upd = m_step_bernoulli(data, res, params);
    CHECK_THAT(upd.bern_means(0, 0), Catch::Matchers::WithinAbs(1.0, 2e-6));
    CHECK_THAT(upd.bern_means(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(upd.bern_means(1, 0), Catch::Matchers::WithinAbs(0.0, 2e-6));
    CHECK_THAT(upd.bern_means(1, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(upd.weights[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("m_step_bernoulli with missing entries matches grid-search maximization") {
    // One class, 3 observations, one dimension masked on one observation.
    const int d = 2;
    auto params = diagonal_params(1, d);
    params.bern_means(0, 0) = 0.42;  // previous value used for the masked entry
    params.bern_means(0, 1) = 0.66;
    Eigen::VectorXi b0(2), b1(2), b2(2);
    b0 << 1, 1;
    b1 << 0, 1;
    b2 << 1, 0;
    Dataset data{observed(Eigen::VectorXd::Zero(d), b0), observed(Eigen::VectorXd::Zero(d), b1),
                 observed(Eigen::VectorXd::Zero(d), b2)};
    data[1].bin_missing[0] = 1;

    const auto res = e_step(data, params);
    const auto upd = m_step_bernoulli(data, res, params);

    // Brute-force maximize the expected Bernoulli objective for dimension 0:
    // sum_t [xhat log mu + (1 - xhat) log(1 - mu)], xhat = mu_old when masked.
    const std::vector<double> xhat{1.0, 0.42, 1.0};
    double best_mu = 0.0, best_val = -1e300;
    for (int i = 1; i < 100000; ++i) {
        const double mu = i / 100000.0;
        double val = 0.0;
        for (double x : xhat) val += x * std::log(mu) + (1.0 - x) * std::log(1.0 - mu);
        if (val > best_val) {
            best_val = val;
            best_mu = mu;
        }
    }
    CHECK_THAT(upd.bern_means(0, 0), Catch::Matchers::WithinAbs(best_mu, 1e-4));
}

TEST_CASE("m_step_bernoulli keeps the previous mean for an empty class") {
    const int d = 2;
    auto params = diagonal_params(2, d);
    params.bern_means.row(1) << 0.123, 0.456;
    Eigen::VectorXi b(2);
    b << 1, 0;
    Dataset data{observed(Eigen::VectorXd::Zero(d), b), observed(Eigen::VectorXd::Zero(d), b)};
    EStepResult res = e_step(data, params);
    res.posterior.probs << 1, 0, 1, 0;
    const auto upd = m_step_bernoulli(data, res, params);
    REQUIRE(upd.empty_classes == std::vector<int>{1});
    CHECK(upd.bern_means(1, 0) == 0.123);
    CHECK(upd.bern_means(1, 1) == 0.456);
}

TEST_CASE("gaussian Q reduces to the marginal log-likelihood without missing data") {
    GeneratorConfig gen;
    gen.k = 2;
    gen.d = 5;
    gen.seed = 77;
    MixtureParams params = random_generator_params(gen);
    params.weights = Eigen::VectorXd::Constant(2, 0.5);
    Dataset data = sample_synthetic(params, {0, 0, 0, 0}, 13);

    EStepResult res = e_step(data, params);
    res.posterior.probs.col(0).setOnes();
    res.posterior.probs.col(1).setZero();
    GaussianQ q(data, res, params);

    double direct = 0.0;
    for (const auto& obs : data) direct += gaussian_marginal_loglik(obs, 0, params);
    CHECK_THAT(q.value(params.kernels, params.noise), Catch::Matchers::WithinRel(direct, 1e-10));
}

TEST_CASE("gaussian Q gradients match finite differences") {
    const auto res = selfcheck::q_gradients_vs_fd(3, 1234);
    INFO(res.detail);
    CHECK(res.pass);
}

TEST_CASE("constructed stationary point of Q is a local maximum") {
    // Diagonal scatter: data along scaled basis vectors with a zero envelope
    // makes sigma_j^2 = S_jj / R the exact unconstrained maximizer.
    const int d = 4;
    auto params = diagonal_params(1, d);
    Dataset data;
    Eigen::VectorXd sd_target(d);
    sd_target << 0.7, 1.1, 0.5, 0.9;
    for (int j = 0; j < d; ++j) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
        x[j] = sd_target[j] * std::sqrt(static_cast<double>(d));
        data.push_back(observed(x, Eigen::VectorXi::Zero(d)));
    }
    params.noise.sd = sd_target;
    const auto res = e_step(data, params);
    GaussianQ q(data, res, params);

    const Eigen::VectorXd grad = q.gradient(params.kernels, params.noise);
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-9);

    const double q0 = q.value(params.kernels, params.noise);
    const Eigen::VectorXd x0 = q.pack(params.kernels, params.noise);
    auto kernels = params.kernels;
    auto noise = params.noise;
    for (int i = 0; i < x0.size(); ++i) {
        for (double h : {0.5, -0.5}) {
            Eigen::VectorXd xp = x0;
            xp[i] += h;
            q.unpack(xp, kernels, noise);
            CHECK(q.value(kernels, noise) <= q0 + 1e-9);
        }
    }
}

TEST_CASE("m_step_gaussian never decreases Q and respects the budget") {
    std::mt19937_64 rng(55);
    GeneratorConfig gen;
    gen.k = 2;
    gen.d = 6;
    gen.seed = 555;
    MixtureParams truth = random_generator_params(gen);
    Dataset data = sample_synthetic(truth, {0, 1, 0, 1, 0, 1, 1, 0}, 17);
    MixtureParams params = random_init(2, 6, 2, rng);
    const auto res = e_step(data, params);
    GaussianQ q(data, res, params);
    const double before = q.value(params.kernels, params.noise);
    const auto step = m_step_gaussian(q, params.kernels, params.noise, 10);
    CHECK(step.evals_used <= 10);
    const double after = q.value(step.kernels, step.noise);
    CHECK(after >= before - 1e-9);
}

TEST_CASE("fit recovers a one-class model") {
    GeneratorConfig gen;
    gen.k = 1;
    gen.d = 8;
    gen.seed = 4242;
    MixtureParams truth = random_generator_params(gen);
    std::vector<int> labels(200, 0);
    Dataset data = sample_synthetic(truth, labels, 4243);

    FitConfig cfg;
    cfg.n_init = 2;
    cfg.max_em_iters = 30;
    cfg.epsilon_q = 1e-4;
    cfg.seed = 9;
    const auto result = fit(data, 1, cfg, 2);

    for (int j = 0; j < 8; ++j) {
        const double mu = truth.bern_means(0, j);
        const double se = std::sqrt(mu * (1.0 - mu) / 200.0);
        CHECK(std::abs(result.params.bern_means(0, j) - mu) < 3.5 * se + 1e-3);
    }
}

TEST_CASE("fit trace is monotone up to the tolerance") {
    GeneratorConfig gen;
    gen.k = 2;
    gen.d = 6;
    gen.seed = 31;
    MixtureParams truth = random_generator_params(gen);
    LabelSimConfig lcfg;
    lcfg.t_len = 40;
    lcfg.k = 2;
    lcfg.n_cps = 1;
    lcfg.seed = 31;
    const auto sim = simulate_labels(lcfg);
    Dataset data = sample_synthetic(truth, sim.labels, 32);

    FitConfig cfg;
    cfg.n_init = 2;
    cfg.max_em_iters = 25;
    cfg.epsilon_q = 1e-8;
    cfg.seed = 3;
    const auto result = fit(data, 2, cfg, 2);
    for (std::size_t i = 1; i < result.q_trace.size(); ++i)
        CHECK(result.q_trace[i] >= result.q_trace[i - 1] - 1e-6);
}

TEST_CASE("fit defaults follow the documented protocol") {
    FitConfig cfg;
    CHECK(cfg.n_init == 5);
    CHECK(cfg.max_m_evals == 10);
    CHECK(cfg.epsilon_q == 250.0);
    CHECK(cfg.max_em_iters == 200);
}

TEST_CASE("fit rejects undersized datasets") {
    auto params = diagonal_params(1, 3);
    Dataset data = sample_synthetic(params, {0, 0}, 1);
    FitConfig cfg;
    CHECK_THROWS_AS(fit(data, 3, cfg, 1), DataError);
    CHECK_THROWS_AS(fit(Dataset{}, 1, cfg, 1), EmptyDataset);
}

TEST_CASE("sample_synthetic degenerate limits") {
    auto params = diagonal_params(1, 4, 1e-4);
    std::vector<int> labels(50, 0);
    Dataset data = sample_synthetic(params, labels, 77);
    double max_abs = 0.0;
    for (const auto& obs : data) max_abs = std::max(max_abs, obs.real_values.cwiseAbs().maxCoeff());
    CHECK(max_abs < 1e-2);

    params.bern_means.setConstant(1.0 - kProbClamp);
    data = sample_synthetic(params, labels, 78);
    for (const auto& obs : data) CHECK((obs.bin_values.array() == 1).all());
}

TEST_CASE("sample_synthetic is deterministic and matches its covariance") {
    GeneratorConfig gen;
    gen.k = 1;
    gen.d = 6;
    gen.seed = 3131;
    MixtureParams params = random_generator_params(gen);

    std::vector<int> labels(10, 0);
    const Dataset a = sample_synthetic(params, labels, 5);
    const Dataset b = sample_synthetic(params, labels, 5);
    for (std::size_t t = 0; t < a.size(); ++t)
        CHECK((a[t].real_values.array() == b[t].real_values.array()).all());

    // Monte Carlo moment check against K + D.
    const Eigen::MatrixXd sigma = build_covariance(params.kernels[0], params.noise).values;
    const int n = 10000;
    std::vector<int> many(static_cast<std::size_t>(n), 0);
    const Dataset draws = sample_synthetic(params, many, 6);
    Eigen::MatrixXd emp = Eigen::MatrixXd::Zero(6, 6);
    for (const auto& obs : draws) emp += obs.real_values * obs.real_values.transpose();
    emp /= n;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
            CHECK(std::abs(emp(i, j) - sigma(i, j)) < 5.0 * se);
        }
    }
}

TEST_CASE("map labels flag fully-missing rows") {
    LatentPosterior post;
    post.probs.resize(2, 3);
    post.probs << 0.2, 0.5, 0.3, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    post.fully_missing = {0, 1};
    const auto labels = map_labels(post);
    CHECK(labels[0] == 1);
    CHECK(labels[1] == kMissingLabel);
}
