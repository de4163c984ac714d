#include <catch2/catch_amalgamated.hpp>

#include "daybreak/numerics.hpp"

using namespace daybreak;

TEST_CASE("log_sum_exp handles extreme ranges") {
    std::vector<double> v{-1000.0, -1000.0};
    CHECK_THAT(log_sum_exp(v), Catch::Matchers::WithinAbs(-1000.0 + std::log(2.0), 1e-12));

    std::vector<double> w{0.0, -800.0};
    CHECK_THAT(log_sum_exp(w), Catch::Matchers::WithinAbs(0.0, 1e-12));

    std::vector<double> empty;
    CHECK(log_sum_exp(empty) == kNegInf);

    std::vector<double> inf{kNegInf, kNegInf};
    CHECK(log_sum_exp(inf) == kNegInf);
}

TEST_CASE("log_add agrees with direct evaluation") {
    CHECK_THAT(log_add(std::log(2.0), std::log(3.0)),
               Catch::Matchers::WithinAbs(std::log(5.0), 1e-12));
    CHECK(log_add(kNegInf, -1.5) == -1.5);
}

TEST_CASE("dirichlet pdf normalizes on a grid (K=2)") {
    Eigen::VectorXd alpha(2);
    alpha << 2.5, 1.5;
    const int n = 20000;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(2);
        x[0] = (i + 0.5) / n;
        x[1] = 1.0 - x[0];
        total += std::exp(log_dirichlet_pdf(x, alpha)) / n;
    }
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-3));
}

TEST_CASE("split dirichlet parametrization matches the plain one") {
    Eigen::VectorXd mean(3);
    mean << 0.2, 0.3, 0.5;
    Eigen::VectorXd x(3);
    x << 0.1, 0.6, 0.3;
    const double c = 7.0;
    CHECK_THAT(log_dirichlet_pdf_split(x, c, mean),
               Catch::Matchers::WithinAbs(log_dirichlet_pdf(x, (c * mean.array()).matrix()), 1e-12));
}

TEST_CASE("simplex clamp keeps rows normalized") {
    Eigen::VectorXd one_hot(3);
    one_hot << 1.0, 0.0, 0.0;
    const Eigen::VectorXd q = clamp_to_simplex_interior(one_hot);
    CHECK_THAT(q.sum(), Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK(q.minCoeff() > 0.0);
}

TEST_CASE("softmax with pinned reference lands on the simplex") {
    Eigen::VectorXd v(2);
    v << 0.3, -1.2;
    const Eigen::VectorXd p = softmax_with_reference(v);
    REQUIRE(p.size() == 3);
    CHECK_THAT(p.sum(), Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK(p.minCoeff() > 0.0);
}
