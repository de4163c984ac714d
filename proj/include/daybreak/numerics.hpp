#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "daybreak/common.hpp"

namespace daybreak {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> values) {
    double max_val = kNegInf;
    for (double v : values) max_val = std::max(max_val, v);
    if (max_val == kNegInf) return kNegInf;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - max_val);
    return max_val + std::log(sum);
}

inline double log_sum_exp(const std::vector<double>& values) {
    return log_sum_exp(std::span<const double>(values));
}

inline double log_sum_exp(const Eigen::VectorXd& values) {
    return log_sum_exp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

// log Ga(x | shape, rate)
inline double log_gamma_pdf(double x, double shape, double rate) {
    if (x <= 0.0) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

// log Dir(x | alpha) on the open simplex
inline double log_dirichlet_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& alpha) {
    double lp = std::lgamma(alpha.sum());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        lp -= std::lgamma(alpha[k]);
        lp += (alpha[k] - 1.0) * std::log(x[k]);
    }
    return lp;
}

// log Dir(x | concentration * mean): natural parameter split used by the
// FPO observation model. mean lies on the simplex, concentration > 0.
inline double log_dirichlet_pdf_split(const Eigen::VectorXd& x, double concentration,
                                      const Eigen::VectorXd& mean) {
    double lp = std::lgamma(concentration);
    for (Eigen::Index k = 0; k < mean.size(); ++k) {
        const double a = concentration * mean[k];
        lp -= std::lgamma(a);
        lp += (a - 1.0) * std::log(x[k]);
    }
    return lp;
}

inline Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, std::mt19937_64& rng) {
    Eigen::VectorXd out(alpha.size());
    double total = 0.0;
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        std::gamma_distribution<double> g(alpha[k], 1.0);
        out[k] = g(rng);
        total += out[k];
    }
    if (total <= 0.0) {
        out.setConstant(1.0 / static_cast<double>(alpha.size()));
        return out;
    }
    return out / total;
}

inline double sample_gamma(double shape, double rate, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(rng);
}

// Clamps a probability vector to the open simplex and renormalizes.
// Dirichlet densities are undefined on the boundary; upstream posteriors can
// be exactly one-hot.
inline Eigen::VectorXd clamp_to_simplex_interior(const Eigen::VectorXd& p, double eps = 1e-8) {
    Eigen::VectorXd q = p.cwiseMax(eps);
    return q / q.sum();
}

inline Eigen::VectorXd softmax_with_reference(const Eigen::VectorXd& v) {
    // v has K-1 free coordinates; the last component is pinned at 0.
    const Eigen::Index k = v.size() + 1;
    Eigen::VectorXd full(k);
    full.head(k - 1) = v;
    full[k - 1] = 0.0;
    const double m = full.maxCoeff();
    Eigen::VectorXd e = (full.array() - m).exp();
    return e / e.sum();
}

}  // namespace daybreak
