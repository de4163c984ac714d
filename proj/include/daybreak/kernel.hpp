#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "daybreak/common.hpp"

namespace daybreak {

// Non-stationary periodic covariance for one latent class:
//
//   g(t,t') = s(t) s(t') gs(t - t')
//   gs(d)   = amplitude^2 * exp(-2 sin^2(pi d / period) / lengthscale^2)
//   s(t)    = F(t)^2,   F(t) = a0/2 + sum_c [ a_c cos(2 pi c t / period)
//                                           + b_c sin(2 pi c t / period) ]
//
// F is a Fourier series of order C <= period; squaring it keeps the
// hour-dependent envelope nonnegative while allowing multimodality over the
// period. Gradients below are derived from this product form by the chain
// rule, with dF/da_0 = 1/2, dF/da_c = cos(2 pi c t / period),
// dF/db_c = sin(2 pi c t / period), and d gs/d amplitude = 2 gs / amplitude.
struct KernelParams {
    Eigen::VectorXd fourier_cos;  // length C+1, index 0 is the constant term
    Eigen::VectorXd fourier_sin;  // length C
    double amplitude = 1.0;       // stationary amplitude, > 0
    double lengthscale = 1.0;     // > 0
    int period = 24;              // samples per period

    int order() const { return static_cast<int>(fourier_sin.size()); }

    void validate() const {
        if (amplitude <= 0.0 || lengthscale <= 0.0)
            throw DataError("kernel: amplitude and lengthscale must be positive");
        if (period < 1) throw DataError("kernel: period must be >= 1");
        if (fourier_cos.size() != fourier_sin.size() + 1)
            throw DataError("kernel: cosine coefficients must have one more entry than sine");
        if (order() > period) throw DataError("kernel: Fourier order must not exceed period");
    }
};

// Per-slot observation noise standard deviations (heteroscedastic diagonal).
struct NoiseModel {
    Eigen::VectorXd sd;

    void validate() const {
        if ((sd.array() <= 0.0).any()) throw DataError("noise: all entries must be positive");
    }
};

// Fourier series value F(t); the envelope is its square.
inline double fourier_series(const KernelParams& hp, double t) {
    const double w = 2.0 * std::numbers::pi / static_cast<double>(hp.period);
    double f = 0.5 * hp.fourier_cos[0];
    for (int c = 1; c <= hp.order(); ++c) {
        f += hp.fourier_cos[c] * std::cos(w * c * t);
        f += hp.fourier_sin[c - 1] * std::sin(w * c * t);
    }
    return f;
}

inline double fourier_envelope(const KernelParams& hp, double t) {
    const double f = fourier_series(hp, t);
    return f * f;
}

// Periodic exponential kernel gs(t - t'); equals amplitude^2 on the diagonal
// and is periodic in the lag with the configured period.
inline double stationary_periodic(const KernelParams& hp, double t, double t2) {
    const double s = std::sin(std::numbers::pi * std::abs(t - t2) / static_cast<double>(hp.period));
    return hp.amplitude * hp.amplitude *
           std::exp(-2.0 * s * s / (hp.lengthscale * hp.lengthscale));
}

inline double nonstationary_kernel(const KernelParams& hp, double t, double t2) {
    return fourier_envelope(hp, t) * fourier_envelope(hp, t2) * stationary_periodic(hp, t, t2);
}

struct KernelGradient {
    double d_amplitude = 0.0;
    double d_lengthscale = 0.0;
    Eigen::VectorXd d_cos;  // length C+1
    Eigen::VectorXd d_sin;  // length C
};

// Analytic partials of g(t,t') w.r.t. every kernel hyperparameter.
inline KernelGradient kernel_gradients(const KernelParams& hp, double t, double t2) {
    const int order = hp.order();
    const double w = 2.0 * std::numbers::pi / static_cast<double>(hp.period);
    const double f1 = fourier_series(hp, t);
    const double f2 = fourier_series(hp, t2);
    const double s1 = f1 * f1;
    const double s2 = f2 * f2;
    const double sin_lag = std::sin(std::numbers::pi * (t - t2) / static_cast<double>(hp.period));
    const double expo = std::exp(-2.0 * sin_lag * sin_lag / (hp.lengthscale * hp.lengthscale));
    const double gs = hp.amplitude * hp.amplitude * expo;

    KernelGradient grad;
    grad.d_cos = Eigen::VectorXd::Zero(order + 1);
    grad.d_sin = Eigen::VectorXd::Zero(order);

    grad.d_amplitude = 2.0 * hp.amplitude * expo * s1 * s2;
    grad.d_lengthscale = s1 * s2 * gs * 4.0 * sin_lag * sin_lag /
                         (hp.lengthscale * hp.lengthscale * hp.lengthscale);

    // d/d coef of s(t)s(t') = [dF(t)/dc * 2 f1 * s2 + dF(t')/dc * 2 f2 * s1]
    grad.d_cos[0] = gs * (f1 * s2 + f2 * s1);
    for (int c = 1; c <= order; ++c) {
        const double c1 = std::cos(w * c * t);
        const double c2 = std::cos(w * c * t2);
        const double sn1 = std::sin(w * c * t);
        const double sn2 = std::sin(w * c * t2);
        grad.d_cos[c] = 2.0 * gs * (f1 * c1 * s2 + f2 * c2 * s1);
        grad.d_sin[c - 1] = 2.0 * gs * (f1 * sn1 * s2 + f2 * sn2 * s1);
    }
    return grad;
}

// Class covariance over one period plus heteroscedastic noise, with its
// Cholesky factor cached for downstream solves.
struct CovMatrix {
    Eigen::MatrixXd values;
    Eigen::MatrixXd cholesky_factor;  // lower triangular

    double log_det() const { return 2.0 * cholesky_factor.diagonal().array().log().sum(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        Eigen::VectorXd y = cholesky_factor.triangularView<Eigen::Lower>().solve(rhs);
        return cholesky_factor.transpose().triangularView<Eigen::Upper>().solve(y);
    }
};

inline Eigen::MatrixXd kernel_gram(const KernelParams& hp) {
    const int d = hp.period;
    Eigen::MatrixXd k(d, d);
    std::vector<double> env(d);
    for (int i = 0; i < d; ++i) env[i] = fourier_envelope(hp, i + 1.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = env[i] * env[j] * stationary_periodic(hp, i + 1.0, j + 1.0);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

// Sigma = K + diag(sd^2). If the factorization fails, one jitter of
// 1e-8 * trace(Sigma)/d is added to the diagonal; a second failure raises
// NotPositiveDefinite to flag degenerate hyperparameters.
inline CovMatrix build_covariance(const KernelParams& hp, const NoiseModel& noise) {
    if (noise.sd.size() != hp.period)
        throw DataError("build_covariance: noise vector length must equal kernel period");
    CovMatrix cov;
    cov.values = kernel_gram(hp);
    cov.values.diagonal() += noise.sd.array().square().matrix();

    Eigen::LLT<Eigen::MatrixXd> llt(cov.values);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-8 * cov.values.trace() / static_cast<double>(hp.period);
        Eigen::MatrixXd bumped = cov.values;
        bumped.diagonal().array() += jitter;
        llt.compute(bumped);
        if (llt.info() != Eigen::Success)
            throw NotPositiveDefinite("build_covariance: Cholesky failed after jitter escalation");
        cov.values = bumped;
    }
    cov.cholesky_factor = llt.matrixL();
    return cov;
}

}  // namespace daybreak
