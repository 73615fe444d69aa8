#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tmhmc/linalg.hpp"

namespace tmhmc::models {

inline constexpr double log_2pi = 1.837877066409345483560659472811;

// Gaussian summary (location h, tridiagonal precision G) of a latent block.
template <class T>
struct GaussSummary {
    std::vector<T> h;
    SymTridiag<T> g;
};

template <class T>
T normal_logpdf(const T& x, const T& mean, const T& var) {
    using std::log;
    const T d = x - mean;
    return -0.5 * (log_2pi + log(var)) - d * d / (2.0 * var);
}

// Prior building blocks on the unconstrained scale. Transform log-Jacobians
// are folded in; normalizing constants are dropped (consistently everywhere).

// (delta+1)/2 ~ Beta(a, b) with delta = tanh(t).
template <class T>
T beta_tanh_logprior(double a, double b, const T& t) {
    using std::log;
    using std::tanh;
    const T delta = tanh(t);
    return (a - 1.0) * log(0.5 * (1.0 + delta)) + (b - 1.0) * log(0.5 * (1.0 - delta)) +
           log(0.5 * (1.0 - delta * delta));
}

// exp(t) ~ scaled inverse chi^2, i.e. p0*s0 / chisq(p0).
template <class T>
T scaled_inv_chisq_logprior(double p0, double s0, const T& t) {
    using std::exp;
    return -0.5 * p0 * t - 0.5 * p0 * s0 / exp(t);
}

// Stationary AR(1) block: x_1 ~ N(mean, var/(1-delta^2)),
// x_t = mean + delta (x_{t-1} - mean) + sqrt(var) eta_t. Returns the exact
// joint Gaussian summary (mean vector, tridiagonal precision).
template <class T>
void append_ar1_summary(GaussSummary<T>& s, const T& mean, const T& delta, const T& var,
                        std::size_t n) {
    const T ip = 1.0 / var;
    const T mid = (1.0 + delta * delta) * ip;
    const T off = -delta * ip;
    const std::size_t base = s.h.size();
    s.h.resize(base + n, mean);
    if (base > 0) s.g.offdiag.push_back(T(0.0));  // independent blocks
    if (n == 1) {
        s.g.diag.push_back((1.0 - delta * delta) * ip);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        s.g.diag.push_back(i == 0 || i + 1 == n ? ip : mid);
        if (i + 1 < n) s.g.offdiag.push_back(off);
    }
}

template <class T>
GaussSummary<T> ar1_summary(const T& mean, const T& delta, const T& var, std::size_t n) {
    GaussSummary<T> s;
    append_ar1_summary(s, mean, delta, var, n);
    return s;
}

// log p(x | theta) accumulated through the model's sequential recursion.
template <class M, class P, class T>
T log_state_density(const M& m, const P& p, std::span<const T> x, const typename M::Data& d) {
    T acc(0.0);
    T mean(0.0), var(1.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (m.segment_start(j, d))
            m.state_init(p, j, d, mean, var);
        else
            m.state_trans(p, j, x[j - 1], d, mean, var);
        acc += normal_logpdf(x[j], mean, var);
    }
    return acc;
}

// log p(y | x, theta).
template <class M, class P, class T>
T log_measurement_density(const M& m, const P& p, std::span<const T> x,
                          const typename M::Data& d) {
    T acc(0.0);
    for (std::size_t j = 0; j < x.size(); ++j) acc += m.log_meas(p, j, x[j], d);
    return acc;
}

// log p(y|x,theta) + log p(x|theta) + log p(theta*), the full unnormalized
// posterior over (theta*, x).
template <class M, class T>
T log_joint(const M& m, std::span<const T> ts, std::span<const T> x, const typename M::Data& d) {
    const auto p = m.params(ts);
    return log_state_density(m, p, x, d) + log_measurement_density(m, p, x, d) + m.log_prior(p);
}

// grad_x log[p(x|theta) p(y|x,theta)] for models whose state prior is the
// Gaussian captured by prior_summary (the prior part is -G (x - h)).
template <class M, class P, class T>
std::vector<T> gauss_joint_grad(const M& m, const P& p, const GaussSummary<T>& prior,
                                std::span<const T> x, const typename M::Data& d) {
    const std::size_t n = x.size();
    std::vector<T> centered(n);
    for (std::size_t j = 0; j < n; ++j) centered[j] = x[j] - prior.h[j];
    std::vector<T> grad = tridiag_matvec(prior.g, std::span<const T>(centered));
    for (std::size_t j = 0; j < n; ++j) grad[j] = m.meas_grad(p, j, x[j], d) - grad[j];
    return grad;
}

}  // namespace tmhmc::models
