#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "tmhmc/errors.hpp"
#include "tmhmc/linalg.hpp"
#include "tmhmc/rng.hpp"

namespace tmhmc::eis {

// Common random numbers: a fixed block of standard normals, `paths` rows of
// length `dim`, regenerated bit-identically from the seed. Keeping them fixed
// for a whole run makes the fitted importance density a deterministic, smooth
// function of the parameters.
struct CrnSet {
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    std::size_t dim = 0;
    std::vector<double> z;

    static CrnSet generate(std::uint64_t seed, std::size_t paths, std::size_t dim) {
        CrnSet c;
        c.seed = seed;
        c.paths = paths;
        c.dim = dim;
        c.z.resize(paths * dim);
        Rng rng(seed);
        for (double& v : c.z) v = rng.normal();
        return c;
    }

    double at(std::size_t path, std::size_t j) const { return z[path * dim + j]; }
    bool empty() const { return z.empty(); }
};

// Per-index coefficients of the Gaussian kernel adjustment
// xi_j(x) = exp(lin_j x + quad_j x^2) multiplying the state transition
// density. `intercept` holds the regression intercepts (diagnostic only) and
// `fit_r2` the per-index R^2 of the final fitting sweep.
template <class T>
struct EisParams {
    std::vector<T> lin, quad, intercept;
    std::vector<double> fit_r2;

    std::size_t dim() const { return lin.size(); }
};

// Smallest admissible combined precision 1/s^2 - 2*quad of the sequential
// sampler. During fitting the precision is clamped here to keep the sweep
// alive; during target evaluation falling below it is an error (the proposal
// is rejected).
inline constexpr double precision_floor = 1e-8;

namespace detail {

template <bool Clamp, class T>
T combined_precision(const T& prior_var, const T& quad) {
    T prec = 1.0 / prior_var - 2.0 * quad;
    if (!(scalar_value(prec) > precision_floor)) {
        if constexpr (Clamp)
            prec = T(precision_floor);
        else
            throw VarianceCollapse("eis sampler precision collapsed");
    }
    return prec;
}

// log of the integrating factor chi_j = int f_j(x|prev) xi_j(x) dx given the
// conditional prior moments of x_j; closed form because both factors are
// Gaussian kernels. Equals 0 when lin = quad = 0.
template <bool Clamp, class T>
T log_integrating_factor(const T& prior_mean, const T& prior_var, const T& lin, const T& quad) {
    using std::log;
    const T prec = combined_precision<Clamp>(prior_var, quad);
    const T mean = (prior_mean / prior_var + lin) / prec;
    return 0.5 * mean * mean * prec - 0.5 * prior_mean * prior_mean / prior_var -
           0.5 * log(prior_var * prec);
}

// One pass of the sequential sampler x_j = mean_j + u_j / sqrt(prec_j). Any
// of the optional accumulators may be null: logjac collects the
// log-determinant of u -> x, logweight the log importance weight
// log g_j + log chi_j - log xi_j summed over j.
template <bool Clamp, class Model, class P, class T>
void forward_path(const Model& m, const P& p, const EisParams<T>& a, std::span<const T> u,
                  const typename Model::Data& d, std::vector<T>& x,
                  std::type_identity_t<T>* logjac, std::type_identity_t<T>* logweight) {
    using std::log;
    using std::sqrt;
    const std::size_t n = a.dim();
    x.resize(n);
    T prior_mean(0.0), prior_var(1.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (m.segment_start(j, d))
            m.state_init(p, j, d, prior_mean, prior_var);
        else
            m.state_trans(p, j, x[j - 1], d, prior_mean, prior_var);
        const T prec = combined_precision<Clamp>(prior_var, a.quad[j]);
        const T mean = (prior_mean / prior_var + a.lin[j]) / prec;
        x[j] = mean + u[j] / sqrt(prec);
        if (logjac) *logjac -= 0.5 * log(prec);
        if (logweight) {
            *logweight += 0.5 * mean * mean * prec -
                          0.5 * prior_mean * prior_mean / prior_var - 0.5 * log(prior_var * prec);
            *logweight += m.log_meas(p, j, x[j], d) - a.lin[j] * x[j] - a.quad[j] * x[j] * x[j];
        }
    }
}

}  // namespace detail

// Kernel coefficients matching the model's local Gaussian summary of the
// measurement density: exp(lin x + quad x^2) proportional to
// N(x | h_j, 1/G_jj) up to an x-free factor.
template <class Model, class T>
EisParams<T> initial_kernels(const Model& m, const typename Model::Data& d,
                             const typename Model::template Params<T>& p) {
    const auto summary = m.measurement_summary(p, d);
    const std::size_t n = summary.h.size();
    EisParams<T> a;
    a.lin.resize(n);
    a.quad.resize(n);
    a.intercept.assign(n, T(0.0));
    for (std::size_t j = 0; j < n; ++j) {
        a.lin[j] = summary.g.diag[j] * summary.h[j];
        a.quad[j] = -0.5 * summary.g.diag[j];
    }
    return a;
}

// Fits the kernel coefficients by a fixed number of sweeps. Each sweep
// forward-samples `paths` trajectories from the current sampler using the
// common random numbers, then walks backwards regressing
// log g_j(x_j) + log chi_{j+1}(x_j) on [1, x_j, x_j^2]; the slope
// coefficients become the new kernels, so downstream indices always use the
// current sweep's values. The sweep count is fixed (never adaptive) so the
// result is a smooth function of the parameters at fixed CRNs.
template <class Model, class T>
EisParams<T> eis_fit(const Model& m, std::span<const T> theta_star,
                     const typename Model::Data& d, const CrnSet& crn, std::size_t sweeps,
                     std::size_t paths) {
    if (sweeps < 1) throw DomainError("eis fit requires at least one sweep");
    if (paths < 4) throw DomainError("eis fit requires at least four sample paths");
    const auto p = m.params(theta_star);
    const std::size_t n = m.latent_dim(d);
    if (crn.paths < paths || crn.dim != n)
        throw DomainError("common random number block does not match the fit request");

    EisParams<T> a = initial_kernels<Model, T>(m, d, p);
    a.fit_r2.assign(n, 1.0);

    std::vector<std::vector<T>> xs(paths);
    std::vector<T> u(n);
    std::vector<T> prior_mean(paths), prior_var(paths);
    std::vector<std::vector<T>> design;
    std::vector<T> response(paths);
    for (std::size_t sweep = 1; sweep <= sweeps; ++sweep) {
        for (std::size_t i = 0; i < paths; ++i) {
            for (std::size_t j = 0; j < n; ++j) u[j] = T(crn.at(i, j));
            detail::forward_path<true>(m, p, a, std::span<const T>(u), d, xs[i], nullptr,
                                       nullptr);
        }
        for (std::size_t j = n; j-- > 0;) {
            const bool chained = j + 1 < n && !m.segment_start(j + 1, d);
            for (std::size_t i = 0; i < paths; ++i) {
                response[i] = m.log_meas(p, j, xs[i][j], d);
                if (chained) {
                    T mean(0.0), var(1.0);
                    m.state_trans(p, j + 1, xs[i][j], d, mean, var);
                    response[i] += detail::log_integrating_factor<true>(mean, var, a.lin[j + 1],
                                                                        a.quad[j + 1]);
                }
            }
            design.assign(3, std::vector<T>(paths));
            for (std::size_t i = 0; i < paths; ++i) {
                design[0][i] = T(1.0);
                design[1][i] = xs[i][j];
                design[2][i] = xs[i][j] * xs[i][j];
            }
            std::vector<T> rhs = response;
            const std::vector<T> coef = least_squares_qr(design, rhs);
            a.intercept[j] = coef[0];
            a.lin[j] = coef[1];
            a.quad[j] = coef[2];
            if (sweep == sweeps) {
                double mean_y = 0.0;
                for (const T& y : response) mean_y += scalar_value(y);
                mean_y /= static_cast<double>(paths);
                double ss_tot = 0.0, ss_res = 0.0;
                for (std::size_t i = 0; i < paths; ++i) {
                    const double y = scalar_value(response[i]);
                    const double fit = scalar_value(coef[0]) +
                                       scalar_value(coef[1]) * scalar_value(xs[i][j]) +
                                       scalar_value(coef[2]) * scalar_value(xs[i][j]) *
                                           scalar_value(xs[i][j]);
                    ss_tot += (y - mean_y) * (y - mean_y);
                    ss_res += (y - fit) * (y - fit);
                }
                a.fit_r2[j] = ss_tot > 1e-300 ? 1.0 - ss_res / ss_tot : 1.0;
            }
        }
    }
    return a;
}

// Maps u through the fitted sequential sampler; returns the trajectory and
// the log Jacobian determinant of u -> x.
template <class Model, class T>
std::pair<std::vector<T>, T> eis_forward_sample(const Model& m, std::span<const T> theta_star,
                                                const EisParams<T>& a, std::span<const T> u,
                                                const typename Model::Data& d) {
    const auto p = m.params(theta_star);
    std::vector<T> x;
    T logjac(0.0);
    detail::forward_path<false>(m, p, a, u, d, x, &logjac, nullptr);
    return {std::move(x), logjac};
}

// log importance weight log omega = sum_j [log g_j(x_j) + log chi_j - log
// xi_j(x_j)] along the trajectory generated from u. E_u[exp(log omega)] is
// the likelihood, and the weight is constant in u exactly when the fitted
// sampler matches the conditional posterior of x.
template <class Model, class T>
T eis_log_weight(const Model& m, std::span<const T> theta_star, const EisParams<T>& a,
                 std::span<const T> u, const typename Model::Data& d) {
    const auto p = m.params(theta_star);
    std::vector<T> x;
    T logweight(0.0);
    detail::forward_path<false>(m, p, a, u, d, x, nullptr, &logweight);
    return logweight;
}

}  // namespace tmhmc::eis
