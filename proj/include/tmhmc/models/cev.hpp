#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmhmc/errors.hpp"
#include "tmhmc/models/common.hpp"
#include "tmhmc/rng.hpp"

namespace tmhmc::models {

// Constant elasticity of variance short-rate model observed with measurement
// error: y_t = x_t + sigma_y e_t, x_t = x_{t-1} + Delta (alpha - beta x_{t-1})
// + sigma_x x_{t-1}^gamma sqrt(Delta) eta_t, with daily step Delta = 1/252 and
// x_1 ~ N(y_1, 0.01^2). States must stay positive. Unconstrained parameters
// (alpha, beta, logit-scaled gamma in (0,4), log sigma_x^2, log sigma_y^2);
// reported as (alpha, beta, gamma, sigma_x, sigma_y).
struct Cev {
    static constexpr double step = 1.0 / 252.0;
    static constexpr double init_var = 1e-4;

    struct Data {
        std::vector<double> y;
        std::size_t size() const { return y.size(); }
    };

    static Data make_data(std::vector<double> y) {
        for (double v : y)
            if (!std::isfinite(v)) throw DomainError("cev data must be finite");
        return Data{std::move(y)};
    }

    template <class T>
    struct Params {
        T alpha, beta, gamma, sx2, sy2;
        T logit_gamma;
    };

    static constexpr bool has_prior_summary = false;
    static constexpr bool linear_gauss_state = false;
    static constexpr bool newton_fixed_scale = false;
    static constexpr bool has_fisher = false;
    static constexpr bool fisher_h_zero = false;

    std::size_t n_params() const { return 5; }
    std::vector<std::string> param_names() const {
        return {"alpha", "beta", "gamma", "sigma_x", "sigma_y"};
    }
    std::size_t latent_dim(const Data& d) const { return d.size(); }

    template <class T>
    Params<T> params(std::span<const T> ts) const {
        using std::exp;
        Params<T> p;
        p.alpha = ts[0];
        p.beta = ts[1];
        p.logit_gamma = ts[2];
        p.gamma = 4.0 / (1.0 + exp(-ts[2]));
        p.sx2 = exp(ts[3]);
        p.sy2 = exp(ts[4]);
        return p;
    }

    // alpha, beta ~ N(0, 1000); gamma uniform on (0, 4) via a scaled logistic
    // transform; sigma^2 priors proportional to 1/sigma^2 (their unconstrained
    // log-scale densities are flat).
    template <class T>
    T log_prior(const Params<T>& p) const {
        using std::log;
        return -p.alpha * p.alpha / 2000.0 - p.beta * p.beta / 2000.0 + log(p.gamma) +
               log(4.0 - p.gamma) - std::log(4.0);
    }

    bool segment_start(std::size_t j, const Data&) const { return j == 0; }

    template <class T>
    void state_init(const Params<T>&, std::size_t, const Data& d, T& mean, T& var) const {
        mean = T(d.y[0]);
        var = T(init_var);
    }
    template <class T>
    void state_trans(const Params<T>& p, std::size_t, const T& x_prev, const Data&, T& mean,
                     T& var) const {
        using std::pow;
        if (scalar_value(x_prev) <= 0.0) throw NonFinite("cev state left the positive domain");
        mean = x_prev + step * (p.alpha - p.beta * x_prev);
        var = p.sx2 * pow(x_prev, 2.0 * p.gamma) * step;
    }

    template <class T>
    T log_meas(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        return normal_logpdf(T(d.y[j]), x, p.sy2);
    }
    template <class T>
    T meas_grad(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        return (d.y[j] - x) / p.sy2;
    }
    template <class T>
    T meas_curv(const Params<T>& p, std::size_t, const T&, const Data&) const {
        return 1.0 / p.sy2;
    }

    template <class T>
    GaussSummary<T> measurement_summary(const Params<T>& p, const Data& d) const {
        GaussSummary<T> s;
        s.h.assign(d.y.begin(), d.y.end());
        s.g.diag.assign(d.size(), 1.0 / p.sy2);
        s.g.offdiag.assign(d.size() - 1, T(0.0));
        return s;
    }

    // Newton start for the Laplace scheme: the observations themselves (the
    // measurement noise is small, so y is close to the conditional mode of x).
    template <class T>
    std::vector<T> initial_mode(const Params<T>&, const Data& d) const {
        return std::vector<T>(d.y.begin(), d.y.end());
    }

    // grad_x and -hess_x (tridiagonal) of log[p(x|theta) p(y|x,theta)]. The
    // state-dependent transition variance v(w) = sigma_x^2 w^{2 gamma} Delta
    // makes both depend on the trajectory, unlike the AR(1) models.
    template <class T>
    void joint_grad_neg_hess(const Params<T>& p, std::span<const T> x, const Data& d,
                             std::vector<T>& grad, SymTridiag<T>& nhess) const {
        using std::pow;
        const std::size_t n = x.size();
        grad.assign(n, T(0.0));
        nhess.diag.assign(n, T(0.0));
        nhess.offdiag.assign(n - 1, T(0.0));

        grad[0] = -(x[0] - d.y[0]) / init_var;
        nhess.diag[0] = T(1.0 / init_var);
        const T aprime = 1.0 - step * p.beta;
        for (std::size_t t = 1; t < n; ++t) {
            const T& w = x[t - 1];
            if (scalar_value(w) <= 0.0) throw NonFinite("cev state left the positive domain");
            const T v = p.sx2 * pow(w, 2.0 * p.gamma) * step;
            const T vp = 2.0 * p.gamma * v / w;
            const T vpp = 2.0 * p.gamma * (2.0 * p.gamma - 1.0) * v / (w * w);
            const T r = x[t] - (w + step * (p.alpha - p.beta * w));

            grad[t] += -r / v;
            grad[t - 1] += -vp / (2.0 * v) + r * aprime / v + r * r * vp / (2.0 * v * v);

            nhess.diag[t] += 1.0 / v;
            nhess.diag[t - 1] += vpp / (2.0 * v) - vp * vp / (2.0 * v * v) + aprime * aprime / v +
                                 2.0 * r * aprime * vp / (v * v) - r * r * vpp / (2.0 * v * v) +
                                 r * r * vp * vp / (v * v * v);
            nhess.offdiag[t - 1] = -(aprime / v + r * vp / (v * v));
        }
        for (std::size_t j = 0; j < n; ++j) {
            grad[j] += meas_grad(p, j, x[j], d);
            nhess.diag[j] += meas_curv(p, j, x[j], d);
        }
    }

    std::vector<double> to_constrained(std::span<const double> ts) const {
        return {ts[0], ts[1], 4.0 / (1.0 + std::exp(-ts[2])), std::exp(0.5 * ts[3]),
                std::exp(0.5 * ts[4])};
    }
    std::vector<double> to_unconstrained(std::span<const double> c) const {
        const double g = c[2];
        return {c[0], c[1], std::log(g / (4.0 - g)), 2.0 * std::log(c[3]), 2.0 * std::log(c[4])};
    }

    // theta constrained = (alpha, beta, gamma, sigma_x, sigma_y). The start is
    // drawn near the mean-reversion level alpha/beta; transition draws that
    // would leave the positive domain are redrawn.
    Data simulate(std::span<const double> theta, std::size_t n, std::uint64_t seed) const {
        const double alpha = theta[0], beta = theta[1], gamma = theta[2];
        const double sx = theta[3], sy = theta[4];
        Rng rng(seed);
        std::vector<double> y(n);
        double x = alpha / beta + 0.01 * rng.normal();
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0) {
                double next;
                do {
                    next = x + step * (alpha - beta * x) +
                           sx * std::pow(x, gamma) * std::sqrt(step) * rng.normal();
                } while (next <= 0.0);
                x = next;
            }
            y[t] = x + sy * rng.normal();
        }
        return make_data(std::move(y));
    }

    std::vector<double> initial_theta_star(const Data& d) const {
        double m = 0.0;
        for (double v : d.y) m += v;
        m /= static_cast<double>(d.size());
        if (m <= 0.0) m = 0.05;
        // level m with mild mean reversion; gamma starts at 1 (logit(1/4)).
        return {0.1 * m, 0.1, std::log(1.0 / 3.0), std::log(0.01), std::log(1e-6)};
    }
};

}  // namespace tmhmc::models
