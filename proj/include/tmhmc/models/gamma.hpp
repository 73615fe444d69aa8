#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmhmc/errors.hpp"
#include "tmhmc/models/common.hpp"
#include "tmhmc/rng.hpp"

namespace tmhmc::models {

// Multiplicative Gamma measurement model for positive series (e.g. realized
// variances): y_t = beta exp(x_t) e_t with e_t ~ Gamma(1/tau, tau) normalized
// so E(e_t) = 1 and Var(e_t) = tau; x_t is a zero-mean stationary Gaussian
// AR(1). Unconstrained parameters (log tau, log beta, arctanh delta,
// log nu^2); reported as (tau, beta, delta, nu).
struct GammaSsm {
    struct Data {
        std::vector<double> y;
        std::vector<double> log_y;  // log max(y_t, 1e-12)
        std::size_t size() const { return y.size(); }
    };

    static Data make_data(std::vector<double> y) {
        Data d;
        d.log_y.reserve(y.size());
        for (double v : y) {
            if (!std::isfinite(v) || v <= 0.0) throw DomainError("gamma data must be positive");
            d.log_y.push_back(std::log(std::max(v, 1e-12)));
        }
        d.y = std::move(y);
        return d;
    }

    template <class T>
    struct Params {
        T atanh_delta, log_nu2;
        T tau, beta, log_beta, delta, nu2;
        T c, log_c, lgamma_c;  // c = 1/tau, Gamma shape
    };

    static constexpr bool has_prior_summary = true;
    static constexpr bool linear_gauss_state = true;
    static constexpr bool newton_fixed_scale = false;
    static constexpr bool has_fisher = true;
    static constexpr bool fisher_h_zero = false;  // h_F = 0 performs poorly here

    std::size_t n_params() const { return 4; }
    std::vector<std::string> param_names() const { return {"tau", "beta", "delta", "nu"}; }
    std::size_t latent_dim(const Data& d) const { return d.size(); }

    template <class T>
    Params<T> params(std::span<const T> ts) const {
        using std::exp;
        using std::lgamma;
        using std::log;
        using std::tanh;
        Params<T> p;
        p.atanh_delta = ts[2];
        p.log_nu2 = ts[3];
        p.tau = exp(ts[0]);
        p.beta = exp(ts[1]);
        p.log_beta = ts[1];
        p.delta = tanh(ts[2]);
        p.nu2 = exp(ts[3]);
        p.c = exp(-ts[0]);
        p.log_c = -ts[0];
        p.lgamma_c = lgamma(p.c);
        return p;
    }

    // Flat priors on log tau and log beta; delta and nu^2 as in the SV model.
    template <class T>
    T log_prior(const Params<T>& p) const {
        return beta_tanh_logprior(20.0, 1.5, p.atanh_delta) +
               scaled_inv_chisq_logprior(10.0, 0.01, p.log_nu2);
    }

    bool segment_start(std::size_t j, const Data&) const { return j == 0; }

    template <class T>
    void state_init(const Params<T>& p, std::size_t, const Data&, T& mean, T& var) const {
        mean = T(0.0);
        var = p.nu2 / (1.0 - p.delta * p.delta);
    }
    template <class T>
    void state_trans(const Params<T>& p, std::size_t, const T& x_prev, const Data&, T& mean,
                     T& var) const {
        mean = p.delta * x_prev;
        var = p.nu2;
    }

    // log density of y_t = beta exp(x) e, e ~ Gamma(shape c, scale 1/c).
    template <class T>
    T log_meas(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        const T log_e = d.log_y[j] - p.log_beta - x;
        return (p.c - 1.0) * log_e - p.c * (d.y[j] / p.beta) * exp(-x) + p.c * p.log_c -
               p.lgamma_c - x - p.log_beta;
    }
    template <class T>
    T meas_grad(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return p.c * ((d.y[j] / p.beta) * exp(-x) - 1.0);
    }
    template <class T>
    T meas_curv(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return p.c * (d.y[j] / p.beta) * exp(-x);
    }

    template <class T>
    GaussSummary<T> prior_summary(const Params<T>& p, const Data& d) const {
        return ar1_summary(T(0.0), p.delta, p.nu2, d.size());
    }

    // h_t = log(y_t / beta), G_tt = 1/tau (also the measurement Fisher
    // information with respect to x_t).
    template <class T>
    GaussSummary<T> measurement_summary(const Params<T>& p, const Data& d) const {
        GaussSummary<T> s;
        s.h.resize(d.size());
        for (std::size_t j = 0; j < d.size(); ++j) s.h[j] = d.log_y[j] - p.log_beta;
        s.g.diag.assign(d.size(), p.c);
        s.g.offdiag.assign(d.size() - 1, T(0.0));
        return s;
    }

    template <class T>
    T fisher_info(const Params<T>& p) const {
        return p.c;
    }

    std::vector<double> to_constrained(std::span<const double> ts) const {
        return {std::exp(ts[0]), std::exp(ts[1]), std::tanh(ts[2]), std::exp(0.5 * ts[3])};
    }
    std::vector<double> to_unconstrained(std::span<const double> c) const {
        return {std::log(c[0]), std::log(c[1]), std::atanh(c[2]), 2.0 * std::log(c[3])};
    }

    // theta constrained = (tau, beta, delta, nu).
    Data simulate(std::span<const double> theta, std::size_t n, std::uint64_t seed) const {
        const double tau = theta[0], beta = theta[1], delta = theta[2], nu = theta[3];
        Rng rng(seed);
        std::vector<double> y(n);
        double x = nu / std::sqrt(1.0 - delta * delta) * rng.normal();
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0) x = delta * x + nu * rng.normal();
            y[t] = beta * std::exp(x) * rng.gamma(1.0 / tau, tau);
        }
        return make_data(std::move(y));
    }

    std::vector<double> initial_theta_star(const Data& d) const {
        double m = 0.0;
        for (double v : d.log_y) m += v;
        m /= static_cast<double>(d.size());
        const double delta0 = 0.95;
        return {std::log(0.5), m, std::atanh(delta0), std::log(0.05)};
    }
};

}  // namespace tmhmc::models
