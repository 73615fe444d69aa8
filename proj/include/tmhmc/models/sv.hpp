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

// Stochastic volatility: y_t = exp(x_t/2) e_t with a stationary Gaussian AR(1)
// log-variance x_t = gamma + delta x_{t-1} + nu eta_t. Unconstrained
// parameters (gamma, arctanh delta, log nu^2); reported as (gamma, delta, nu).
struct Sv {
    struct Data {
        std::vector<double> y;
        std::vector<double> y2;      // y_t^2
        std::vector<double> log_y2;  // log max(y_t^2, 1e-12), measurement location
        std::size_t size() const { return y.size(); }
    };

    static Data make_data(std::vector<double> y) {
        Data d;
        d.y2.reserve(y.size());
        d.log_y2.reserve(y.size());
        for (double v : y) {
            if (!std::isfinite(v)) throw DomainError("sv data must be finite");
            d.y2.push_back(v * v);
            d.log_y2.push_back(std::log(std::max(v * v, 1e-12)));
        }
        d.y = std::move(y);
        return d;
    }

    template <class T>
    struct Params {
        T atanh_delta, log_nu2;
        T gamma, delta, nu2, mean;
    };

    static constexpr bool has_prior_summary = true;
    static constexpr bool linear_gauss_state = true;
    static constexpr bool newton_fixed_scale = false;
    static constexpr bool has_fisher = true;
    static constexpr bool fisher_h_zero = true;

    std::size_t n_params() const { return 3; }
    std::vector<std::string> param_names() const { return {"gamma", "delta", "nu"}; }
    std::size_t latent_dim(const Data& d) const { return d.size(); }

    template <class T>
    Params<T> params(std::span<const T> ts) const {
        using std::exp;
        using std::tanh;
        Params<T> p;
        p.gamma = ts[0];
        p.atanh_delta = ts[1];
        p.log_nu2 = ts[2];
        p.delta = tanh(ts[1]);
        p.nu2 = exp(ts[2]);
        p.mean = p.gamma / (1.0 - p.delta);
        return p;
    }

    // Flat prior on gamma; (delta+1)/2 ~ Beta(20, 1.5); nu^2 ~ 10*0.01/chisq(10).
    template <class T>
    T log_prior(const Params<T>& p) const {
        return beta_tanh_logprior(20.0, 1.5, p.atanh_delta) +
               scaled_inv_chisq_logprior(10.0, 0.01, p.log_nu2);
    }

    bool segment_start(std::size_t j, const Data&) const { return j == 0; }

    template <class T>
    void state_init(const Params<T>& p, std::size_t, const Data&, T& mean, T& var) const {
        mean = p.mean;
        var = p.nu2 / (1.0 - p.delta * p.delta);
    }
    template <class T>
    void state_trans(const Params<T>& p, std::size_t, const T& x_prev, const Data&, T& mean,
                     T& var) const {
        mean = p.gamma + p.delta * x_prev;
        var = p.nu2;
    }

    template <class T>
    T log_meas(const Params<T>&, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return -0.5 * (log_2pi + x) - 0.5 * d.y2[j] * exp(-x);
    }
    template <class T>
    T meas_grad(const Params<T>&, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return 0.5 * d.y2[j] * exp(-x) - 0.5;
    }
    template <class T>
    T meas_curv(const Params<T>&, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return 0.5 * d.y2[j] * exp(-x);
    }

    template <class T>
    GaussSummary<T> prior_summary(const Params<T>& p, const Data& d) const {
        return ar1_summary(p.mean, p.delta, p.nu2, d.size());
    }

    // Mode and curvature of x_t -> log p(y_t|x_t): h_t = log y_t^2, G_tt = 1/2
    // (the measurement is a constant-information parameterization).
    template <class T>
    GaussSummary<T> measurement_summary(const Params<T>&, const Data& d) const {
        GaussSummary<T> s;
        s.h.assign(d.log_y2.begin(), d.log_y2.end());
        s.g.diag.assign(d.size(), T(0.5));
        s.g.offdiag.assign(d.size() - 1, T(0.0));
        return s;
    }

    template <class T>
    T fisher_info(const Params<T>&) const {
        return T(0.5);
    }

    std::vector<double> to_constrained(std::span<const double> ts) const {
        return {ts[0], std::tanh(ts[1]), std::exp(0.5 * ts[2])};
    }
    std::vector<double> to_unconstrained(std::span<const double> c) const {
        return {c[0], std::atanh(c[1]), 2.0 * std::log(c[2])};
    }

    // theta constrained = (gamma, delta, nu).
    Data simulate(std::span<const double> theta, std::size_t n, std::uint64_t seed) const {
        const double gamma = theta[0], delta = theta[1], nu = theta[2];
        Rng rng(seed);
        std::vector<double> y(n);
        double x = gamma / (1.0 - delta) + nu / std::sqrt(1.0 - delta * delta) * rng.normal();
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0) x = gamma + delta * x + nu * rng.normal();
            y[t] = std::exp(0.5 * x) * rng.normal();
        }
        return make_data(std::move(y));
    }

    // Moment-matched starting point: E log y_t^2 = E x_t - 1.27.
    std::vector<double> initial_theta_star(const Data& d) const {
        double m = 0.0;
        for (double v : d.log_y2) m += v;
        m = m / static_cast<double>(d.size()) + 1.27;
        const double delta0 = 0.95;
        return {m * (1.0 - delta0), std::atanh(delta0), std::log(0.05)};
    }
};

}  // namespace tmhmc::models
