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

// Linear-Gaussian state-space model: y_t = x_t + sigma_y e_t with a Gaussian
// AR(1) state. Everything about it (likelihood, smoothing moments) is
// available in closed form via the Kalman filter, which makes it the
// reference model for validating maps and importance weights: the exact
// smoothing precision is tridiagonal and the Laplace construction recovers it
// without iteration.
struct LinGauss {
    struct Data {
        std::vector<double> y;
        std::size_t size() const { return y.size(); }
    };

    static Data make_data(std::vector<double> y) {
        for (double v : y)
            if (!std::isfinite(v)) throw DomainError("observation is not finite");
        return Data{std::move(y)};
    }

    template <class T>
    struct Params {
        T gamma, atanh_delta, log_nu2, log_sy2;
        T delta, nu2, sy2, mean;
    };

    static constexpr bool has_prior_summary = true;
    static constexpr bool linear_gauss_state = true;
    static constexpr bool newton_fixed_scale = false;
    static constexpr bool has_fisher = false;
    static constexpr bool fisher_h_zero = false;

    static constexpr std::size_t n_params() { return 4; }
    static std::vector<std::string> param_names() {
        return {"gamma", "delta", "nu", "sigma_y"};
    }
    std::size_t latent_dim(const Data& d) const { return d.size(); }

    template <class T>
    Params<T> params(std::span<const T> ts) const {
        using std::exp;
        using std::tanh;
        Params<T> p;
        p.gamma = ts[0];
        p.atanh_delta = ts[1];
        p.log_nu2 = ts[2];
        p.log_sy2 = ts[3];
        p.delta = tanh(ts[1]);
        p.nu2 = exp(ts[2]);
        p.sy2 = exp(ts[3]);
        p.mean = p.gamma / (1.0 - p.delta);
        return p;
    }

    template <class T>
    T log_prior(const Params<T>& p) const {
        return -p.gamma * p.gamma / 200.0 + beta_tanh_logprior(20.0, 1.5, p.atanh_delta) +
               scaled_inv_chisq_logprior(10.0, 0.01, p.log_nu2) +
               scaled_inv_chisq_logprior(10.0, 0.01, p.log_sy2);
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
    GaussSummary<T> prior_summary(const Params<T>& p, const Data& d) const {
        return ar1_summary(p.mean, p.delta, p.nu2, d.size());
    }
    template <class T>
    GaussSummary<T> measurement_summary(const Params<T>& p, const Data& d) const {
        GaussSummary<T> s;
        s.h.assign(d.y.begin(), d.y.end());
        s.g.diag.assign(d.size(), 1.0 / p.sy2);
        s.g.offdiag.assign(d.size() - 1, T(0.0));
        return s;
    }

    std::vector<double> to_constrained(std::span<const double> ts) const {
        return {ts[0], std::tanh(ts[1]), std::exp(0.5 * ts[2]), std::exp(0.5 * ts[3])};
    }
    std::vector<double> to_unconstrained(std::span<const double> c) const {
        return {c[0], std::atanh(c[1]), 2.0 * std::log(c[2]), 2.0 * std::log(c[3])};
    }

    // theta constrained = (gamma, delta, nu, sigma_y).
    Data simulate(std::span<const double> theta, std::size_t n, std::uint64_t seed) const {
        const double gamma = theta[0], delta = theta[1], nu = theta[2], sy = theta[3];
        Rng rng(seed);
        std::vector<double> y(n);
        double x = gamma / (1.0 - delta) + nu / std::sqrt(1.0 - delta * delta) * rng.normal();
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0) x = gamma + delta * x + nu * rng.normal();
            y[t] = x + sy * rng.normal();
        }
        return Data{std::move(y)};
    }

    std::vector<double> initial_theta_star(const Data& d) const {
        double m = 0.0;
        for (double v : d.y) m += v;
        m /= static_cast<double>(d.size());
        return {m * (1.0 - 0.9), std::atanh(0.9), std::log(0.05), std::log(0.05)};
    }
};

}  // namespace tmhmc::models
