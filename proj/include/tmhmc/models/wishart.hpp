#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmhmc/errors.hpp"
#include "tmhmc/models/common.hpp"
#include "tmhmc/rng.hpp"

namespace tmhmc::models {

// Realized covariance matrices Y_t modeled conditionally inverse-Wishart with
// scale Sigma_t = H D_t H^T and df nu, where H is lower unitriangular and
// D_t = diag(exp(x_{s,t})) with one Gaussian AR(1) per series. Conditional on
// theta the series factorize: tr(Sigma_t Y_t^{-1}) = sum_s ytilde_{s,t}
// exp(x_{s,t}) with ytilde_{s,t} the quadratic form of the s-th column of H in
// Y_t^{-1}, so each series is a univariate state-space block. Latent index
// order is series-major: j = s*D + t.
class Wishart {
  public:
    explicit Wishart(std::size_t r) : r_(r) {}

    struct Data {
        std::size_t r = 0;
        std::size_t n = 0;
        std::vector<Eigen::MatrixXd> yinv;
        std::vector<double> log_det_y;
        std::size_t size() const { return n; }
    };

    // Validates each Y_t (symmetric positive definite) and precomputes the
    // inverses and log-determinants used throughout.
    static Data make_data(std::size_t r, const std::vector<Eigen::MatrixXd>& ys) {
        Data d;
        d.r = r;
        d.n = ys.size();
        d.yinv.reserve(ys.size());
        d.log_det_y.reserve(ys.size());
        for (const Eigen::MatrixXd& y : ys) {
            if (y.rows() != static_cast<Eigen::Index>(r) || y.cols() != y.rows())
                throw DomainError("wishart data matrix has wrong shape");
            Eigen::LLT<Eigen::MatrixXd> llt(y);
            if (llt.info() != Eigen::Success)
                throw DomainError("wishart data matrix is not positive definite");
            double ld = 0.0;
            for (Eigen::Index i = 0; i < y.rows(); ++i) ld += std::log(llt.matrixL()(i, i));
            d.log_det_y.push_back(2.0 * ld);
            d.yinv.push_back(llt.solve(Eigen::MatrixXd::Identity(y.rows(), y.cols())));
        }
        return d;
    }

    template <class T>
    struct Params {
        T nu, t_nu;
        std::vector<T> mu, delta, atanh_delta, sig2, log_sig2;
        std::vector<T> h;        // r x r row-major, lower unitriangular
        std::vector<T> lgamma_nu;  // lgamma((nu - s)/2), s = 0..r-1
    };

    static constexpr bool has_prior_summary = true;
    static constexpr bool linear_gauss_state = true;
    static constexpr bool newton_fixed_scale = true;  // approximate Newton, one Cholesky
    static constexpr bool has_fisher = false;
    static constexpr bool fisher_h_zero = false;

    std::size_t rank() const { return r_; }
    std::size_t n_params() const { return 1 + 3 * r_ + r_ * (r_ - 1) / 2; }

    std::vector<std::string> param_names() const {
        std::vector<std::string> names{"nu"};
        for (std::size_t s = 1; s <= r_; ++s) names.push_back("mu_" + std::to_string(s));
        for (std::size_t s = 1; s <= r_; ++s) names.push_back("delta_" + std::to_string(s));
        for (std::size_t s = 1; s <= r_; ++s) names.push_back("sigma_" + std::to_string(s));
        for (std::size_t j = 1; j < r_; ++j)
            for (std::size_t i = j + 1; i <= r_; ++i)
                names.push_back("h_" + std::to_string(i) + "_" + std::to_string(j));
        return names;
    }

    std::size_t latent_dim(const Data& d) const { return d.r * d.n; }

    template <class T>
    Params<T> params(std::span<const T> ts) const {
        using std::exp;
        using std::lgamma;
        using std::tanh;
        Params<T> p;
        p.t_nu = ts[0];
        p.nu = static_cast<double>(r_ + 1) + exp(ts[0]);
        p.mu.assign(ts.begin() + 1, ts.begin() + 1 + r_);
        p.atanh_delta.assign(ts.begin() + 1 + r_, ts.begin() + 1 + 2 * r_);
        p.log_sig2.assign(ts.begin() + 1 + 2 * r_, ts.begin() + 1 + 3 * r_);
        p.delta.resize(r_);
        p.sig2.resize(r_);
        p.lgamma_nu.resize(r_);
        for (std::size_t s = 0; s < r_; ++s) {
            p.delta[s] = tanh(p.atanh_delta[s]);
            p.sig2[s] = exp(p.log_sig2[s]);
            p.lgamma_nu[s] = lgamma(0.5 * (p.nu - static_cast<double>(s)));
        }
        p.h.assign(r_ * r_, T(0.0));
        std::size_t k = 1 + 3 * r_;
        for (std::size_t s = 0; s < r_; ++s) p.h[s * r_ + s] = T(1.0);
        for (std::size_t j = 0; j + 1 < r_; ++j)
            for (std::size_t i = j + 1; i < r_; ++i) p.h[i * r_ + j] = ts[k++];
        return p;
    }

    // Flat prior on nu over (r+1, inf), expressed through log(nu - (r+1));
    // mu_s ~ N(0, 25); delta_s uniform on (-1, 1); sigma_s^2 ~ 4*0.25/chisq(4);
    // h_{i,j} ~ N(0, 100).
    template <class T>
    T log_prior(const Params<T>& p) const {
        T acc = p.t_nu;
        for (std::size_t s = 0; s < r_; ++s) {
            acc += -p.mu[s] * p.mu[s] / 50.0;
            acc += beta_tanh_logprior(1.0, 1.0, p.atanh_delta[s]);
            acc += scaled_inv_chisq_logprior(4.0, 0.25, p.log_sig2[s]);
        }
        for (std::size_t j = 0; j + 1 < r_; ++j)
            for (std::size_t i = j + 1; i < r_; ++i) {
                const T& h = p.h[i * r_ + j];
                acc += -h * h / 200.0;
            }
        return acc;
    }

    bool segment_start(std::size_t j, const Data& d) const { return j % d.n == 0; }

    template <class T>
    void state_init(const Params<T>& p, std::size_t j, const Data& d, T& mean, T& var) const {
        const std::size_t s = j / d.n;
        mean = p.mu[s];
        var = p.sig2[s] / (1.0 - p.delta[s] * p.delta[s]);
    }
    template <class T>
    void state_trans(const Params<T>& p, std::size_t j, const T& x_prev, const Data& d, T& mean,
                     T& var) const {
        const std::size_t s = j / d.n;
        mean = p.mu[s] + p.delta[s] * (x_prev - p.mu[s]);
        var = p.sig2[s];
    }

    // Quadratic form of the s-th column of H in Y_t^{-1}.
    template <class T>
    T ytilde(const Params<T>& p, std::size_t s, std::size_t t, const Data& d) const {
        const Eigen::MatrixXd& yi = d.yinv[t];
        T acc(0.0);
        for (std::size_t i = s; i < r_; ++i) {
            const T& hi = p.h[i * r_ + s];
            acc += hi * hi * yi(i, i);
            for (std::size_t k = i + 1; k < r_; ++k)
                acc += 2.0 * yi(i, k) * hi * p.h[k * r_ + s];
        }
        return acc;
    }

    // Per-(s,t) share of the full normalized inverse-Wishart log density; the
    // nu-dependent constants and the |Y_t| terms are retained so that sums
    // over s and t reproduce log p(Y|x,theta) exactly.
    template <class T>
    T log_meas(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        const std::size_t s = j / d.n, t = j % d.n;
        const double rr = static_cast<double>(r_);
        return 0.5 * (p.nu * x) - 0.5 * ytilde(p, s, t, d) * exp(x) -
               0.5 * std::log(2.0) * p.nu - p.lgamma_nu[s] -
               (p.nu + rr + 1.0) / (2.0 * rr) * d.log_det_y[t] -
               (rr - 1.0) / 4.0 * std::log(std::acos(-1.0));
    }
    template <class T>
    T meas_grad(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return 0.5 * p.nu - 0.5 * ytilde(p, j / d.n, j % d.n, d) * exp(x);
    }
    template <class T>
    T meas_curv(const Params<T>& p, std::size_t j, const T& x, const Data& d) const {
        using std::exp;
        return 0.5 * ytilde(p, j / d.n, j % d.n, d) * exp(x);
    }

    template <class T>
    GaussSummary<T> prior_summary(const Params<T>& p, const Data& d) const {
        GaussSummary<T> s;
        for (std::size_t k = 0; k < r_; ++k)
            append_ar1_summary(s, p.mu[k], p.delta[k], p.sig2[k], d.n);
        return s;
    }

    // h_{s,t} = log(nu / ytilde_{s,t}), G = nu/2 per entry.
    template <class T>
    GaussSummary<T> measurement_summary(const Params<T>& p, const Data& d) const {
        using std::log;
        GaussSummary<T> s;
        const std::size_t m = latent_dim(d);
        s.h.resize(m);
        s.g.diag.assign(m, 0.5 * p.nu);
        s.g.offdiag.assign(m - 1, T(0.0));
        const T log_nu = log(p.nu);
        for (std::size_t k = 0; k < r_; ++k)
            for (std::size_t t = 0; t < d.n; ++t)
                s.h[k * d.n + t] = log_nu - log(ytilde(p, k, t, d));
        return s;
    }

    std::vector<double> to_constrained(std::span<const double> ts) const {
        std::vector<double> c;
        c.reserve(n_params());
        c.push_back(static_cast<double>(r_ + 1) + std::exp(ts[0]));
        for (std::size_t s = 0; s < r_; ++s) c.push_back(ts[1 + s]);
        for (std::size_t s = 0; s < r_; ++s) c.push_back(std::tanh(ts[1 + r_ + s]));
        for (std::size_t s = 0; s < r_; ++s) c.push_back(std::exp(0.5 * ts[1 + 2 * r_ + s]));
        for (std::size_t k = 1 + 3 * r_; k < n_params(); ++k) c.push_back(ts[k]);
        return c;
    }
    std::vector<double> to_unconstrained(std::span<const double> c) const {
        std::vector<double> ts;
        ts.reserve(n_params());
        ts.push_back(std::log(c[0] - static_cast<double>(r_ + 1)));
        for (std::size_t s = 0; s < r_; ++s) ts.push_back(c[1 + s]);
        for (std::size_t s = 0; s < r_; ++s) ts.push_back(std::atanh(c[1 + r_ + s]));
        for (std::size_t s = 0; s < r_; ++s) ts.push_back(2.0 * std::log(c[1 + 2 * r_ + s]));
        for (std::size_t k = 1 + 3 * r_; k < n_params(); ++k) ts.push_back(c[k]);
        return ts;
    }

    // theta constrained = (nu, mu_s, delta_s, sigma_s, h_{i,j} column-major).
    // Y_t is drawn by the Bartlett construction of W ~ Wishart(Sigma_t^{-1},
    // nu) and inverting, so Y_t ~ IW(Sigma_t, nu).
    Data simulate(std::span<const double> theta, std::size_t n, std::uint64_t seed) const {
        const double nu = theta[0];
        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(r_, r_);
        {
            std::size_t k = 1 + 3 * r_;
            for (std::size_t j = 0; j + 1 < r_; ++j)
                for (std::size_t i = j + 1; i < r_; ++i) h(i, j) = theta[k++];
        }
        Rng rng(seed);
        std::vector<double> x(r_);
        std::vector<Eigen::MatrixXd> ys;
        ys.reserve(n);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t s = 0; s < r_; ++s) {
                const double mu = theta[1 + s], delta = theta[1 + r_ + s];
                const double sig = theta[1 + 2 * r_ + s];
                x[s] = t == 0 ? mu + sig / std::sqrt(1.0 - delta * delta) * rng.normal()
                              : mu + delta * (x[s] - mu) + sig * rng.normal();
            }
            Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(r_, r_);
            for (std::size_t s = 0; s < r_; ++s)
                sigma += std::exp(x[s]) * h.col(s) * h.col(s).transpose();
            const Eigen::MatrixXd prec =
                Eigen::LLT<Eigen::MatrixXd>(sigma).solve(Eigen::MatrixXd::Identity(r_, r_));
            const Eigen::MatrixXd c = Eigen::LLT<Eigen::MatrixXd>(prec).matrixL();
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r_, r_);
            for (std::size_t i = 0; i < r_; ++i) {
                a(i, i) = std::sqrt(rng.chisq(nu - static_cast<double>(i)));
                for (std::size_t k = 0; k < i; ++k) a(i, k) = rng.normal();
            }
            const Eigen::MatrixXd ca = c * a;
            const Eigen::MatrixXd w = ca * ca.transpose();
            ys.push_back(w.llt().solve(Eigen::MatrixXd::Identity(r_, r_)));
        }
        return make_data(r_, ys);
    }

    std::vector<double> initial_theta_star(const Data& d) const {
        std::vector<double> ts(n_params(), 0.0);
        ts[0] = std::log(2.0);  // nu = r + 3
        for (std::size_t s = 0; s < r_; ++s) {
            double m = 0.0;
            for (std::size_t t = 0; t < d.n; ++t)
                m += std::log(std::max(1.0 / d.yinv[t](s, s), 1e-12));
            ts[1 + s] = m / static_cast<double>(d.n) + std::log(2.0);
            ts[1 + r_ + s] = std::atanh(0.9);
            ts[1 + 2 * r_ + s] = std::log(0.1);
        }
        return ts;
    }

  private:
    std::size_t r_;
};

}  // namespace tmhmc::models
