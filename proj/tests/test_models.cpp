#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "tmhmc/models/cev.hpp"
#include "tmhmc/models/gamma.hpp"
#include "tmhmc/models/lingauss.hpp"
#include "tmhmc/models/sv.hpp"
#include "tmhmc/models/wishart.hpp"
#include "tmhmc/rng.hpp"

using namespace tmhmc;
using namespace tmhmc::models;
using Catch::Approx;

namespace {

// Independent density helpers, written longhand so they share nothing with
// the library implementations.

double normal_ld(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * std::acos(-1.0) * var) -
           (x - mean) * (x - mean) / (2.0 * var);
}

double beta_tanh_ld(double a, double b, double t) {
    const double delta = std::tanh(t);
    return (a - 1.0) * std::log(0.5 * (1.0 + delta)) +
           (b - 1.0) * std::log(0.5 * (1.0 - delta)) +
           std::log(0.5 * (1.0 - delta * delta));
}

double sic_ld(double p0, double s0, double t) {
    return -0.5 * p0 * t - 0.5 * p0 * s0 / std::exp(t);
}

// Asymptotic digamma/trigamma with a recurrence shift into the stable range.
double digamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double r = 1.0 / x, r2 = r * r;
    return acc + std::log(x) - 0.5 * r -
           r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 / 252.0));
}

double trigamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double r = 1.0 / x, r2 = r * r;
    return acc + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 / 42.0))));
}

// Stationary AR(1) covariance: Cov(x_s, x_t) = var/(1-delta^2) delta^|s-t|.
Eigen::MatrixXd ar1_dense_cov(double delta, double var, std::size_t n) {
    Eigen::MatrixXd c(n, n);
    const double stat = var / (1.0 - delta * delta);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < n; ++t)
            c(s, t) = stat * std::pow(delta, std::fabs(double(s) - double(t)));
    return c;
}

Eigen::MatrixXd dense_from_tridiag(const SymTridiag<double>& g) {
    const std::size_t n = g.diag.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = g.diag[i];
    for (std::size_t j = 0; j + 1 < n; ++j) m(j, j + 1) = m(j + 1, j) = g.offdiag[j];
    return m;
}

// Fully normalized inverse-Wishart log density of y given scale sigma, df nu.
double inv_wishart_ld(const Eigen::MatrixXd& y, const Eigen::MatrixXd& sigma, double nu) {
    const double r = static_cast<double>(y.rows());
    double multi_lgamma = 0.25 * r * (r - 1.0) * std::log(std::acos(-1.0));
    for (int i = 0; i < y.rows(); ++i)
        multi_lgamma += std::lgamma(0.5 * nu - 0.5 * static_cast<double>(i));
    return 0.5 * nu * std::log(sigma.determinant()) - 0.5 * nu * r * std::log(2.0) -
           multi_lgamma - 0.5 * (nu + r + 1.0) * std::log(y.determinant()) -
           0.5 * (y.inverse() * sigma).trace();
}

template <class Model>
void roundtrip_case(const Model& m, const std::vector<double>& unconstrained) {
    const std::vector<double> c = m.to_constrained(unconstrained);
    const std::vector<double> back = m.to_unconstrained(c);
    REQUIRE(back.size() == unconstrained.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        CHECK(back[i] == Approx(unconstrained[i]).margin(1e-12));
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace

TEST_CASE("parameter transforms round-trip", "[models]") {
    Rng rng(101);
    for (int rep = 0; rep < 20; ++rep) {
        roundtrip_case(Sv{}, {rng.normal(), 1.5 * rng.normal(), rng.normal()});
        roundtrip_case(LinGauss{},
                       {rng.normal(), 1.5 * rng.normal(), rng.normal(), rng.normal()});
        roundtrip_case(GammaSsm{}, {rng.normal(), rng.normal(), 1.5 * rng.normal(),
                                    rng.normal()});
        roundtrip_case(Cev{}, {rng.normal(), rng.normal(), 2.0 * rng.normal(),
                               rng.normal(), rng.normal()});
        const Wishart w(3);
        std::vector<double> ts = random_vec(rng, w.n_params(), 1.0);
        for (std::size_t s = 0; s < 3; ++s) ts[1 + 3 + s] *= 1.5;  // arctanh block
        roundtrip_case(w, ts);
    }
    // constrained-side round trip
    const Sv sv;
    const std::vector<double> c{-0.02, 0.97, 0.2};
    const auto ts = sv.to_unconstrained(c);
    const auto back = sv.to_constrained(ts);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(back[i] == Approx(c[i]).margin(1e-12));
}

TEST_CASE("volatility model joint density at a hand-computed point", "[models]") {
    const Sv m;
    const auto d = Sv::make_data({0.0});
    const std::vector<double> ts{0.0, 0.0, 0.0};  // gamma=0, delta=0, nu2=1
    const std::vector<double> x{0.0};
    const auto p = m.params(std::span<const double>(ts));

    const double half_l2pi = 0.5 * std::log(2.0 * std::acos(-1.0));
    CHECK(log_state_density(m, p, std::span<const double>(x), d) ==
          Approx(-half_l2pi).margin(1e-12));
    CHECK(log_measurement_density(m, p, std::span<const double>(x), d) ==
          Approx(-half_l2pi).margin(1e-12));
    const double prior = 20.5 * std::log(0.5) - 0.05;
    CHECK(m.log_prior(p) == Approx(prior).margin(1e-12));
    CHECK(log_joint(m, std::span<const double>(ts), std::span<const double>(x), d) ==
          Approx(-2.0 * half_l2pi + prior).margin(1e-12));
}

TEST_CASE("gamma measurement density reduces to the exponential case", "[models]") {
    const GammaSsm m;
    const auto d = GammaSsm::make_data({1.0});
    // tau = 1 makes the multiplicative error Exponential(1)
    const std::vector<double> ts{0.0, 0.0, 0.5, -1.0};
    const auto p = m.params(std::span<const double>(ts));
    CHECK(m.log_meas(p, 0, 0.0, d) == Approx(-1.0).margin(1e-12));
}

TEST_CASE("joint densities match independently coded oracles", "[models]") {
    Rng rng(202);

    SECTION("linear-Gaussian") {
        const LinGauss m;
        const auto d = LinGauss::make_data(random_vec(rng, 7, 1.0));
        for (int rep = 0; rep < 5; ++rep) {
            const std::vector<double> ts{0.3 * rng.normal(), rng.normal(),
                                         -1.0 + 0.5 * rng.normal(),
                                         -1.0 + 0.5 * rng.normal()};
            const std::vector<double> x = random_vec(rng, 7, 1.0);
            const double delta = std::tanh(ts[1]);
            const double nu2 = std::exp(ts[2]), sy2 = std::exp(ts[3]);
            const double mean = ts[0] / (1.0 - delta);

            double state = normal_ld(x[0], mean, nu2 / (1.0 - delta * delta));
            for (std::size_t t = 1; t < x.size(); ++t)
                state += normal_ld(x[t], ts[0] + delta * x[t - 1], nu2);
            double meas = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t)
                meas += normal_ld(d.y[t], x[t], sy2);
            const double prior = -ts[0] * ts[0] / 200.0 + beta_tanh_ld(20.0, 1.5, ts[1]) +
                                 sic_ld(10.0, 0.01, ts[2]) + sic_ld(10.0, 0.01, ts[3]);

            const auto p = m.params(std::span<const double>(ts));
            CHECK(log_state_density(m, p, std::span<const double>(x), d) ==
                  Approx(state).margin(1e-10));
            CHECK(log_measurement_density(m, p, std::span<const double>(x), d) ==
                  Approx(meas).margin(1e-10));
            CHECK(m.log_prior(p) == Approx(prior).margin(1e-10));
            CHECK(log_joint(m, std::span<const double>(ts), std::span<const double>(x),
                            d) == Approx(state + meas + prior).margin(1e-10));
        }
    }

    SECTION("stochastic volatility") {
        const Sv m;
        const auto d = Sv::make_data(random_vec(rng, 6, 0.8));
        for (int rep = 0; rep < 5; ++rep) {
            const std::vector<double> ts{0.3 * rng.normal(), rng.normal(),
                                         -1.0 + 0.5 * rng.normal()};
            const std::vector<double> x = random_vec(rng, 6, 1.0);
            const double delta = std::tanh(ts[1]), nu2 = std::exp(ts[2]);
            const double mean = ts[0] / (1.0 - delta);

            double state = normal_ld(x[0], mean, nu2 / (1.0 - delta * delta));
            for (std::size_t t = 1; t < x.size(); ++t)
                state += normal_ld(x[t], ts[0] + delta * x[t - 1], nu2);
            double meas = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t)
                meas += -0.5 * std::log(2.0 * std::acos(-1.0)) - 0.5 * x[t] -
                        0.5 * d.y[t] * d.y[t] * std::exp(-x[t]);
            // the level gamma carries a flat (improper) prior
            const double prior = beta_tanh_ld(20.0, 1.5, ts[1]) + sic_ld(10.0, 0.01, ts[2]);

            CHECK(log_joint(m, std::span<const double>(ts), std::span<const double>(x),
                            d) == Approx(state + meas + prior).margin(1e-10));
        }
    }

    SECTION("multiplicative gamma") {
        const GammaSsm m;
        std::vector<double> y(6);
        for (double& v : y) v = std::exp(0.5 * rng.normal());
        const auto d = GammaSsm::make_data(y);
        for (int rep = 0; rep < 5; ++rep) {
            const std::vector<double> ts{-2.0 + 0.3 * rng.normal(), 0.3 * rng.normal(),
                                         rng.normal(), -1.5 + 0.5 * rng.normal()};
            const std::vector<double> x = random_vec(rng, 6, 0.8);
            const double tau = std::exp(ts[0]), beta = std::exp(ts[1]);
            const double delta = std::tanh(ts[2]), nu2 = std::exp(ts[3]);
            const double c = 1.0 / tau;

            double state = normal_ld(x[0], 0.0, nu2 / (1.0 - delta * delta));
            for (std::size_t t = 1; t < x.size(); ++t)
                state += normal_ld(x[t], delta * x[t - 1], nu2);
            double meas = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t) {
                const double e = d.y[t] * std::exp(-x[t]) / beta;
                // Gamma(shape c, scale 1/c) density of e, times de/dy
                meas += (c - 1.0) * std::log(e) - c * e + c * std::log(c) -
                        std::lgamma(c) - x[t] - std::log(beta);
            }
            const double prior = beta_tanh_ld(20.0, 1.5, ts[2]) + sic_ld(10.0, 0.01, ts[3]);

            CHECK(log_joint(m, std::span<const double>(ts), std::span<const double>(x),
                            d) == Approx(state + meas + prior).margin(1e-10));
        }
    }

    SECTION("short-rate model") {
        const Cev m;
        std::vector<double> y(6);
        for (std::size_t t = 0; t < y.size(); ++t) y[t] = 0.05 + 0.002 * rng.normal();
        const auto d = Cev::make_data(y);
        for (int rep = 0; rep < 5; ++rep) {
            const std::vector<double> ts{0.01 * rng.normal(), 0.1 * rng.normal(),
                                         0.5 * rng.normal(), -6.0 + 0.3 * rng.normal(),
                                         -12.0 + 0.3 * rng.normal()};
            std::vector<double> x(6);
            for (std::size_t t = 0; t < x.size(); ++t) x[t] = 0.05 + 0.001 * rng.normal();
            const double gamma = 4.0 / (1.0 + std::exp(-ts[2]));
            const double sx2 = std::exp(ts[3]), sy2 = std::exp(ts[4]);
            const double step = 1.0 / 252.0;

            double state = normal_ld(x[0], d.y[0], 1e-4);
            for (std::size_t t = 1; t < x.size(); ++t)
                state += normal_ld(x[t], x[t - 1] + step * (ts[0] - ts[1] * x[t - 1]),
                                   sx2 * std::pow(x[t - 1], 2.0 * gamma) * step);
            double meas = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t)
                meas += normal_ld(d.y[t], x[t], sy2);
            const double prior = -ts[0] * ts[0] / 2000.0 - ts[1] * ts[1] / 2000.0 +
                                 std::log(gamma) + std::log(4.0 - gamma) - std::log(4.0);

            CHECK(log_joint(m, std::span<const double>(ts), std::span<const double>(x),
                            d) == Approx(state + meas + prior).margin(1e-10));
        }
    }
}

TEST_CASE("covariance-matrix model matches the dense inverse-Wishart oracle", "[models]") {
    Rng rng(303);
    const std::size_t r = 3, n = 5;
    const Wishart m(r);

    std::vector<Eigen::MatrixXd> ys;
    for (std::size_t t = 0; t < n; ++t) {
        Eigen::MatrixXd a(r, r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j) a(i, j) = rng.normal();
        ys.push_back(a * a.transpose() + 2.0 * Eigen::MatrixXd::Identity(r, r));
    }
    const auto d = Wishart::make_data(r, ys);

    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> ts = random_vec(rng, m.n_params(), 0.4);
        ts[0] = 1.5 + 0.2 * rng.normal();
        std::vector<double> x = random_vec(rng, r * n, 0.7);
        const auto p = m.params(std::span<const double>(ts));
        const double nu = static_cast<double>(r + 1) + std::exp(ts[0]);

        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(r, r);
        {
            std::size_t k = 1 + 3 * r;
            for (std::size_t j = 0; j + 1 < r; ++j)
                for (std::size_t i = j + 1; i < r; ++i) h(i, j) = ts[k++];
        }

        // measurement density = sum over times of the normalized density
        double meas = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(r, r);
            for (std::size_t s = 0; s < r; ++s)
                sigma += std::exp(x[s * n + t]) * h.col(s) * h.col(s).transpose();
            meas += inv_wishart_ld(ys[t], sigma, nu);
        }
        CHECK(log_measurement_density(m, p, std::span<const double>(x), d) ==
              Approx(meas).margin(1e-10));

        // state density factorizes into independent per-series blocks
        double state = 0.0;
        for (std::size_t s = 0; s < r; ++s) {
            const double mu = ts[1 + s], delta = std::tanh(ts[1 + r + s]);
            const double sig2 = std::exp(ts[1 + 2 * r + s]);
            state += normal_ld(x[s * n], mu, sig2 / (1.0 - delta * delta));
            for (std::size_t t = 1; t < n; ++t)
                state += normal_ld(x[s * n + t], mu + delta * (x[s * n + t - 1] - mu), sig2);
        }
        CHECK(log_state_density(m, p, std::span<const double>(x), d) ==
              Approx(state).margin(1e-10));

        // prior
        double prior = ts[0];
        for (std::size_t s = 0; s < r; ++s)
            prior += -ts[1 + s] * ts[1 + s] / 50.0 + beta_tanh_ld(1.0, 1.0, ts[1 + r + s]) +
                     sic_ld(4.0, 0.25, ts[1 + 2 * r + s]);
        for (std::size_t k = 1 + 3 * r; k < m.n_params(); ++k)
            prior += -ts[k] * ts[k] / 200.0;
        CHECK(m.log_prior(p) == Approx(prior).margin(1e-10));
    }

    SECTION("rank-2 single-matrix example") {
        const Wishart m2(2);
        Eigen::MatrixXd y(2, 2);
        y << 2.0, 0.4, 0.4, 1.5;
        const auto d2 = Wishart::make_data(2, {y});
        std::vector<double> ts{std::log(4.0), 0.2, -0.1, 0.3, -0.4, 0.1, 0.2, 0.5};
        REQUIRE(ts.size() == m2.n_params());
        const std::vector<double> x{0.3, -0.2};
        const auto p2 = m2.params(std::span<const double>(ts));
        const double nu = 3.0 + 4.0;

        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
        h(1, 0) = ts[7];
        Eigen::MatrixXd sigma = std::exp(x[0]) * h.col(0) * h.col(0).transpose() +
                                std::exp(x[1]) * h.col(1) * h.col(1).transpose();
        CHECK(log_measurement_density(m2, p2, std::span<const double>(x), d2) ==
              Approx(inv_wishart_ld(y, sigma, nu)).margin(1e-10));
    }
}

TEST_CASE("measurement summaries take their stated closed forms", "[models]") {
    SECTION("volatility") {
        const Sv m;
        const auto d = Sv::make_data({1.0, 1.0, 1.0});
        const std::vector<double> ts{0.1, 0.5, -2.0};
        const auto s = m.measurement_summary(m.params(std::span<const double>(ts)), d);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(s.h[j] == Approx(0.0).margin(1e-14));
            CHECK(s.g.diag[j] == Approx(0.5).margin(1e-14));
        }
    }
    SECTION("gamma") {
        const GammaSsm m;
        const auto d = GammaSsm::make_data({1.0, 1.0});
        const std::vector<double> ts{std::log(0.13), 0.0, 0.5, -2.0};
        const auto s = m.measurement_summary(m.params(std::span<const double>(ts)), d);
        CHECK(s.h[0] == Approx(0.0).margin(1e-14));
        CHECK(s.g.diag[0] == Approx(1.0 / 0.13).epsilon(1e-12));
        CHECK(s.g.diag[0] == Approx(7.6923).epsilon(1e-4));
    }
    SECTION("covariance matrices") {
        Rng rng(9);
        const Wishart m(3);
        std::vector<Eigen::MatrixXd> ys;
        for (int t = 0; t < 2; ++t) {
            Eigen::MatrixXd a(3, 3);
            for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = rng.normal();
            ys.push_back(a * a.transpose() + 2.0 * Eigen::MatrixXd::Identity(3, 3));
        }
        const auto d = Wishart::make_data(3, ys);
        std::vector<double> ts(m.n_params(), 0.1);
        ts[0] = std::log(33.6 - 4.0);
        const auto s = m.measurement_summary(m.params(std::span<const double>(ts)), d);
        for (double g : s.g.diag) CHECK(g == Approx(16.8).margin(1e-10));
    }
    SECTION("short-rate") {
        const Cev m;
        const auto d = Cev::make_data({0.05, 0.06});
        const std::vector<double> ts{0.0, 0.1, 0.0, -6.0, -10.0};
        const auto s = m.measurement_summary(m.params(std::span<const double>(ts)), d);
        CHECK(s.h[0] == Approx(0.05).margin(1e-14));
        CHECK(s.h[1] == Approx(0.06).margin(1e-14));
        CHECK(s.g.diag[0] == Approx(std::exp(10.0)).epsilon(1e-12));
    }
}

TEST_CASE("measurement locations are stationary points of the measurement density",
          "[models]") {
    Rng rng(404);

    const auto check_stationary = [](const auto& m, const auto& p, const auto& d,
                                     std::size_t n) {
        const auto s = m.measurement_summary(p, d);
        for (std::size_t j = 0; j < n; ++j)
            CHECK(std::fabs(m.meas_grad(p, j, s.h[j], d)) < 1e-8);
    };

    {
        const Sv m;
        const auto d = Sv::make_data(random_vec(rng, 8, 1.0));
        const std::vector<double> ts{0.1, 1.0, -2.0};
        check_stationary(m, m.params(std::span<const double>(ts)), d, 8);
    }
    {
        const GammaSsm m;
        std::vector<double> y(8);
        for (double& v : y) v = std::exp(rng.normal());
        const auto d = GammaSsm::make_data(y);
        const std::vector<double> ts{-2.0, 0.3, 1.0, -2.0};
        check_stationary(m, m.params(std::span<const double>(ts)), d, 8);
    }
    {
        const LinGauss m;
        const auto d = LinGauss::make_data(random_vec(rng, 8, 1.0));
        const std::vector<double> ts{0.0, 1.0, -2.0, -2.0};
        check_stationary(m, m.params(std::span<const double>(ts)), d, 8);
    }
    {
        const Wishart m(2);
        std::vector<Eigen::MatrixXd> ys;
        for (int t = 0; t < 4; ++t) {
            Eigen::MatrixXd a(2, 2);
            for (int i = 0; i < 4; ++i) a(i / 2, i % 2) = rng.normal();
            ys.push_back(a * a.transpose() + Eigen::MatrixXd::Identity(2, 2));
        }
        const auto d = Wishart::make_data(2, ys);
        std::vector<double> ts(m.n_params(), 0.2);
        check_stationary(m, m.params(std::span<const double>(ts)), d, 8);
    }
}

TEST_CASE("prior summaries invert the stationary covariance", "[models]") {
    SECTION("independent standard-normal states give the identity") {
        const Sv m;
        const auto d = Sv::make_data({1.0, 1.0, 1.0});
        const std::vector<double> ts{0.0, 0.0, 0.0};  // delta=0, nu2=1, gamma=0
        const auto s = m.prior_summary(m.params(std::span<const double>(ts)), d);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(s.h[j] == Approx(0.0).margin(1e-14));
            CHECK(s.g.diag[j] == Approx(1.0).margin(1e-14));
        }
        for (std::size_t j = 0; j + 1 < 3; ++j) CHECK(s.g.offdiag[j] == 0.0);
    }

    SECTION("moderate persistence matches the dense covariance inverse") {
        const Sv m;
        const auto d = Sv::make_data({1.0, 1.0, 1.0});
        const std::vector<double> ts{0.0, std::atanh(0.5), 0.0};
        const auto s = m.prior_summary(m.params(std::span<const double>(ts)), d);
        const Eigen::MatrixXd prec = ar1_dense_cov(0.5, 1.0, 3).inverse();
        const Eigen::MatrixXd g = dense_from_tridiag(s.g);
        CHECK((g - prec).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("gamma prior location is zero") {
        const GammaSsm m;
        std::vector<double> y(5, 1.0);
        const auto d = GammaSsm::make_data(y);
        const std::vector<double> ts{-2.0, 0.7, 1.2, -1.5};
        const auto s = m.prior_summary(m.params(std::span<const double>(ts)), d);
        for (double h : s.h) CHECK(h == 0.0);
    }

    SECTION("precision times covariance is the identity up to length 50") {
        Rng rng(505);
        for (std::size_t n : {2u, 5u, 17u, 50u}) {
            const LinGauss m;
            const auto d = LinGauss::make_data(random_vec(rng, n, 1.0));
            const double a = 1.2 * rng.normal(), lv = -1.0 + 0.5 * rng.normal();
            const std::vector<double> ts{0.2 * rng.normal(), a, lv, -1.0};
            const auto s = m.prior_summary(m.params(std::span<const double>(ts)), d);
            const Eigen::MatrixXd g = dense_from_tridiag(s.g);
            const Eigen::MatrixXd cov = ar1_dense_cov(std::tanh(a), std::exp(lv), n);
            const Eigen::MatrixXd prod = g * cov;
            CHECK((prod - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
        }
    }

    SECTION("per-series blocks for the covariance-matrix model") {
        Rng rng(606);
        const std::size_t r = 3, n = 10;
        const Wishart m(r);
        std::vector<Eigen::MatrixXd> ys;
        for (std::size_t t = 0; t < n; ++t) {
            Eigen::MatrixXd a(r, r);
            for (std::size_t i = 0; i < r * r; ++i) a(i / r, i % r) = rng.normal();
            ys.push_back(a * a.transpose() + 2.0 * Eigen::MatrixXd::Identity(r, r));
        }
        const auto d = Wishart::make_data(r, ys);
        std::vector<double> ts = random_vec(rng, m.n_params(), 0.4);
        ts[0] = 1.0;
        const auto s = m.prior_summary(m.params(std::span<const double>(ts)), d);
        REQUIRE(s.g.diag.size() == r * n);

        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(r * n, r * n);
        for (std::size_t k = 0; k < r; ++k) {
            const double delta = std::tanh(ts[1 + r + k]);
            const double sig2 = std::exp(ts[1 + 2 * r + k]);
            cov.block(k * n, k * n, n, n) = ar1_dense_cov(delta, sig2, n);
        }
        const Eigen::MatrixXd g = dense_from_tridiag(s.g);
        const Eigen::MatrixXd prod = g * cov;
        CHECK((prod - Eigen::MatrixXd::Identity(r * n, r * n)).cwiseAbs().maxCoeff() <
              1e-8);
        for (std::size_t k = 0; k < r; ++k)
            for (std::size_t t = 0; t < n; ++t)
                CHECK(s.h[k * n + t] == Approx(ts[1 + k]).margin(1e-14));
    }
}

TEST_CASE("short-rate elasticity transform and its prior content", "[models]") {
    const Cev m;
    for (double t : {-1.0, 0.3, 2.0}) {
        const double gamma = 4.0 / (1.0 + std::exp(-t));
        // numeric derivative of the constrained value against the analytic one
        const double h = 1e-6;
        std::vector<double> up{0.0, 0.0, t + h, 0.0, 0.0};
        std::vector<double> dn{0.0, 0.0, t - h, 0.0, 0.0};
        const double fd =
            (m.to_constrained(up)[2] - m.to_constrained(dn)[2]) / (2.0 * h);
        CHECK(fd == Approx(gamma * (4.0 - gamma) / 4.0).margin(1e-10));

        // with flat level priors, the log prior is exactly the log Jacobian
        const std::vector<double> ts{0.0, 0.0, t, -5.0, -5.0};
        CHECK(m.log_prior(m.params(std::span<const double>(ts))) ==
              Approx(std::log(gamma * (4.0 - gamma) / 4.0)).margin(1e-12));
    }
}

TEST_CASE("simulation is deterministic in the seed", "[models]") {
    const Sv sv;
    const auto a = sv.simulate(std::vector<double>{-0.02, 0.97, 0.2}, 50, 7);
    const auto b = sv.simulate(std::vector<double>{-0.02, 0.97, 0.2}, 50, 7);
    const auto c = sv.simulate(std::vector<double>{-0.02, 0.97, 0.2}, 50, 8);
    REQUIRE(a.y.size() == 50);
    CHECK(a.y == b.y);
    CHECK(a.y != c.y);

    const Wishart w(2);
    std::vector<double> theta{8.0, 0.5, -0.2, 0.9, 0.8, 0.3, 0.2, 0.4};
    const auto wa = w.simulate(theta, 5, 3);
    const auto wb = w.simulate(theta, 5, 3);
    for (std::size_t t = 0; t < 5; ++t)
        CHECK((wa.yinv[t] - wb.yinv[t]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate volatility simulation is standard normal noise", "[models]") {
    const Sv m;
    const std::size_t n = 20000;
    const auto d = m.simulate(std::vector<double>{0.0, 0.0, 1e-8}, n, 11);
    double mean = 0.0;
    for (double v : d.y) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : d.y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(var - 1.0) < 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("gamma simulation matches model-implied moments", "[models]") {
    const double tau = 0.13, beta = 2.7, delta = 0.98, nu = 0.22;
    const std::size_t n = 500;
    const GammaSsm m;
    const auto d = m.simulate(std::vector<double>{tau, beta, delta, nu}, n, 3);

    // log y_t = log beta + x_t + log e_t with e_t ~ Gamma(c, 1/c), c = 1/tau
    const double c = 1.0 / tau;
    const double mean_le = digamma(c) - std::log(c);
    const double var_le = trigamma(c);
    const double var_x = nu * nu / (1.0 - delta * delta);
    const double true_mean = std::log(beta) + mean_le;
    const double true_var = var_x + var_le;

    std::vector<double> ly(n);
    for (std::size_t t = 0; t < n; ++t) ly[t] = std::log(d.y[t]);
    double mean = 0.0;
    for (double v : ly) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : ly) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);

    // exact standard errors accounting for the AR(1) autocorrelation
    double sum_cov = 0.0, sum_cov2 = 0.0;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < n; ++t) {
            const double cov = var_x * std::pow(delta, std::fabs(double(s) - double(t))) +
                               (s == t ? var_le : 0.0);
            sum_cov += cov;
            sum_cov2 += cov * cov;
        }
    const double se_mean = std::sqrt(sum_cov) / static_cast<double>(n);
    const double se_var = std::sqrt(2.0 * sum_cov2) / static_cast<double>(n);

    CHECK(std::fabs(mean - true_mean) < 3.0 * se_mean);
    CHECK(std::fabs(var - true_var) < 3.0 * se_var);
}

TEST_CASE("invalid observations are rejected at load", "[models]") {
    CHECK_THROWS_AS(GammaSsm::make_data({1.0, -0.5}), DomainError);
    CHECK_THROWS_AS(GammaSsm::make_data({1.0, 0.0}), DomainError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Sv::make_data({1.0, inf}), DomainError);
    CHECK_THROWS_AS(Cev::make_data({std::nan("")}), DomainError);
    CHECK_THROWS_AS(LinGauss::make_data({1.0, inf}), DomainError);

    Eigen::MatrixXd indef(2, 2);
    indef << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(Wishart::make_data(2, {indef}), DomainError);
    Eigen::MatrixXd wrong(3, 3);
    wrong.setIdentity();
    CHECK_THROWS_AS(Wishart::make_data(2, {wrong}), DomainError);
}
