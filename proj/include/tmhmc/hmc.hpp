#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "tmhmc/errors.hpp"
#include "tmhmc/rng.hpp"

namespace tmhmc {

inline constexpr double half_pi = 1.57079632679489661923;

// Position/momentum over the joint (theta*, u) space.
struct PhaseState {
    std::vector<double> theta, u, p_theta, p_u;
};

// Parameter-block mass matrix with its stored Cholesky factor; the latent
// block is structurally the identity and never materialized.
class MassMatrix {
  public:
    static MassMatrix identity(std::size_t n) {
        return MassMatrix(Eigen::MatrixXd::Identity(n, n));
    }

    // Throws NotPositiveDefinite when the matrix has no Cholesky factor.
    static MassMatrix from_dense(const Eigen::MatrixXd& m) { return MassMatrix(m); }

    std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
    const Eigen::MatrixXd& dense() const { return m_; }

    std::vector<double> apply_inverse(std::span<const double> p) const {
        const Eigen::VectorXd v =
            llt_.solve(Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()));
        return {v.data(), v.data() + v.size()};
    }

    double kinetic(std::span<const double> p) const {
        const Eigen::Map<const Eigen::VectorXd> v(p.data(), p.size());
        return 0.5 * v.dot(llt_.solve(v));
    }

    void sample_momentum(Rng& rng, std::vector<double>& p) const {
        Eigen::VectorXd z(m_.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
        const Eigen::VectorXd v = llt_.matrixL() * z;
        p.assign(v.data(), v.data() + v.size());
    }

  private:
    explicit MassMatrix(const Eigen::MatrixXd& m) : m_(m), llt_(m) {
        if (llt_.info() != Eigen::Success) throw NotPositiveDefinite(0);
    }

    Eigen::MatrixXd m_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

enum class Integrator { Leapfrog, Ld };

struct HmcConfig {
    std::size_t steps = 4;   // integrator steps per proposal
    double step_size = 0.0;  // <= 0 selects the default (pi/2) / steps
    std::size_t iters = 1500;
    std::size_t burnin = 500;
    std::uint64_t seed = 1;
    Integrator integrator = Integrator::Ld;

    double effective_step() const { return step_size > 0.0 ? step_size : half_pi / steps; }

    void validate() const {
        if (steps < 1) throw DomainError("integrator steps must be at least 1");
        if (!(effective_step() > 0.0)) throw DomainError("step size must be positive");
        if (iters <= burnin) throw DomainError("iterations must exceed burn-in");
    }
};

// H = -log target + kinetic terms; +inf whenever the target cannot be
// evaluated, which the accept step turns into a rejection.
template <class Target>
double energy(const Target& tgt, const PhaseState& s, const MassMatrix& mass) {
    const double v = tgt.log_density(s.theta, s.u);
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    double ku = 0.0;
    for (double p : s.p_u) ku += p * p;
    return -v + mass.kinetic(s.p_theta) + 0.5 * ku;
}

// Standard leapfrog: half kick, full drift (latent mass identity), half kick.
// When `cached` is supplied and valid it is used as the gradient at the
// current position and on return holds the gradient at the new position, so a
// trajectory of L steps costs L+1 gradient evaluations.
template <class Target>
bool leapfrog_step(const Target& tgt, PhaseState& s, double eps, const MassMatrix& mass,
                   typename Target::Eval* cached = nullptr) {
    typename Target::Eval local;
    typename Target::Eval& e = cached ? *cached : local;
    if (!e.ok) e = tgt.log_density_grad(s.theta, s.u);
    if (!e.ok) return false;
    for (std::size_t i = 0; i < s.p_theta.size(); ++i) s.p_theta[i] += 0.5 * eps * e.grad_theta[i];
    for (std::size_t j = 0; j < s.p_u.size(); ++j) s.p_u[j] += 0.5 * eps * e.grad_u[j];
    const std::vector<double> drift = mass.apply_inverse(s.p_theta);
    for (std::size_t i = 0; i < s.theta.size(); ++i) s.theta[i] += eps * drift[i];
    for (std::size_t j = 0; j < s.u.size(); ++j) s.u[j] += eps * s.p_u[j];
    e = tgt.log_density_grad(s.theta, s.u);
    if (!e.ok) return false;
    for (std::size_t i = 0; i < s.p_theta.size(); ++i) s.p_theta[i] += 0.5 * eps * e.grad_theta[i];
    for (std::size_t j = 0; j < s.p_u.size(); ++j) s.p_u[j] += 0.5 * eps * e.grad_u[j];
    return true;
}

// Splitting integrator: leapfrog on the theta block, exact rotation of the
// Gaussian (u, p_u) dynamics, with both full kicks taken at the midpoint.
// The u-kick uses the gradient of the log importance weight alone, which is
// the full target u-gradient plus u (the Gaussian part is handled exactly by
// the rotations). When the weight is constant in u the latent block is
// integrated without error for any step size.
template <class Target>
bool ld_step(const Target& tgt, PhaseState& s, double eps, const MassMatrix& mass) {
    const double c = std::cos(0.5 * eps), sn = std::sin(0.5 * eps);
    const auto rotate = [&](std::vector<double>& u, std::vector<double>& p) {
        for (std::size_t j = 0; j < u.size(); ++j) {
            const double uj = u[j], pj = p[j];
            u[j] = c * uj + sn * pj;
            p[j] = c * pj - sn * uj;
        }
    };
    std::vector<double> drift = mass.apply_inverse(s.p_theta);
    for (std::size_t i = 0; i < s.theta.size(); ++i) s.theta[i] += 0.5 * eps * drift[i];
    rotate(s.u, s.p_u);
    const typename Target::Eval e = tgt.log_density_grad(s.theta, s.u);
    if (!e.ok) return false;
    for (std::size_t j = 0; j < s.p_u.size(); ++j) s.p_u[j] += eps * (e.grad_u[j] + s.u[j]);
    for (std::size_t i = 0; i < s.p_theta.size(); ++i) s.p_theta[i] += eps * e.grad_theta[i];
    drift = mass.apply_inverse(s.p_theta);
    for (std::size_t i = 0; i < s.theta.size(); ++i) s.theta[i] += 0.5 * eps * drift[i];
    rotate(s.u, s.p_u);
    return true;
}

// Post-burn-in draws of one chain. Latent trajectories are stored alongside
// the raw coordinates since the map evaluation is already paid for.
struct ChainResult {
    std::vector<std::vector<double>> theta;  // unconstrained parameter draws
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> x;
    std::vector<int> accept;
    std::vector<double> energy_error;  // nan when the trajectory failed
    double accept_rate = 0.0;
    double wall_time_s = 0.0;  // sampling phase only
};

// Metropolis-corrected HMC with full momentum refresh each iteration.
// Proposals with non-finite or absurdly large |energy error| are rejected
// without evaluating the acceptance probability. Deterministic given
// (config.seed, chain_index).
template <class Target>
ChainResult run_chain(const Target& tgt, const HmcConfig& cfg, const MassMatrix& mass,
                      std::span<const double> theta_init, std::uint64_t chain_index = 0) {
    cfg.validate();
    Rng rng = Rng::for_chain(cfg.seed, chain_index);
    const double eps = cfg.effective_step();

    PhaseState s;
    s.theta.assign(theta_init.begin(), theta_init.end());
    s.u.resize(tgt.latent_dim());
    s.p_theta.assign(tgt.param_dim(), 0.0);
    s.p_u.assign(tgt.latent_dim(), 0.0);
    for (double& v : s.u) v = rng.normal();
    double cur = tgt.log_density(s.theta, s.u);
    for (int tries = 0; !std::isfinite(cur); ++tries) {
        // Shrink the initial disturbances toward the map center, which is a
        // valid configuration for every map.
        if (tries > 60) throw Error("failed to find a valid initial state");
        for (double& v : s.u) v *= 0.5;
        cur = tgt.log_density(s.theta, s.u);
    }
    std::vector<double> cur_x = tgt.latent(s.theta, s.u);

    const std::size_t kept = cfg.iters - cfg.burnin;
    ChainResult out;
    out.theta.reserve(kept);
    out.u.reserve(kept);
    out.x.reserve(kept);
    out.accept.reserve(kept);
    out.energy_error.reserve(kept);

    std::size_t accepted = 0;
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t iter = 0; iter < cfg.iters; ++iter) {
        if (iter == cfg.burnin) t0 = std::chrono::steady_clock::now();
        mass.sample_momentum(rng, s.p_theta);
        for (double& v : s.p_u) v = rng.normal();
        double k0 = 0.0;
        for (double p : s.p_u) k0 += p * p;
        const double h0 = -cur + mass.kinetic(s.p_theta) + 0.5 * k0;

        PhaseState prop = s;
        bool ok = true;
        if (cfg.integrator == Integrator::Leapfrog) {
            typename Target::Eval cache;
            for (std::size_t l = 0; l < cfg.steps && ok; ++l)
                ok = leapfrog_step(tgt, prop, eps, mass, &cache);
        } else {
            for (std::size_t l = 0; l < cfg.steps && ok; ++l) ok = ld_step(tgt, prop, eps, mass);
        }

        double dh = std::numeric_limits<double>::quiet_NaN();
        bool acc = false;
        if (ok) {
            const double v1 = tgt.log_density(prop.theta, prop.u);
            double k1 = 0.0;
            for (double p : prop.p_u) k1 += p * p;
            const double h1 =
                std::isfinite(v1) ? -v1 + mass.kinetic(prop.p_theta) + 0.5 * k1
                                  : std::numeric_limits<double>::infinity();
            dh = h1 - h0;
            if (std::isfinite(dh) && std::abs(dh) <= 1000.0)
                acc = dh <= 0.0 || rng.uniform() < std::exp(-dh);
            if (acc) {
                s.theta = std::move(prop.theta);
                s.u = std::move(prop.u);
                cur = v1;
                cur_x = tgt.latent(s.theta, s.u);
            }
        }

        if (iter >= cfg.burnin) {
            out.theta.push_back(s.theta);
            out.u.push_back(s.u);
            out.x.push_back(cur_x);
            out.accept.push_back(acc ? 1 : 0);
            out.energy_error.push_back(dh);
            if (acc) ++accepted;
        }
    }
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.accept_rate = static_cast<double>(accepted) / static_cast<double>(kept);
    return out;
}

// MAP estimate and parameter-block mass matrix. The objective is the target's
// deterministic likelihood approximation at u = 0 plus the parameter prior;
// it is maximized by BFGS with backtracking, and the mass is the negated
// central-difference Hessian of the exact objective gradient at the optimum.
// Fallbacks: non-positive-definite curvature degrades to its absolute
// diagonal, and an unconverged search degrades to the identity.
struct MassEstimate {
    std::vector<double> theta_hat;
    MassMatrix mass;
    bool converged = true;
    bool curvature_pd = true;
};

template <class Target>
MassEstimate estimate_mass_matrix(const Target& tgt, std::span<const double> theta0,
                                  std::size_t max_iters = 500, double grad_tol = 1e-6) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const std::size_t d = tgt.param_dim();
    const std::vector<double> zeros(tgt.latent_dim(), 0.0);
    const auto objective = [&](const VectorXd& x) {
        return tgt.log_density(std::span<const double>(x.data(), d), zeros);
    };
    const auto gradient = [&](const VectorXd& x) {
        return tgt.log_density_grad_theta(std::span<const double>(x.data(), d));
    };

    VectorXd x = Eigen::Map<const VectorXd>(theta0.data(), theta0.size());
    auto eval = gradient(x);
    if (!eval.ok)
        return {std::vector<double>(theta0.begin(), theta0.end()), MassMatrix::identity(d),
                false, false};
    VectorXd g = Eigen::Map<const VectorXd>(eval.grad_theta.data(), d);
    double f = eval.value;

    MatrixXd hinv = MatrixXd::Identity(d, d);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        if (g.norm() < grad_tol) break;
        VectorXd dir = hinv * g;
        if (dir.dot(g) <= 0.0) {
            hinv = MatrixXd::Identity(d, d);
            dir = g;
        }
        double alpha = 1.0;
        const double slope = g.dot(dir);
        VectorXd x_new;
        double f_new = -std::numeric_limits<double>::infinity();
        bool moved = false;
        for (int half = 0; half < 60; ++half) {
            x_new = x + alpha * dir;
            f_new = objective(x_new);
            if (std::isfinite(f_new) && f_new >= f + 1e-4 * alpha * slope) {
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) break;
        const auto eval_new = gradient(x_new);
        if (!eval_new.ok) break;
        const bool progressed = f_new > f + 1e-13 * (1.0 + std::abs(f));
        const VectorXd g_new = Eigen::Map<const VectorXd>(eval_new.grad_theta.data(), d);
        const VectorXd step = x_new - x;
        const VectorXd dg = g - g_new;  // gradient change of the negated objective
        const double sy = step.dot(dg);
        if (sy > 1e-12 * step.norm() * dg.norm()) {
            const double rho = 1.0 / sy;
            const MatrixXd left = MatrixXd::Identity(d, d) - rho * step * dg.transpose();
            hinv = left * hinv * left.transpose() + rho * step * step.transpose();
        }
        x = x_new;
        g = g_new;
        f = f_new;
        // The objective stopped moving at double precision: the iterate is the
        // optimum to within the arithmetic, regardless of the gradient norm.
        if (!progressed) break;
    }
    // Strict tolerance, then relative to the objective's own scale (an
    // absolute 1e-6 is unattainable for large |f| with stiff curvature).
    const bool converged = g.norm() <= grad_tol * (1.0 + std::abs(f));

    std::vector<double> theta_hat(x.data(), x.data() + d);
    if (!converged) return {std::move(theta_hat), MassMatrix::identity(d), false, false};

    const double h = 1e-4;
    MatrixXd hess(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const auto ep = gradient(xp);
        const auto em = gradient(xm);
        if (!ep.ok || !em.ok) return {std::move(theta_hat), MassMatrix::identity(d), true, false};
        for (std::size_t j = 0; j < d; ++j)
            hess(j, static_cast<Eigen::Index>(i)) =
                (ep.grad_theta[j] - em.grad_theta[j]) / (2.0 * h);
    }
    const MatrixXd curvature = -0.5 * (hess + hess.transpose());
    try {
        return {std::move(theta_hat), MassMatrix::from_dense(curvature), true, true};
    } catch (const NotPositiveDefinite&) {
    }
    MatrixXd diag = MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        const double v = std::abs(curvature(i, i));
        diag(i, i) = v > 0.0 ? v : 1.0;
    }
    try {
        return {std::move(theta_hat), MassMatrix::from_dense(diag), true, false};
    } catch (const NotPositiveDefinite&) {
        return {std::move(theta_hat), MassMatrix::identity(d), true, false};
    }
}

}  // namespace tmhmc
