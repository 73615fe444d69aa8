#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "tmhmc/ad.hpp"
#include "tmhmc/eis.hpp"
#include "tmhmc/errors.hpp"
#include "tmhmc/linalg.hpp"
#include "tmhmc/models/common.hpp"

namespace tmhmc {

enum class MapKind { Prior, Laplace, Fisher, Eis };

// Which transport map a target uses, plus the map's tuning knobs. The common
// random numbers are carried here because the EIS fit must see the same block
// for every evaluation of a chain.
struct MapSpec {
    MapKind kind = MapKind::Laplace;
    std::size_t newton_steps = 0;  // Laplace refinement count
    std::size_t fit_sweeps = 0;    // EIS fitting sweeps
    std::size_t fit_paths = 0;     // EIS trajectories per sweep
    eis::CrnSet crn;               // EIS common random numbers

    static MapSpec prior_map() { return {MapKind::Prior, 0, 0, 0, {}}; }
    static MapSpec laplace_map(std::size_t refinements) {
        return {MapKind::Laplace, refinements, 0, 0, {}};
    }
    static MapSpec fisher_map() { return {MapKind::Fisher, 0, 0, 0, {}}; }
    static MapSpec eis_map(std::size_t sweeps, std::size_t paths, eis::CrnSet z) {
        return {MapKind::Eis, 0, sweeps, paths, std::move(z)};
    }
};

inline const char* map_kind_name(MapKind k) {
    switch (k) {
        case MapKind::Prior: return "prior";
        case MapKind::Laplace: return "laplace";
        case MapKind::Fisher: return "fisher";
        default: return "eis";
    }
}

// x = center + L^{-T} u with L the lower Cholesky factor of the precision G,
// i.e. the pushforward of N(0, I) is N(center, G^{-1}).
template <class T>
struct AffineMap {
    std::vector<T> center;
    TriChol<T> factor;

    std::vector<T> apply(std::span<const T> u) const {
        std::vector<T> x = solve_upper_from_chol(factor, u);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += center[j];
        return x;
    }

    T log_jacobian() const {
        using std::log;
        T acc(0.0);
        for (const T& l : factor.ldiag) acc -= log(l);
        return acc;
    }
};

namespace detail {

template <class T>
void require_finite(std::span<const T> h) {
    for (const T& v : h)
        if (!std::isfinite(scalar_value(v))) throw MapFailure("map iterate is not finite");
}

}  // namespace detail

// Gaussian approximation of p(x|y,theta) with mode estimate h and precision
// estimate G = L L'. The initial guess combines the state prior with the
// model's local Gaussian measurement summary; each refinement is a Newton
// ascent step on log[p(x|theta)p(y|x,theta)], so the returned factor is the
// curvature at the second-to-last iterate. Models without a closed-form state
// precision instead start from their own mode guess and use full joint
// curvature; models flagged newton_fixed_scale keep the initial factor
// throughout (approximate Newton, a single factorization).
template <class Model, class T>
AffineMap<T> build_laplace(const Model& m, std::span<const T> theta_star,
                           const typename Model::Data& d, std::size_t refinements) {
    const auto p = m.params(theta_star);
    try {
        if constexpr (Model::has_prior_summary) {
            const auto prior = m.prior_summary(p, d);
            const auto meas = m.measurement_summary(p, d);
            const std::size_t n = prior.h.size();
            SymTridiag<T> g = prior.g;
            for (std::size_t j = 0; j < n; ++j) g.diag[j] += meas.g.diag[j];
            std::vector<T> rhs = tridiag_matvec(prior.g, std::span<const T>(prior.h));
            for (std::size_t j = 0; j < n; ++j) rhs[j] += meas.g.diag[j] * meas.h[j];
            TriChol<T> l = chol_tridiag(g);
            std::vector<T> h = solve_llt(l, std::span<const T>(rhs));
            for (std::size_t k = 1; k <= refinements; ++k) {
                const std::vector<T> grad =
                    models::gauss_joint_grad(m, p, prior, std::span<const T>(h), d);
                if constexpr (!Model::newton_fixed_scale) {
                    for (std::size_t j = 0; j < n; ++j)
                        g.diag[j] = prior.g.diag[j] + m.meas_curv(p, j, h[j], d);
                    l = chol_tridiag(g);
                }
                const std::vector<T> step = solve_llt(l, std::span<const T>(grad));
                for (std::size_t j = 0; j < n; ++j) h[j] += step[j];
                detail::require_finite(std::span<const T>(h));
            }
            return {std::move(h), std::move(l)};
        } else {
            std::vector<T> h = m.initial_mode(p, d);
            std::vector<T> grad;
            SymTridiag<T> g;
            m.joint_grad_neg_hess(p, std::span<const T>(h), d, grad, g);
            TriChol<T> l = chol_tridiag(g);
            for (std::size_t k = 1; k <= refinements; ++k) {
                const std::vector<T> step = solve_llt(l, std::span<const T>(grad));
                for (std::size_t j = 0; j < h.size(); ++j) h[j] += step[j];
                detail::require_finite(std::span<const T>(h));
                if (k < refinements) {
                    m.joint_grad_neg_hess(p, std::span<const T>(h), d, grad, g);
                    l = chol_tridiag(g);
                }
            }
            return {std::move(h), std::move(l)};
        }
    } catch (const NotPositiveDefinite&) {
        throw MapFailure("cholesky factorization failed while building the map");
    }
}

// Precision = state prior precision + constant measurement Fisher information.
// Only defined for models whose measurement information does not depend on x;
// the center is either zero or the same combination as the Laplace initial
// guess, at the model's choosing.
template <class Model, class T>
AffineMap<T> build_fisher(const Model& m, std::span<const T> theta_star,
                          const typename Model::Data& d) {
    if constexpr (!Model::has_fisher) {
        throw Unsupported("fisher map is not defined for this model");
    } else {
        const auto p = m.params(theta_star);
        try {
            const auto prior = m.prior_summary(p, d);
            const std::size_t n = prior.h.size();
            const T info = m.fisher_info(p);
            SymTridiag<T> g = prior.g;
            for (std::size_t j = 0; j < n; ++j) g.diag[j] += info;
            TriChol<T> l = chol_tridiag(g);
            std::vector<T> h;
            if constexpr (Model::fisher_h_zero) {
                h.assign(n, T(0.0));
            } else {
                const auto meas = m.measurement_summary(p, d);
                std::vector<T> rhs = tridiag_matvec(prior.g, std::span<const T>(prior.h));
                for (std::size_t j = 0; j < n; ++j) rhs[j] += meas.g.diag[j] * meas.h[j];
                h = solve_llt(l, std::span<const T>(rhs));
            }
            return {std::move(h), std::move(l)};
        } catch (const NotPositiveDefinite&) {
            throw MapFailure("cholesky factorization failed while building the map");
        }
    }
}

// The model's own state recursion driven by u: x_j = mean_j + sd_j * u_j with
// the conditional prior moments. Returns the trajectory and the log Jacobian
// determinant sum(log sd_j).
template <class Model, class P, class T>
std::pair<std::vector<T>, T> prior_map_sample(const Model& m, const P& p, std::span<const T> u,
                                              const typename Model::Data& d) {
    using std::log;
    using std::sqrt;
    const std::size_t n = u.size();
    std::vector<T> x(n);
    T logjac(0.0);
    T mean(0.0), var(1.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (m.segment_start(j, d))
            m.state_init(p, j, d, mean, var);
        else
            m.state_trans(p, j, x[j - 1], d, mean, var);
        x[j] = mean + sqrt(var) * u[j];
        logjac += 0.5 * log(var);
    }
    return {std::move(x), logjac};
}

namespace detail {

template <class T>
T std_normal_logpdf_vec(std::span<const T> u) {
    T acc(0.0);
    for (const T& v : u) acc += v * v;
    return -0.5 * acc - 0.5 * models::log_2pi * static_cast<double>(u.size());
}

}  // namespace detail

// Log density of the modified target over (theta*, u). Affine and prior maps
// evaluate the Jacobian form
//   log|grad gamma(u)| + log p(theta*) + log p(y|x,theta) + log p(x|theta)
// at x = gamma(u), rebuilding the map from the current theta* on every call;
// the EIS map evaluates the equivalent importance-weight form
//   log N(u|0,I) + log p(theta*) + log omega(u).
template <class Model, class T>
T modified_log_target(const Model& m, const MapSpec& spec, std::span<const T> theta_star,
                      std::span<const T> u, const typename Model::Data& d) {
    const auto p = m.params(theta_star);
    switch (spec.kind) {
        case MapKind::Prior: {
            const auto [x, logjac] = prior_map_sample(m, p, u, d);
            return logjac + m.log_prior(p) +
                   models::log_state_density(m, p, std::span<const T>(x), d) +
                   models::log_measurement_density(m, p, std::span<const T>(x), d);
        }
        case MapKind::Laplace:
        case MapKind::Fisher: {
            const AffineMap<T> map = spec.kind == MapKind::Laplace
                                         ? build_laplace(m, theta_star, d, spec.newton_steps)
                                         : build_fisher(m, theta_star, d);
            const std::vector<T> x = map.apply(u);
            return map.log_jacobian() + m.log_prior(p) +
                   models::log_state_density(m, p, std::span<const T>(x), d) +
                   models::log_measurement_density(m, p, std::span<const T>(x), d);
        }
        default: {
            const auto kernels = eis::eis_fit(m, theta_star, d, spec.crn, spec.fit_sweeps,
                                              spec.fit_paths);
            return detail::std_normal_logpdf_vec(u) + m.log_prior(p) +
                   eis::eis_log_weight(m, theta_star, kernels, u, d);
        }
    }
}

// Both algebraically equivalent forms of the modified target, computed
// through independent code paths: the Jacobian form as above, and the
// importance-weight form log N(u|0,I) + log p(theta*) + log omega with
// log omega = log p(y|x)p(x) - log m(x) evaluated literally at x = gamma(u).
// Their difference being constant (zero) in u is the change-of-variables
// identity.
template <class T>
struct TargetForms {
    T jacobian_form;
    T weight_form;
};

template <class Model, class T>
TargetForms<T> both_target_forms(const Model& m, const MapSpec& spec,
                                 std::span<const T> theta_star, std::span<const T> u,
                                 const typename Model::Data& d) {
    const auto p = m.params(theta_star);
    const T log_prior = m.log_prior(p);
    const T ref_density = detail::std_normal_logpdf_vec(u);
    switch (spec.kind) {
        case MapKind::Prior: {
            const auto [x, logjac] = prior_map_sample(m, p, u, d);
            const std::span<const T> xs(x);
            const T state = models::log_state_density(m, p, xs, d);
            const T meas = models::log_measurement_density(m, p, xs, d);
            const T log_m = state;  // the importance density is the state prior itself
            return {logjac + log_prior + state + meas,
                    ref_density + log_prior + (state + meas - log_m)};
        }
        case MapKind::Laplace:
        case MapKind::Fisher: {
            const AffineMap<T> map = spec.kind == MapKind::Laplace
                                         ? build_laplace(m, theta_star, d, spec.newton_steps)
                                         : build_fisher(m, theta_star, d);
            const std::vector<T> x = map.apply(u);
            const std::span<const T> xs(x);
            const T state = models::log_state_density(m, p, xs, d);
            const T meas = models::log_measurement_density(m, p, xs, d);
            const SymTridiag<T> g = reconstruct_from_chol(map.factor);
            std::vector<T> centered(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) centered[j] = x[j] - map.center[j];
            const T log_m = 0.5 * log_det_from_chol(map.factor) -
                            0.5 * models::log_2pi * static_cast<double>(x.size()) -
                            0.5 * tridiag_quad_form(g, std::span<const T>(centered));
            return {map.log_jacobian() + log_prior + state + meas,
                    ref_density + log_prior + (state + meas - log_m)};
        }
        default: {
            const auto kernels = eis::eis_fit(m, theta_star, d, spec.crn, spec.fit_sweeps,
                                              spec.fit_paths);
            auto [x, logjac] = eis::eis_forward_sample(m, theta_star, kernels, u, d);
            const std::span<const T> xs(x);
            const T state = models::log_state_density(m, p, xs, d);
            const T meas = models::log_measurement_density(m, p, xs, d);
            const T logweight = eis::eis_log_weight(m, theta_star, kernels, u, d);
            return {logjac + log_prior + state + meas, ref_density + log_prior + logweight};
        }
    }
}

// x = gamma(u) at double precision, for storing latent draws alongside the
// chain.
template <class Model>
std::vector<double> apply_map(const Model& m, const MapSpec& spec,
                              std::span<const double> theta_star, std::span<const double> u,
                              const typename Model::Data& d) {
    switch (spec.kind) {
        case MapKind::Prior: {
            const auto p = m.params(theta_star);
            return prior_map_sample(m, p, u, d).first;
        }
        case MapKind::Laplace:
            return build_laplace(m, theta_star, d, spec.newton_steps).apply(u);
        case MapKind::Fisher:
            return build_fisher(m, theta_star, d).apply(u);
        default: {
            const auto kernels = eis::eis_fit(m, theta_star, d, spec.crn, spec.fit_sweeps,
                                              spec.fit_paths);
            return eis::eis_forward_sample(m, theta_star, kernels, u, d).first;
        }
    }
}

// Glue between a model/map pair and the samplers: plain-double target values
// for energies, tape-backed gradients for the integrators. Recoverable
// evaluation failures (map breakdown, domain exits, non-finite results)
// surface as value -inf / ok = false, which the samplers treat as an
// automatic rejection.
template <class Model>
class ModifiedTarget {
  public:
    ModifiedTarget(Model model, typename Model::Data data, MapSpec spec)
        : model_(std::move(model)), data_(std::move(data)), spec_(std::move(spec)) {}

    std::size_t param_dim() const { return model_.n_params(); }
    std::size_t latent_dim() const { return model_.latent_dim(data_); }

    const Model& model() const { return model_; }
    const typename Model::Data& data() const { return data_; }
    const MapSpec& spec() const { return spec_; }

    double log_density(std::span<const double> theta_star, std::span<const double> u) const {
        try {
            const double v = modified_log_target(model_, spec_, theta_star, u, data_);
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    }

    struct Eval {
        double value = -std::numeric_limits<double>::infinity();
        std::vector<double> grad_theta, grad_u;
        bool ok = false;
    };

    Eval log_density_grad(std::span<const double> theta_star, std::span<const double> u) const {
        const std::size_t dt = theta_star.size();
        std::vector<double> joint(dt + u.size());
        std::copy(theta_star.begin(), theta_star.end(), joint.begin());
        std::copy(u.begin(), u.end(), joint.begin() + dt);
        Eval out;
        try {
            ad::GradResult res = ad::grad_eval(
                [&](auto q) {
                    return modified_log_target(model_, spec_, q.subspan(0, dt), q.subspan(dt),
                                               data_);
                },
                std::span<const double>(joint));
            out.value = res.value;
            out.grad_theta.assign(res.gradient.begin(), res.gradient.begin() + dt);
            out.grad_u.assign(res.gradient.begin() + dt, res.gradient.end());
            out.ok = true;
        } catch (const Error&) {
            out = Eval{};
        }
        return out;
    }

    // Value and theta-gradient at u = 0: the objective maximized for the MAP
    // estimate and differenced for the mass matrix.
    Eval log_density_grad_theta(std::span<const double> theta_star) const {
        Eval out;
        try {
            ad::GradResult res = ad::grad_eval(
                [&](auto q) {
                    using T = std::remove_cvref_t<decltype(q[0])>;
                    const std::vector<T> zero(latent_dim(), T(0.0));
                    return modified_log_target(model_, spec_, std::span<const T>(q),
                                               std::span<const T>(zero), data_);
                },
                theta_star);
            out.value = res.value;
            out.grad_theta = std::move(res.gradient);
            out.ok = true;
        } catch (const Error&) {
            out = Eval{};
        }
        return out;
    }

    std::vector<double> latent(std::span<const double> theta_star,
                               std::span<const double> u) const {
        return apply_map(model_, spec_, theta_star, u, data_);
    }

  private:
    Model model_;
    typename Model::Data data_;
    MapSpec spec_;
};

}  // namespace tmhmc
