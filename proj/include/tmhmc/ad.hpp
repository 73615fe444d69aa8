#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tmhmc/errors.hpp"

namespace tmhmc::ad {

// Reverse-mode tape. Nodes are pushed in evaluation order; each records up to
// two parents with the local partial derivatives, so one backward sweep
// accumulates the full gradient. One tape is active per thread at a time.
class Tape {
  public:
    struct Node {
        double d1, d2;
        std::int32_t p1, p2;
    };

    std::int32_t leaf() {
        nodes_.push_back({0.0, 0.0, -1, -1});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }
    std::int32_t push1(std::int32_t p, double d) {
        nodes_.push_back({d, 0.0, p, -1});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }
    std::int32_t push2(std::int32_t p1, std::int32_t p2, double d1, double d2) {
        nodes_.push_back({d1, d2, p1, p2});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    void reset() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    // Adjoint sweep seeded at node y; afterwards adjoint(i) holds dy/dnode_i.
    void backward(std::int32_t y) {
        adj_.assign(nodes_.size(), 0.0);
        adj_[static_cast<std::size_t>(y)] = 1.0;
        for (std::int32_t i = y; i >= 0; --i) {
            const double a = adj_[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.p1 >= 0) adj_[static_cast<std::size_t>(n.p1)] += n.d1 * a;
            if (n.p2 >= 0) adj_[static_cast<std::size_t>(n.p2)] += n.d2 * a;
        }
    }
    double adjoint(std::int32_t i) const { return adj_[static_cast<std::size_t>(i)]; }

    static Tape*& active() {
        thread_local Tape* t = nullptr;
        return t;
    }

  private:
    std::vector<Node> nodes_;
    std::vector<double> adj_;
};

// Active scalar: a value plus its tape node. id < 0 marks a constant that is
// never recorded, so plain numeric literals in templated code cost nothing.
struct Var {
    double v = 0.0;
    std::int32_t id = -1;

    Var() = default;
    Var(double x) : v(x) {}
    Var(double x, std::int32_t i) : v(x), id(i) {}
};

inline double scalar_value(const Var& x) { return x.v; }

inline Var unary(double v, const Var& a, double da) {
    if (a.id < 0) return Var(v);
    return Var(v, Tape::active()->push1(a.id, da));
}
inline Var binary(double v, const Var& a, const Var& b, double da, double db) {
    if (a.id < 0) return unary(v, b, db);
    if (b.id < 0) return Var(v, Tape::active()->push1(a.id, da));
    return Var(v, Tape::active()->push2(a.id, b.id, da, db));
}

inline Var operator+(const Var& a, const Var& b) { return binary(a.v + b.v, a, b, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return binary(a.v - b.v, a, b, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return binary(a.v * b.v, a, b, b.v, a.v); }
inline Var operator/(const Var& a, const Var& b) {
    const double r = a.v / b.v;
    return binary(r, a, b, 1.0 / b.v, -r / b.v);
}

inline Var operator+(const Var& a, double b) { return unary(a.v + b, a, 1.0); }
inline Var operator+(double a, const Var& b) { return unary(a + b.v, b, 1.0); }
inline Var operator-(const Var& a, double b) { return unary(a.v - b, a, 1.0); }
inline Var operator-(double a, const Var& b) { return unary(a - b.v, b, -1.0); }
inline Var operator*(const Var& a, double b) { return unary(a.v * b, a, b); }
inline Var operator*(double a, const Var& b) { return unary(a * b.v, b, a); }
inline Var operator/(const Var& a, double b) { return unary(a.v / b, a, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
    const double r = a / b.v;
    return unary(r, b, -r / b.v);
}

inline Var operator-(const Var& a) { return unary(-a.v, a, -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }
inline Var& operator+=(Var& a, double b) { return a = a + b; }
inline Var& operator-=(Var& a, double b) { return a = a - b; }
inline Var& operator*=(Var& a, double b) { return a = a * b; }
inline Var& operator/=(Var& a, double b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator<(const Var& a, double b) { return a.v < b; }
inline bool operator>(const Var& a, double b) { return a.v > b; }
inline bool operator<=(const Var& a, double b) { return a.v <= b; }
inline bool operator>=(const Var& a, double b) { return a.v >= b; }
inline bool operator<(double a, const Var& b) { return a < b.v; }
inline bool operator>(double a, const Var& b) { return a > b.v; }

inline Var exp(const Var& a) {
    const double e = std::exp(a.v);
    return unary(e, a, e);
}
inline Var log(const Var& a) { return unary(std::log(a.v), a, 1.0 / a.v); }
inline Var log1p(const Var& a) { return unary(std::log1p(a.v), a, 1.0 / (1.0 + a.v)); }
inline Var sqrt(const Var& a) {
    const double s = std::sqrt(a.v);
    return unary(s, a, 0.5 / s);
}
inline Var sin(const Var& a) { return unary(std::sin(a.v), a, std::cos(a.v)); }
inline Var cos(const Var& a) { return unary(std::cos(a.v), a, -std::sin(a.v)); }
inline Var tan(const Var& a) {
    const double t = std::tan(a.v);
    return unary(t, a, 1.0 + t * t);
}
inline Var tanh(const Var& a) {
    const double t = std::tanh(a.v);
    return unary(t, a, 1.0 - t * t);
}
inline Var atanh(const Var& a) { return unary(std::atanh(a.v), a, 1.0 / (1.0 - a.v * a.v)); }
inline Var atan(const Var& a) { return unary(std::atan(a.v), a, 1.0 / (1.0 + a.v * a.v)); }
inline Var lgamma(const Var& a) {
    // boost throws its own overflow type at the digamma poles; translate it so
    // the sampler's reject-on-failure machinery sees a recoverable error.
    double d;
    try {
        d = boost::math::digamma(a.v);
    } catch (const std::exception&) {
        throw NonFinite("lgamma derivative at a pole");
    }
    return unary(std::lgamma(a.v), a, d);
}
inline Var pow(const Var& a, double c) {
    return unary(std::pow(a.v, c), a, c * std::pow(a.v, c - 1.0));
}
inline Var pow(double c, const Var& a) {
    const double p = std::pow(c, a.v);
    return unary(p, a, p * std::log(c));
}
inline Var pow(const Var& a, const Var& b) {
    const double p = std::pow(a.v, b.v);
    return binary(p, a, b, b.v * std::pow(a.v, b.v - 1.0), p * std::log(a.v));
}
inline Var fabs(const Var& a) { return unary(std::fabs(a.v), a, a.v < 0.0 ? -1.0 : 1.0); }

// Value plus exact gradient of a scalar function at x.
struct GradResult {
    double value = 0.0;
    std::vector<double> gradient;
};

inline Tape& local_tape() {
    thread_local Tape t;
    return t;
}

// Evaluate f (a functor generic over the scalar type, taking a span of
// scalars) on an AD tape and return value and gradient. Throws NonFinite if
// the value or any gradient entry is NaN/Inf; primitive domain failures
// (Cholesky, log of a negative) propagate as their own exception types.
template <class F>
GradResult grad_eval(F&& f, std::span<const double> x) {
    Tape& tape = local_tape();
    if (Tape::active() != nullptr) throw Error("nested gradient evaluations are not supported");
    tape.reset();
    Tape::active() = &tape;
    struct Guard {
        ~Guard() { Tape::active() = nullptr; }
    } guard;

    std::vector<Var> xs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = Var(x[i], tape.leaf());

    const Var y = f(std::span<const Var>(xs));

    GradResult r;
    r.value = y.v;
    if (!std::isfinite(r.value)) throw NonFinite();
    r.gradient.assign(x.size(), 0.0);
    if (y.id >= 0) {
        tape.backward(y.id);
        for (std::size_t i = 0; i < x.size(); ++i) {
            r.gradient[i] = tape.adjoint(static_cast<std::int32_t>(i));
            if (!std::isfinite(r.gradient[i])) throw NonFinite("non-finite gradient entry");
        }
    }
    return r;
}

// Max over coordinates of |analytic - central difference| / (1 + |analytic|).
// f must also be callable on plain doubles (it is generic in the scalar type).
template <class F>
double check_grad_fd(F&& f, std::span<const double> x, double step) {
    if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
    const GradResult g = grad_eval(f, x);
    std::vector<double> xp(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + step;
        const double fp = f(std::span<const double>(xp));
        xp[i] = x[i] - step;
        const double fm = f(std::span<const double>(xp));
        xp[i] = x[i];
        const double fd = (fp - fm) / (2.0 * step);
        const double err = std::fabs(g.gradient[i] - fd) / (1.0 + std::fabs(g.gradient[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace tmhmc::ad
