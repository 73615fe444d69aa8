#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tmhmc/errors.hpp"

namespace tmhmc {

// Underlying double value of a (possibly AD-active) scalar; the AD type adds
// its own overload, found through ADL from the templates below.
inline double scalar_value(double x) { return x; }

// Symmetric tridiagonal matrix, stored as two flat vectors. Symmetry is
// structural; positive definiteness is only established by a successful
// factorization.
template <class T>
struct SymTridiag {
    std::vector<T> diag;     // length D
    std::vector<T> offdiag;  // length D-1 (sub/super diagonal)

    std::size_t dim() const { return diag.size(); }
};

// Lower-bidiagonal Cholesky factor L of a SymTridiag, L*L^T = G.
template <class T>
struct TriChol {
    std::vector<T> ldiag;  // length D, strictly positive
    std::vector<T> lsub;   // length D-1

    std::size_t dim() const { return ldiag.size(); }
};

// O(D) Cholesky of a symmetric tridiagonal matrix. A pivot that is non-finite
// or below 1e-300 marks the matrix as numerically not positive definite; the
// caller treats the surrounding map/proposal as invalid.
template <class T>
TriChol<T> chol_tridiag(const SymTridiag<T>& g) {
    const std::size_t n = g.dim();
    TriChol<T> l;
    l.ldiag.resize(n);
    l.lsub.resize(n > 0 ? n - 1 : 0);
    T pivot = g.diag[0];
    for (std::size_t i = 0;; ++i) {
        const double pv = scalar_value(pivot);
        if (!std::isfinite(pv) || pv < 1e-300) throw NotPositiveDefinite(i);
        using std::sqrt;
        l.ldiag[i] = sqrt(pivot);
        if (i + 1 == n) break;
        l.lsub[i] = g.offdiag[i] / l.ldiag[i];
        pivot = g.diag[i + 1] - l.lsub[i] * l.lsub[i];
    }
    return l;
}

// Back-substitution for L^T v = u.
template <class T>
std::vector<T> solve_upper_from_chol(const TriChol<T>& l, std::span<const T> u) {
    const std::size_t n = l.dim();
    std::vector<T> v(n);
    v[n - 1] = u[n - 1] / l.ldiag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        v[i] = (u[i] - l.lsub[i] * v[i + 1]) / l.ldiag[i];
    }
    return v;
}

// Forward substitution for L v = b.
template <class T>
std::vector<T> solve_lower_from_chol(const TriChol<T>& l, std::span<const T> b) {
    const std::size_t n = l.dim();
    std::vector<T> v(n);
    v[0] = b[0] / l.ldiag[0];
    for (std::size_t i = 1; i < n; ++i) {
        v[i] = (b[i] - l.lsub[i - 1] * v[i - 1]) / l.ldiag[i];
    }
    return v;
}

// Full solve G v = b through both triangular sweeps.
template <class T>
std::vector<T> solve_llt(const TriChol<T>& l, std::span<const T> b) {
    std::vector<T> w = solve_lower_from_chol(l, b);
    return solve_upper_from_chol(l, std::span<const T>(w));
}

// log|G| = 2 * sum log(ldiag).
template <class T>
T log_det_from_chol(const TriChol<T>& l) {
    using std::log;
    T acc = T(0);
    for (const T& d : l.ldiag) acc += log(d);
    return T(2) * acc;
}

// y = G x for a symmetric tridiagonal G.
template <class T>
std::vector<T> tridiag_matvec(const SymTridiag<T>& g, std::span<const T> x) {
    const std::size_t n = g.dim();
    std::vector<T> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        T acc = g.diag[i] * x[i];
        if (i > 0) acc += g.offdiag[i - 1] * x[i - 1];
        if (i + 1 < n) acc += g.offdiag[i] * x[i + 1];
        y[i] = acc;
    }
    return y;
}

// x^T G x without materializing G x.
template <class T>
T tridiag_quad_form(const SymTridiag<T>& g, std::span<const T> x) {
    const std::size_t n = g.dim();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        acc += g.diag[i] * x[i] * x[i];
        if (i + 1 < n) acc += T(2) * g.offdiag[i] * x[i] * x[i + 1];
    }
    return acc;
}

// Rebuild the symmetric tridiagonal product L L^T (testing aid).
template <class T>
SymTridiag<T> reconstruct_from_chol(const TriChol<T>& l) {
    const std::size_t n = l.dim();
    SymTridiag<T> g;
    g.diag.resize(n);
    g.offdiag.resize(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
        g.diag[i] = l.ldiag[i] * l.ldiag[i];
        if (i > 0) g.diag[i] += l.lsub[i - 1] * l.lsub[i - 1];
        if (i + 1 < n) g.offdiag[i] = l.lsub[i] * l.ldiag[i];
    }
    return g;
}

// Least squares min ||A c - b|| by Householder QR on the (n x k) design,
// n >= k. A and b are consumed in place. Rank deficiency (a vanishing R
// diagonal relative to the largest column norm) raises SingularRegression.
template <class T>
std::vector<T> least_squares_qr(std::vector<std::vector<T>>& a, std::vector<T>& b) {
    using std::sqrt;
    const std::size_t n = b.size();
    const std::size_t k = a.size();
    double scale = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += scalar_value(a[j][i]) * scalar_value(a[j][i]);
        scale = std::max(scale, std::sqrt(s));
    }
    if (!(scale > 0.0)) throw SingularRegression("zero design matrix");

    std::vector<T> rdiag(k);
    std::vector<T> v(n);
    for (std::size_t j = 0; j < k; ++j) {
        T s2 = T(0);
        for (std::size_t i = j; i < n; ++i) s2 += a[j][i] * a[j][i];
        if (std::sqrt(scalar_value(s2)) < 1e-13 * scale)
            throw SingularRegression("rank-deficient design matrix");
        T norm = sqrt(s2);
        if (scalar_value(a[j][j]) > 0.0) norm = -norm;  // stable reflector sign
        rdiag[j] = norm;
        T vtv = s2 - a[j][j] * norm;  // = ||v||^2 / 2 with v = col - norm*e_j
        v[j] = a[j][j] - norm;
        for (std::size_t i = j + 1; i < n; ++i) v[i] = a[j][i];
        for (std::size_t c = j + 1; c < k; ++c) {
            T dot = T(0);
            for (std::size_t i = j; i < n; ++i) dot += v[i] * a[c][i];
            const T f = dot / vtv;
            for (std::size_t i = j; i < n; ++i) a[c][i] -= f * v[i];
        }
        T dot = T(0);
        for (std::size_t i = j; i < n; ++i) dot += v[i] * b[i];
        const T f = dot / vtv;
        for (std::size_t i = j; i < n; ++i) b[i] -= f * v[i];
    }

    std::vector<T> c(k);
    for (std::size_t j = k; j-- > 0;) {
        T acc = b[j];
        for (std::size_t m = j + 1; m < k; ++m) acc -= a[m][j] * c[m];
        c[j] = acc / rdiag[j];
    }
    return c;
}

}  // namespace tmhmc
