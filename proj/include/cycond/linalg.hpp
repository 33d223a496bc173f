#pragma once
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

// Dense helpers for the tiny systems that show up around low-dimensional
// flows (d <= 8 or so).  Row-major storage throughout.

namespace cycond::la {

// PA = LU with partial pivoting, in place.  Returns false when a pivot
// column is numerically zero (singular matrix).
inline bool lu_factor(int n, double* a, int* piv) {
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::fabs(a[k * n + k]);
        for (int i = k + 1; i < n; ++i) {
            double v = std::fabs(a[i * n + k]);
            if (v > best) {
                best = v;
                p = i;
            }
        }
        if (best == 0.0) return false;
        piv[k] = p;
        if (p != k)
            for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
        const double inv = 1.0 / a[k * n + k];
        for (int i = k + 1; i < n; ++i) {
            const double f = a[i * n + k] * inv;
            a[i * n + k] = f;
            for (int j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
        }
    }
    return true;
}

inline void lu_solve_factored(int n, const double* a, const int* piv,
                              double* b) {
    for (int k = 0; k < n; ++k) {
        if (piv[k] != k) std::swap(b[k], b[piv[k]]);
        for (int i = k + 1; i < n; ++i) b[i] -= a[i * n + k] * b[k];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) b[i] -= a[i * n + j] * b[j];
        b[i] /= a[i * n + i];
    }
}

// Solves a x = b, destroying a; b holds the solution on success.
inline bool lu_solve(int n, double* a, double* b) {
    std::vector<int> piv(n);
    if (!lu_factor(n, a, piv.data())) return false;
    lu_solve_factored(n, a, piv.data(), b);
    return true;
}

// Solves a^T x = b without forming the transpose (a is destroyed).
inline bool lu_solve_transposed(int n, double* a, double* b) {
    std::vector<double> at(size_t(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) at[size_t(j) * n + i] = a[size_t(i) * n + j];
    return lu_solve(n, at.data(), b);
}

// Determinant via LU (destroys a).  Returns 0 on singular input.
inline double lu_det(int n, double* a) {
    std::vector<int> piv(n);
    if (!lu_factor(n, a, piv.data())) return 0.0;
    double d = 1.0;
    for (int k = 0; k < n; ++k) {
        d *= a[k * n + k];
        if (piv[k] != k) d = -d;
    }
    return d;
}

inline void mat_vec(int n, int m, const double* a, const double* x,
                    double* y) {
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += a[size_t(i) * m + j] * x[j];
        y[i] = s;
    }
}

} // namespace cycond::la
