#pragma once

// Minimal dense linear algebra for the estimation layer: symmetric solves via
// Cholesky, a cyclic Jacobi eigensolver for PSD checks and pseudo-inverses.
// Matrices are row-major flat vectors; dimensions here stay in the hundreds.

#include <cmath>
#include <cstddef>
#include <vector>

#include "ratercap/common.hpp"

namespace ratercap {

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::vector<double> mul(const std::vector<double>& x) const {
        std::vector<double> y(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += a[i * cols + j] * x[j];
            y[i] = s;
        }
        return y;
    }

    Matrix mul(const Matrix& b) const {
        Matrix c(rows, b.cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t k = 0; k < cols; ++k) {
                double v = a[i * cols + k];
                if (v == 0.0) continue;
                for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += v * b(k, j);
            }
        return c;
    }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }
};

// In-place Cholesky factorization A = L L^T. Returns false if A is not
// (numerically) positive definite.
inline bool cholesky(Matrix& m) {
    const std::size_t n = m.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= sqr(m(j, k));
        if (d <= 0.0 || !std::isfinite(d)) return false;
        d = std::sqrt(d);
        m(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= m(i, k) * m(j, k);
            m(i, j) = s / d;
            m(j, i) = 0.0;
        }
    }
    return true;
}

inline std::vector<double> cholesky_solve(const Matrix& chol, const std::vector<double>& b) {
    const std::size_t n = chol.rows;
    std::vector<double> y(b);
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (std::size_t k = 0; k < i; ++k) s -= chol(i, k) * y[k];
        y[i] = s / chol(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= chol(k, ii) * y[k];
        y[ii] = s / chol(ii, ii);
    }
    return y;
}

// Solves the SPD system A x = b; throws if A is not positive definite.
inline std::vector<double> solve_spd(Matrix A, const std::vector<double>& b) {
    if (!cholesky(A)) throw convergence_error("solve_spd: matrix not positive definite");
    return cholesky_solve(A, b);
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
// (ascending) and fills V with the matching eigenvectors in its columns.
inline std::vector<double> symmetric_eigen(Matrix A, Matrix& V) {
    const std::size_t n = A.rows;
    V = Matrix::identity(n);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += sqr(A(i, j));
        if (off < 1e-26 * (n * n)) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double tau = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> evals(n);
    for (std::size_t i = 0; i < n; ++i) evals[i] = A(i, i);
    // Sort ascending, permuting the eigenvector columns along.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = i;
        for (std::size_t j = i + 1; j < n; ++j)
            if (evals[j] < evals[m]) m = j;
        if (m != i) {
            std::swap(evals[i], evals[m]);
            for (std::size_t k = 0; k < n; ++k) std::swap(V(k, i), V(k, m));
        }
    }
    return evals;
}

// Moore-Penrose pseudo-inverse of a symmetric matrix, dropping eigenvalues
// below rel_tol * max|eigenvalue|. Sets *degenerate when anything was dropped
// or a negative eigenvalue was encountered.
inline Matrix symmetric_pinv(const Matrix& A, bool* degenerate = nullptr,
                             double rel_tol = 1e-12) {
    Matrix V;
    std::vector<double> ev = symmetric_eigen(A, V);
    double emax = 0.0;
    for (double e : ev) emax = std::max(emax, std::fabs(e));
    double tol = rel_tol * std::max(emax, 1e-300);
    bool dropped = false;
    const std::size_t n = A.rows;
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (ev[k] <= tol) {
            dropped = true;
            continue;
        }
        double inv = 1.0 / ev[k];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) += inv * V(i, k) * V(j, k);
    }
    if (degenerate) *degenerate = dropped;
    return out;
}

// Checks symmetric positive semidefiniteness within a small tolerance.
inline bool is_psd(const Matrix& A, double tol = 1e-9) {
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = i + 1; j < A.cols; ++j)
            if (std::fabs(A(i, j) - A(j, i)) > tol * (1.0 + std::fabs(A(i, j))))
                return false;
    Matrix V;
    Matrix S = A;
    std::vector<double> ev = symmetric_eigen(S, V);
    double emax = 0.0;
    for (double e : ev) emax = std::max(emax, std::fabs(e));
    return ev.empty() || ev.front() >= -tol * std::max(1.0, emax);
}

}  // namespace ratercap
