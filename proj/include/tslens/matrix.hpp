#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "tslens/common.hpp"

namespace tslens {

/// Dense row-major matrix of 64-bit floats. All analysis math runs in double
/// even where the artifacts on disk are float32; CKA/SVCCA are ratio
/// statistics and cancel badly in single precision.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            throw ShapeMismatch("matrix data length does not match rows*cols");
        for (double v : data)
            if (!std::isfinite(v)) throw Error("matrix entry not finite");
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeMismatch("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* crow = &c.data[i * b.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// aT * b without materializing the transpose.
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeMismatch("matmul_at_b: row counts differ");
    Matrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = &c.data[i * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

/// Subtract each column's mean; every column of the result sums to ~0.
inline Matrix center_columns(const Matrix& m) {
    if (m.rows < 1) throw ShapeMismatch("center_columns: need at least one row");
    Matrix out = m;
    for (std::size_t j = 0; j < m.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) mean += m(i, j);
        mean /= static_cast<double>(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) out(i, j) -= mean;
    }
    return out;
}

struct SvdResult {
    Matrix u;               // m x r, orthonormal columns
    std::vector<double> s;  // r, non-increasing, non-negative
    Matrix vt;              // r x n, orthonormal rows
};

namespace detail {

// One-sided Jacobi on an m x n matrix with m >= n: rotate column pairs until
// all are mutually orthogonal, then read off norms as singular values.
inline SvdResult svd_tall(Matrix a) {
    const std::size_t m = a.rows, n = a.cols;
    Matrix v = Matrix::identity(n);
    const int max_sweeps = 60;
    const double tol = 1e-14;

    // Columns at the numeric noise floor sit below the rank tolerance; trying
    // to orthogonalize them against each other never settles.
    double frob_sq = 0.0;
    for (double x : a.data) frob_sq += x * x;
    const double col_floor_sq = frob_sq * 1e-28;

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if (app <= col_floor_sq || aqq <= col_floor_sq) continue;
                if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                converged = false;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    a(i, p) = cs * x - sn * y;
                    a(i, q) = sn * x + cs * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = v(i, p), y = v(i, q);
                    v(i, p) = cs * x - sn * y;
                    v(i, q) = sn * x + cs * y;
                }
            }
        }
    }
    if (!converged) throw NonConvergence("svd: Jacobi sweeps did not converge");

    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult r;
    r.u = Matrix(m, n);
    r.s.resize(n);
    r.vt = Matrix(n, n);
    const double smax = sigma.empty() ? 0.0 : sigma[order[0]];
    const double rank_tol = smax * 1e-13;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        r.s[k] = sigma[j];
        for (std::size_t i = 0; i < n; ++i) r.vt(k, i) = v(i, j);
        if (sigma[j] > rank_tol && sigma[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) r.u(i, k) = a(i, j) / sigma[j];
        } else {
            // Null column: complete U with an orthonormal vector so the
            // orthonormal-columns invariant holds even for rank-deficient input.
            for (std::size_t seed = 0; seed < m; ++seed) {
                for (std::size_t i = 0; i < m; ++i) r.u(i, k) = (i == seed) ? 1.0 : 0.0;
                for (std::size_t prev = 0; prev < k; ++prev) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += r.u(i, prev) * r.u(i, k);
                    for (std::size_t i = 0; i < m; ++i) r.u(i, k) -= dot * r.u(i, prev);
                }
                double nrm = 0.0;
                for (std::size_t i = 0; i < m; ++i) nrm += r.u(i, k) * r.u(i, k);
                nrm = std::sqrt(nrm);
                if (nrm > 0.5) {
                    for (std::size_t i = 0; i < m; ++i) r.u(i, k) /= nrm;
                    break;
                }
            }
        }
    }
    return r;
}

}  // namespace detail

/// Thin SVD, u * diag(s) * vt == input to ~1e-8 relative Frobenius error.
inline SvdResult svd(const Matrix& m) {
    if (m.rows < 1 || m.cols < 1) throw ShapeMismatch("svd: empty matrix");
    if (m.rows >= m.cols) return detail::svd_tall(m);
    SvdResult t = detail::svd_tall(m.transposed());
    SvdResult r;
    r.u = t.vt.transposed();
    r.s = std::move(t.s);
    r.vt = t.u.transposed();
    return r;
}

namespace detail {

// Cholesky solve of (g) X = rhs for symmetric positive definite g, in place.
// Returns false if a pivot collapses (numerically singular system).
inline bool cholesky_solve(Matrix g, Matrix& rhs) {
    const std::size_t p = g.rows;
    double scale = 0.0;
    for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, std::abs(g(i, i)));
    for (std::size_t j = 0; j < p; ++j) {
        double d = g(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= g(j, k) * g(j, k);
        if (!(d > scale * 1e-13)) return false;
        d = std::sqrt(d);
        g(j, j) = d;
        for (std::size_t i = j + 1; i < p; ++i) {
            double v = g(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= g(i, k) * g(j, k);
            g(i, j) = v / d;
        }
    }
    // forward then back substitution, column by column of rhs
    for (std::size_t c = 0; c < rhs.cols; ++c) {
        for (std::size_t i = 0; i < p; ++i) {
            double v = rhs(i, c);
            for (std::size_t k = 0; k < i; ++k) v -= g(i, k) * rhs(k, c);
            rhs(i, c) = v / g(i, i);
        }
        for (std::size_t ii = p; ii-- > 0;) {
            double v = rhs(ii, c);
            for (std::size_t k = ii + 1; k < p; ++k) v -= g(k, ii) * rhs(k, c);
            rhs(ii, c) = v / g(ii, ii);
        }
    }
    return true;
}

}  // namespace detail

/// Ridge least squares: X = argmin |aX - b|_F^2 + alpha |X|_F^2 via the
/// normal equations (aT a + alpha I) X = aT b.
inline Matrix solve_ridge(const Matrix& a, const Matrix& b, double alpha) {
    if (a.rows != b.rows) throw ShapeMismatch("solve_ridge: row counts differ");
    if (alpha < 0.0) throw Error("solve_ridge: alpha must be non-negative");
    Matrix g = matmul_at_b(a, a);
    for (std::size_t i = 0; i < g.rows; ++i) g(i, i) += alpha;
    Matrix x = matmul_at_b(a, b);
    if (!detail::cholesky_solve(std::move(g), x)) {
        if (alpha == 0.0) throw SingularSystem("solve_ridge: aT a is numerically singular");
        throw SingularSystem("solve_ridge: ill-conditioned even with ridge");
    }
    return x;
}

struct PcaResult {
    Matrix components;                      // k x cols, orthonormal rows
    Matrix projected;                       // rows x k
    std::vector<double> explained_variance; // non-increasing
    bool rank_deficient = false;            // fewer than k usable components
};

/// PCA of row-samples. Component signs are pinned (largest-magnitude entry
/// positive) so outputs are deterministic across implementations.
inline PcaResult pca(const Matrix& m, std::size_t k) {
    if (m.rows < 2) throw ShapeMismatch("pca: need at least two rows");
    if (k > std::min(m.rows - 1, m.cols)) throw ShapeMismatch("pca: k too large");
    Matrix centered = center_columns(m);
    SvdResult decomp = svd(centered);

    const double smax = decomp.s.empty() ? 0.0 : decomp.s[0];
    const double tol = smax * 1e-12;
    std::size_t usable = 0;
    while (usable < k && usable < decomp.s.size() && decomp.s[usable] > tol) ++usable;

    PcaResult r;
    r.rank_deficient = usable < k;
    r.components = Matrix(usable, m.cols);
    r.explained_variance.resize(usable);
    for (std::size_t c = 0; c < usable; ++c) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            const double mag = std::abs(decomp.vt(c, j));
            if (mag > best) { best = mag; arg = j; }
        }
        const double sign = decomp.vt(c, arg) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < m.cols; ++j) r.components(c, j) = sign * decomp.vt(c, j);
        r.explained_variance[c] =
            decomp.s[c] * decomp.s[c] / static_cast<double>(m.rows - 1);
    }
    r.projected = matmul(centered, r.components.transposed());
    return r;
}

}  // namespace tslens
