#pragma once

// Shared test-side helpers. Oracle math in here stays independent of the
// production code paths it checks (Jacobi eigendecomposition instead of the
// library SVD, explicit Gram-Schmidt, long-double accumulation).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "tslens/blocks.hpp"
#include "tslens/matrix.hpp"
#include "tslens/rng.hpp"

namespace testutil {

inline tslens::Matrix random_matrix(tslens::Rng& rng, std::size_t rows, std::size_t cols,
                                    double scale = 1.0) {
    tslens::Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.gaussian(0.0, scale);
    return m;
}

inline tslens::Matrix random_orthogonal(tslens::Rng& rng, std::size_t n) {
    tslens::Matrix q = random_matrix(rng, n, n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += q(i, c) * q(i, prev);
            for (std::size_t i = 0; i < n; ++i) q(i, c) -= dot * q(i, prev);
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += q(i, c) * q(i, c);
        nrm = std::sqrt(nrm);
        for (std::size_t i = 0; i < n; ++i) q(i, c) /= nrm;
    }
    return q;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline void jacobi_eig(tslens::Matrix a, std::vector<double>& eigvals,
                       tslens::Matrix& eigvecs) {
    const std::size_t n = a.rows;
    eigvecs = tslens::Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigvecs(i, p), viq = eigvecs(i, q);
                    eigvecs(i, p) = c * vip - s * viq;
                    eigvecs(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a(i, i);
}

// Independent three-phase block replay: explicit greedy member list, then an
// exhaustive enumeration of contiguous segments whose full submatrix clears
// tau. Checks the same semantics as identify_blocks through different code.
inline std::vector<tslens::Block> oracle_blocks(const tslens::Matrix& s, double tau, int k) {
    const int layers = static_cast<int>(s.rows);
    auto sim = [&](int a, int b) {
        return s(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1));
    };

    std::vector<std::vector<int>> segments;
    std::vector<int> members;
    for (int layer = 1; layer <= layers; ++layer) {
        bool ok = true;
        for (int m : members)
            if (sim(layer, m) < tau) { ok = false; break; }
        if (ok) {
            members.push_back(layer);
        } else {
            segments.push_back(members);
            members = {layer};
        }
    }
    segments.push_back(members);

    std::set<std::pair<int, int>> good;
    for (int start = 1; start <= layers; ++start) {
        for (int end = start + k - 1; end <= layers; ++end) {
            double mn = 1e300;
            for (int i = start; i <= end; ++i)
                for (int j = start; j <= end; ++j) mn = std::min(mn, sim(i, j));
            if (mn >= tau) good.insert({start, end});
        }
    }

    std::vector<tslens::Block> out;
    for (const auto& seg : segments) {
        if (static_cast<int>(seg.size()) < k) continue;
        if (good.count({seg.front(), seg.back()}))
            out.push_back({seg.front(), seg.back()});
    }
    return out;
}

// Classical CCA via covariance whitening and Jacobi eigendecompositions;
// the brute-force side of the SVCCA dual route.
inline double svcca_oracle(const tslens::Matrix& x_in, const tslens::Matrix& y_in,
                           double keep) {
    using tslens::Matrix;
    auto truncated_basis = [keep](const Matrix& m) {
        Matrix c = tslens::center_columns(m);
        Matrix gram = tslens::matmul_at_b(c, c);  // cols x cols
        std::vector<double> eigvals;
        Matrix eigvecs;
        jacobi_eig(gram, eigvals, eigvecs);
        std::vector<std::size_t> order(eigvals.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return eigvals[a] > eigvals[b]; });
        double total = 0.0;
        for (double v : eigvals) total += std::max(0.0, v);
        std::size_t k = 0;
        double acc = 0.0;
        while (k < order.size()) {
            acc += std::max(0.0, eigvals[order[k]]);
            ++k;
            if (acc >= keep * total) break;
        }
        Matrix basis(c.rows, k);
        for (std::size_t col = 0; col < k; ++col) {
            const double s = std::sqrt(std::max(0.0, eigvals[order[col]]));
            for (std::size_t i = 0; i < c.rows; ++i) {
                double v = 0.0;
                for (std::size_t j = 0; j < c.cols; ++j) v += c(i, j) * eigvecs(j, order[col]);
                basis(i, col) = v / s;
            }
        }
        return basis;
    };
    Matrix ux = truncated_basis(x_in);
    Matrix uy = truncated_basis(y_in);

    auto inv_sqrt = [](const Matrix& s) {
        std::vector<double> eigvals;
        Matrix eigvecs;
        jacobi_eig(s, eigvals, eigvecs);
        Matrix out(s.rows, s.cols);
        for (std::size_t i = 0; i < s.rows; ++i)
            for (std::size_t j = 0; j < s.cols; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < s.rows; ++k)
                    acc += eigvecs(i, k) * eigvecs(j, k) /
                           std::sqrt(std::max(1e-300, eigvals[k]));
                out(i, j) = acc;
            }
        return out;
    };
    Matrix sxx = tslens::matmul_at_b(ux, ux);
    Matrix syy = tslens::matmul_at_b(uy, uy);
    Matrix sxy = tslens::matmul_at_b(ux, uy);
    Matrix m = tslens::matmul(tslens::matmul(inv_sqrt(sxx), sxy), inv_sqrt(syy));

    Matrix mtm = tslens::matmul_at_b(m, m);
    std::vector<double> eigvals;
    Matrix eigvecs;
    jacobi_eig(mtm, eigvals, eigvecs);
    std::sort(eigvals.begin(), eigvals.end(), std::greater<double>());
    const std::size_t count = std::min(ux.cols, uy.cols);
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += std::sqrt(std::max(0.0, eigvals[i]));
    return mean / static_cast<double>(count);
}

}  // namespace testutil
