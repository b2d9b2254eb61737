#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"
#include "tslens/model.hpp"
#include "tslens/parallel.hpp"

namespace tslens {

enum class Reduction { token_mean, token_flatten };

inline const char* to_string(Reduction r) {
    return r == Reduction::token_mean ? "token_mean" : "token_flatten";
}

/// One layer's representations, one row per sample (token-averaged) or one
/// row per (sample, token) pair (token-flattened).
struct RepMatrix {
    Matrix values;
    std::size_t layer = 0;
    std::uint64_t model_hash = 0;
    Reduction reduction = Reduction::token_mean;
};

inline RepMatrix reduce_layer(const CaptureSet& caps, std::size_t layer, Reduction reduction) {
    RepMatrix rep;
    rep.layer = layer;
    rep.model_hash = caps.model_hash;
    rep.reduction = reduction;
    const std::size_t n = caps.n, n_tok = caps.tokens, d = caps.dim;
    if (reduction == Reduction::token_mean) {
        rep.values = Matrix(n, d);
        for (std::size_t s = 0; s < n; ++s) {
            const float* block = caps.at(layer, s);
            for (std::size_t j = 0; j < n_tok; ++j)
                for (std::size_t c = 0; c < d; ++c)
                    rep.values(s, c) += static_cast<double>(block[j * d + c]);
            for (std::size_t c = 0; c < d; ++c) rep.values(s, c) /= static_cast<double>(n_tok);
        }
    } else {
        rep.values = Matrix(n * n_tok, d);
        for (std::size_t s = 0; s < n; ++s) {
            const float* block = caps.at(layer, s);
            for (std::size_t j = 0; j < n_tok; ++j)
                for (std::size_t c = 0; c < d; ++c)
                    rep.values(s * n_tok + j, c) = static_cast<double>(block[j * d + c]);
        }
    }
    return rep;
}

namespace detail {

// Overshoot beyond [0,1] larger than this is a bug, not roundoff.
constexpr double kMetricSlack = 1e-9;

inline double clamp_unit(double v) {
    if (v < 0.0) return 0.0;
    if (v > 1.0) return 1.0;
    return v;
}

}  // namespace detail

/// Linear-kernel CKA on column-centered representations:
/// |Xt Y|_F^2 / (|Xt X|_F |Yt Y|_F). Feature widths may differ.
inline double linear_cka(const Matrix& x, const Matrix& y) {
    if (x.rows != y.rows) throw SampleMismatch("linear_cka: sample counts differ");
    if (x.rows < 2) throw SampleMismatch("linear_cka: need at least two samples");
    Matrix xc = center_columns(x);
    Matrix yc = center_columns(y);
    const double xx = matmul_at_b(xc, xc).frobenius_norm();
    const double yy = matmul_at_b(yc, yc).frobenius_norm();
    if (xx < 1e-12 || yy < 1e-12)
        throw DegenerateRepresentation("linear_cka: zero-variance representation");
    const double xy = matmul_at_b(xc, yc).frobenius_norm();
    return detail::clamp_unit(xy * xy / (xx * yy));
}

/// HSIC-form CKA with linear kernels K = X Xt, L = Y Yt and
/// HSIC = tr(K H L H) / (n-1)^2; equals linear_cka on centered features.
inline double hsic_cka(const Matrix& x, const Matrix& y) {
    if (x.rows != y.rows) throw SampleMismatch("hsic_cka: sample counts differ");
    const std::size_t n = x.rows;
    if (n < 2) throw SampleMismatch("hsic_cka: need at least two samples");

    auto gram = [](const Matrix& m) {
        Matrix mt = m.transposed();
        return matmul(m, mt);
    };
    Matrix kx = gram(x), ly = gram(y);
    auto center_kernel = [n](const Matrix& g) {
        // H G H with H = I - (1/n) 1 1t
        Matrix out = g;
        std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                row_mean[i] += g(i, j);
                col_mean[j] += g(i, j);
                total += g(i, j);
            }
        for (auto& v : row_mean) v /= static_cast<double>(n);
        for (auto& v : col_mean) v /= static_cast<double>(n);
        total /= static_cast<double>(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out(i, j) = g(i, j) - row_mean[i] - col_mean[j] + total;
        return out;
    };
    Matrix kc = center_kernel(kx), lc = center_kernel(ly);
    auto hsic = [n](const Matrix& a, const Matrix& b) {
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) tr += a(i, j) * b(j, i);
        const double denom = static_cast<double>(n - 1);
        return tr / (denom * denom);
    };
    const double hxx = hsic(kc, kc), hyy = hsic(lc, lc);
    if (hxx < 1e-24 || hyy < 1e-24)
        throw DegenerateRepresentation("hsic_cka: zero-variance representation");
    return detail::clamp_unit(hsic(kc, lc) / std::sqrt(hxx * hyy));
}

/// Mean per-sample cosine between matching rows; requires equal widths.
inline double avg_cosine(const Matrix& x, const Matrix& y) {
    if (x.rows != y.rows) throw SampleMismatch("avg_cosine: sample counts differ");
    if (x.cols != y.cols) throw ShapeMismatch("avg_cosine: feature widths differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            dot += x(i, j) * y(i, j);
            nx += x(i, j) * x(i, j);
            ny += y(i, j) * y(i, j);
        }
        nx = std::sqrt(nx);
        ny = std::sqrt(ny);
        if (nx < 1e-12 || ny < 1e-12)
            throw ZeroVector("avg_cosine: zero-norm sample row");
        acc += dot / (nx * ny);
    }
    return acc / static_cast<double>(x.rows);
}

/// SVCCA: truncate both representations to the smallest left-singular basis
/// holding `variance_keep` of squared singular mass, then average the
/// canonical correlations (singular values of Ukx_t Uky).
inline double svcca(const Matrix& x, const Matrix& y, double variance_keep = 0.99) {
    if (x.rows != y.rows) throw SampleMismatch("svcca: sample counts differ");
    if (x.rows < 3) throw SampleMismatch("svcca: need at least three samples");
    if (!(variance_keep > 0.0 && variance_keep <= 1.0))
        throw Error("svcca: variance_keep must be in (0, 1]");

    auto truncated_basis = [variance_keep](const Matrix& m) {
        Matrix centered = center_columns(m);
        SvdResult dec = svd(centered);
        double total = 0.0;
        for (double s : dec.s) total += s * s;
        if (total < 1e-24)
            throw DegenerateRepresentation("svcca: zero-variance representation");
        std::size_t k = 0;
        double acc = 0.0;
        while (k < dec.s.size()) {
            acc += dec.s[k] * dec.s[k];
            ++k;
            if (acc >= variance_keep * total) break;
        }
        Matrix basis(centered.rows, k);
        for (std::size_t i = 0; i < centered.rows; ++i)
            for (std::size_t j = 0; j < k; ++j) basis(i, j) = dec.u(i, j);
        return basis;
    };

    Matrix ux = truncated_basis(x);
    Matrix uy = truncated_basis(y);
    Matrix cross = matmul_at_b(ux, uy);
    SvdResult cc = svd(cross);
    const std::size_t count = std::min(ux.cols, uy.cols);
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += cc.s[i];
    mean /= static_cast<double>(count);
    return detail::clamp_unit(mean);
}

enum class SimMetric { cka, cosine, svcca };

inline const char* to_string(SimMetric m) {
    switch (m) {
        case SimMetric::cka: return "cka";
        case SimMetric::cosine: return "cosine";
        case SimMetric::svcca: return "svcca";
    }
    return "?";
}

struct SimilarityMatrix {
    Matrix values;  // L_a x L_b
    SimMetric metric = SimMetric::cka;
    Reduction reduction = Reduction::token_mean;
    std::uint64_t model_hash_a = 0;
    std::uint64_t model_hash_b = 0;
    std::uint64_t dataset_checksum = 0;
    std::size_t first_layer = 1;  // 0 when the embedding stream is included
};

/// Layer x layer similarity within or across capture sets. Both captures must
/// come from the same sample set (enforced by dataset checksum). The
/// embedding stream (index 0) is excluded unless requested.
inline SimilarityMatrix layer_matrix(const CaptureSet& a, const CaptureSet& b,
                                     SimMetric metric,
                                     Reduction reduction = Reduction::token_mean,
                                     bool include_embedding = false) {
    if (a.n != b.n) throw SampleMismatch("layer_matrix: sample counts differ");
    if (a.dataset_checksum != b.dataset_checksum)
        throw SampleMismatch("layer_matrix: capture sets come from different datasets");
    if (metric == SimMetric::cosine && a.dim != b.dim)
        throw ShapeMismatch("layer_matrix: cosine needs equal dims");

    const std::size_t first = include_embedding ? 0 : 1;
    const std::size_t la = a.layers - first, lb = b.layers - first;

    std::vector<RepMatrix> reps_a(la), reps_b;
    for (std::size_t i = 0; i < la; ++i) reps_a[i] = reduce_layer(a, first + i, reduction);
    const bool same = &a == &b;
    if (!same) {
        reps_b.resize(lb);
        for (std::size_t j = 0; j < lb; ++j) reps_b[j] = reduce_layer(b, first + j, reduction);
    }
    auto rep_b = [&](std::size_t j) -> const RepMatrix& { return same ? reps_a[j] : reps_b[j]; };

    SimilarityMatrix out;
    out.values = Matrix(la, lb);
    out.metric = metric;
    out.reduction = reduction;
    out.model_hash_a = a.model_hash;
    out.model_hash_b = b.model_hash;
    out.dataset_checksum = a.dataset_checksum;
    out.first_layer = first;

    parallel_for(0, la * lb, [&](std::size_t cell) {
        const std::size_t i = cell / lb, j = cell % lb;
        double v = 0.0;
        switch (metric) {
            case SimMetric::cka: v = linear_cka(reps_a[i].values, rep_b(j).values); break;
            case SimMetric::cosine: v = avg_cosine(reps_a[i].values, rep_b(j).values); break;
            case SimMetric::svcca: v = svcca(reps_a[i].values, rep_b(j).values); break;
        }
        out.values(i, j) = v;
    });
    return out;
}

}  // namespace tslens
