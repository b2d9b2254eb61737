#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"
#include "tslens/model.hpp"
#include "tslens/parallel.hpp"
#include "tslens/similarity.hpp"

namespace tslens {

/// Fisher-criterion linear probe: unit direction w plus a midpoint threshold.
/// Projections above the threshold classify as the positive ("s") class.
struct Probe {
    std::vector<double> w;  // unit norm
    double threshold = 0.0;
    int layer = 0;
    int token = -1;  // -1 = token-averaged
    double train_accuracy = 0.0;
    std::int32_t pos_label = 1;
    std::int32_t neg_label = 0;
};

struct ClassStats {
    double mu_s = 0.0, mu_c = 0.0;
    double var_s = 0.0, var_c = 0.0;
    std::size_t count_s = 0, count_c = 0;
};

/// LDR = (mu_s - mu_c)^2 / (sigma_s^2 + sigma_c^2); 0 with `degenerate` set
/// when a class is empty or the pooled variance vanishes, so one extreme
/// probe cannot abort a whole map.
inline double ldr(const ClassStats& stats, bool& degenerate) {
    if (stats.count_s == 0 || stats.count_c == 0 || stats.var_s + stats.var_c < 1e-12) {
        degenerate = true;
        return 0.0;
    }
    degenerate = false;
    const double gap = stats.mu_s - stats.mu_c;
    return gap * gap / (stats.var_s + stats.var_c);
}

namespace detail {

inline double dot(const std::vector<double>& a, const double* b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

inline std::int32_t predict(const Probe& probe, const double* h) {
    return detail::dot(probe.w, h) > probe.threshold ? probe.pos_label : probe.neg_label;
}

/// Closed-form maximizer of the Fisher criterion:
/// w ~ (Sigma_pooled + ridge I)^-1 (mu_s - mu_c), normalized to unit length.
/// With vanishing within-class scatter the limit direction mu_s - mu_c is used.
inline Probe fit_fisher_probe(const Matrix& h_s, const Matrix& h_c,
                              std::optional<double> ridge = std::nullopt) {
    if (h_s.rows < 2 || h_c.rows < 2)
        throw DegenerateClasses("fit_fisher_probe: each class needs >= 2 samples");
    if (h_s.cols != h_c.cols) throw ShapeMismatch("fit_fisher_probe: dim mismatch");
    const std::size_t d = h_s.cols;
    const std::size_t ns = h_s.rows, nc = h_c.rows;

    std::vector<double> mu_s(d, 0.0), mu_c(d, 0.0);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < d; ++j) mu_s[j] += h_s(i, j);
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = 0; j < d; ++j) mu_c[j] += h_c(i, j);
    for (auto& v : mu_s) v /= static_cast<double>(ns);
    for (auto& v : mu_c) v /= static_cast<double>(nc);

    std::vector<double> gap(d);
    double gap_norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        gap[j] = mu_s[j] - mu_c[j];
        gap_norm += gap[j] * gap[j];
    }
    gap_norm = std::sqrt(gap_norm);
    if (gap_norm < 1e-12)
        throw DegenerateClasses("fit_fisher_probe: class means coincide");

    // pooled covariance, (n_s + n_c - 2) denominator
    Matrix sigma(d, d);
    auto accumulate = [&](const Matrix& h, const std::vector<double>& mu) {
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t a = 0; a < d; ++a) {
                const double da = h(i, a) - mu[a];
                for (std::size_t b = a; b < d; ++b)
                    sigma(a, b) += da * (h(i, b) - mu[b]);
            }
    };
    accumulate(h_s, mu_s);
    accumulate(h_c, mu_c);
    const double denom = static_cast<double>(ns + nc - 2);
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            sigma(a, b) /= denom;
            sigma(b, a) = sigma(a, b);
        }
        trace += sigma(a, a);
    }

    Probe probe;
    probe.w.resize(d);
    if (trace < 1e-300) {
        for (std::size_t j = 0; j < d; ++j) probe.w[j] = gap[j] / gap_norm;
    } else {
        const double lam = ridge ? *ridge : 1e-6 * trace / static_cast<double>(d);
        for (std::size_t a = 0; a < d; ++a) sigma(a, a) += lam;
        Matrix rhs(d, 1);
        for (std::size_t j = 0; j < d; ++j) rhs(j, 0) = gap[j];
        if (!detail::cholesky_solve(std::move(sigma), rhs)) {
            for (std::size_t j = 0; j < d; ++j) probe.w[j] = gap[j] / gap_norm;
        } else {
            double nrm = 0.0;
            for (std::size_t j = 0; j < d; ++j) nrm += rhs(j, 0) * rhs(j, 0);
            nrm = std::sqrt(nrm);
            for (std::size_t j = 0; j < d; ++j) probe.w[j] = rhs(j, 0) / nrm;
        }
    }

    const double proj_s = detail::dot(probe.w, mu_s.data());
    const double proj_c = detail::dot(probe.w, mu_c.data());
    probe.threshold = 0.5 * (proj_s + proj_c);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < ns; ++i)
        correct += detail::dot(probe.w, &h_s.data[i * d]) > probe.threshold;
    for (std::size_t i = 0; i < nc; ++i)
        correct += detail::dot(probe.w, &h_c.data[i * d]) <= probe.threshold;
    probe.train_accuracy = static_cast<double>(correct) / static_cast<double>(ns + nc);
    return probe;
}

/// Global min-max rescale onto [0, 1]; a constant input maps to all zeros.
inline Matrix minmax_scale(const Matrix& raw) {
    Matrix out(raw.rows, raw.cols);
    if (raw.data.empty()) return out;
    double lo = raw.data[0], hi = raw.data[0];
    for (double v : raw.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-300) return out;
    for (std::size_t i = 0; i < raw.data.size(); ++i)
        out.data[i] = (raw.data[i] - lo) / (hi - lo);
    return out;
}

/// Min-max scaled L x N localization map; raw holds the unscaled ratios.
struct LDRMap {
    Matrix values;  // scaled to [0, 1], all zeros when raw is constant
    Matrix raw;
    std::vector<char> degenerate;  // per cell, row-major
    std::uint64_t model_hash = 0;
};

struct ProbeSet {
    std::vector<Probe> probes;  // L x N, row-major (layer-major)
    std::size_t layers = 0;     // L (layers 1..L probed)
    std::size_t tokens = 0;
    std::uint64_t model_hash = 0;
};

namespace detail {

inline Matrix token_slice(const CaptureSet& caps, std::size_t layer, std::size_t token,
                          const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), caps.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const float* block = caps.at(layer, rows[r]) + token * caps.dim;
        for (std::size_t c = 0; c < caps.dim; ++c) m(r, c) = static_cast<double>(block[c]);
    }
    return m;
}

}  // namespace detail

/// Fit one probe per (layer 1..L, token) cell and compute the LDR of the
/// probe projections grouped by *predicted* class, then min-max scale the
/// whole matrix globally.
inline LDRMap ldr_map(const CaptureSet& caps, std::int32_t pos_label, std::int32_t neg_label,
                      ProbeSet* probes_out = nullptr) {
    const std::size_t n_layers = caps.layers - 1;  // embedding stream not mapped
    const std::size_t n_tok = caps.tokens, d = caps.dim;

    std::vector<std::size_t> rows_pos, rows_neg;
    for (std::size_t i = 0; i < caps.n; ++i) {
        if (caps.labels[i] == pos_label) rows_pos.push_back(i);
        else if (caps.labels[i] == neg_label) rows_neg.push_back(i);
    }
    if (rows_pos.size() < 2 || rows_neg.size() < 2)
        throw DegenerateClasses("ldr_map: each class needs >= 2 samples");

    LDRMap map;
    map.model_hash = caps.model_hash;
    map.raw = Matrix(n_layers, n_tok);
    map.values = Matrix(n_layers, n_tok);
    map.degenerate.assign(n_layers * n_tok, 0);
    if (probes_out) {
        probes_out->probes.resize(n_layers * n_tok);
        probes_out->layers = n_layers;
        probes_out->tokens = n_tok;
        probes_out->model_hash = caps.model_hash;
    }

    parallel_for(0, n_layers * n_tok, [&](std::size_t cell) {
        const std::size_t li = cell / n_tok, tj = cell % n_tok;
        const std::size_t layer = li + 1;
        Matrix h_s = detail::token_slice(caps, layer, tj, rows_pos);
        Matrix h_c = detail::token_slice(caps, layer, tj, rows_neg);
        double value = 0.0;
        bool degenerate = false;
        Probe probe;
        try {
            probe = fit_fisher_probe(h_s, h_c);
            probe.layer = static_cast<int>(layer);
            probe.token = static_cast<int>(tj);
            probe.pos_label = pos_label;
            probe.neg_label = neg_label;
            // group the projections by the probe's own predictions
            ClassStats st;
            double sum_s = 0.0, sum_c = 0.0, sq_s = 0.0, sq_c = 0.0;
            for (std::size_t r = 0; r < caps.n; ++r) {
                const float* block = caps.at(layer, r) + tj * d;
                double pv = 0.0;
                for (std::size_t c = 0; c < d; ++c) pv += probe.w[c] * static_cast<double>(block[c]);
                const bool is_s = pv > probe.threshold;
                if (is_s) {
                    ++st.count_s;
                    sum_s += pv;
                    sq_s += pv * pv;
                } else {
                    ++st.count_c;
                    sum_c += pv;
                    sq_c += pv * pv;
                }
            }
            if (st.count_s > 0) {
                st.mu_s = sum_s / static_cast<double>(st.count_s);
                st.var_s = sq_s / static_cast<double>(st.count_s) - st.mu_s * st.mu_s;
                if (st.var_s < 0.0) st.var_s = 0.0;
            }
            if (st.count_c > 0) {
                st.mu_c = sum_c / static_cast<double>(st.count_c);
                st.var_c = sq_c / static_cast<double>(st.count_c) - st.mu_c * st.mu_c;
                if (st.var_c < 0.0) st.var_c = 0.0;
            }
            value = ldr(st, degenerate);
        } catch (const DegenerateClasses&) {
            degenerate = true;
        }
        map.raw(li, tj) = value;
        map.degenerate[cell] = degenerate ? 1 : 0;
        if (probes_out) probes_out->probes[cell] = probe;
    });

    map.values = minmax_scale(map.raw);
    return map;
}

struct LayerProbeResult {
    Probe probe;
    double holdout_accuracy = 0.0;
};

namespace detail {

// Deterministic 80/20 split: every fifth sample (index % 5 == 4) is held out.
inline bool is_holdout(std::size_t index) { return index % 5 == 4; }

}  // namespace detail

/// One probe per captured stream (0..L) on token-averaged representations,
/// trained on the 80% split and scored on the held-out 20%. Labels may be
/// overridden to support permutation-null checks.
inline std::vector<LayerProbeResult> probe_token_averaged(
    const CaptureSet& caps, std::int32_t pos_label, std::int32_t neg_label,
    const std::vector<std::int32_t>* labels_override = nullptr) {
    const std::vector<std::int32_t>& labels =
        labels_override ? *labels_override : caps.labels;
    if (labels.size() != caps.n) throw ShapeMismatch("probe_token_averaged: label count");

    std::vector<LayerProbeResult> results(caps.layers);
    parallel_for(0, caps.layers, [&](std::size_t layer) {
        RepMatrix rep = reduce_layer(caps, layer, Reduction::token_mean);
        std::vector<std::size_t> train_pos, train_neg, hold;
        for (std::size_t i = 0; i < caps.n; ++i) {
            if (detail::is_holdout(i)) {
                if (labels[i] == pos_label || labels[i] == neg_label) hold.push_back(i);
            } else if (labels[i] == pos_label) {
                train_pos.push_back(i);
            } else if (labels[i] == neg_label) {
                train_neg.push_back(i);
            }
        }
        auto take = [&](const std::vector<std::size_t>& rows) {
            Matrix m(rows.size(), caps.dim);
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < caps.dim; ++c) m(r, c) = rep.values(rows[r], c);
            return m;
        };
        Probe probe = fit_fisher_probe(take(train_pos), take(train_neg));
        probe.layer = static_cast<int>(layer);
        probe.token = -1;
        probe.pos_label = pos_label;
        probe.neg_label = neg_label;

        std::size_t correct = 0;
        for (std::size_t i : hold) {
            const std::int32_t got = predict(probe, &rep.values.data[i * caps.dim]);
            correct += got == labels[i];
        }
        results[layer].probe = probe;
        results[layer].holdout_accuracy =
            hold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(hold.size());
    });
    return results;
}

}  // namespace tslens
