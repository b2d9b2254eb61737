#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"
#include "tslens/model.hpp"
#include "tslens/parallel.hpp"
#include "tslens/similarity.hpp"
#include "tslens/steer_types.hpp"

namespace tslens {

/// Subset of a capture set holding only the samples with the given label.
/// The parent's dataset checksum is kept so derived artifacts stay chained to
/// the full corpus they came from.
inline CaptureSet filter_by_label(const CaptureSet& caps, std::int32_t label) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < caps.n; ++i)
        if (caps.labels[i] == label) rows.push_back(i);
    CaptureSet out;
    out.layers = caps.layers;
    out.n = rows.size();
    out.tokens = caps.tokens;
    out.dim = caps.dim;
    out.model_hash = caps.model_hash;
    out.dataset_checksum = caps.dataset_checksum;
    out.labels.assign(rows.size(), label);
    out.data.resize(out.layers * out.n * out.sample_stride());
    for (std::size_t li = 0; li < caps.layers; ++li)
        for (std::size_t r = 0; r < rows.size(); ++r)
            std::copy(caps.at(li, rows[r]), caps.at(li, rows[r]) + caps.sample_stride(),
                      out.at(li, r));
    return out;
}

/// S_i = stat(target activations at layer i) - stat(source activations at
/// layer i), element-wise per (token, dim) cell, stacked over layers 1..L.
/// Median is the default derivation; even sample counts average the two
/// central values.
inline SteeringMatrix derive_steering(const CaptureSet& captures_target,
                                      const CaptureSet& captures_source, SteerStat stat) {
    if (captures_target.model_hash != captures_source.model_hash)
        throw ModelMismatch("derive_steering: capture sets come from different models");
    if (captures_target.layers != captures_source.layers ||
        captures_target.tokens != captures_source.tokens ||
        captures_target.dim != captures_source.dim)
        throw ShapeMismatch("derive_steering: capture dims differ");
    if (captures_target.n < 1 || captures_source.n < 1)
        throw EmptyClass("derive_steering: a class has no samples");

    const std::size_t n_layers = captures_target.layers - 1;  // embedding excluded
    const std::size_t stride = captures_target.sample_stride();

    SteeringMatrix s;
    s.layers = n_layers;
    s.tokens = captures_target.tokens;
    s.dim = captures_target.dim;
    s.stat = stat;
    s.model_hash = captures_target.model_hash;
    s.dataset_checksum = captures_target.dataset_checksum;
    s.source_label = captures_source.labels.empty() ? 0 : captures_source.labels[0];
    s.target_label = captures_target.labels.empty() ? 0 : captures_target.labels[0];
    s.s.resize(n_layers * stride);

    auto cell_stat = [stat](const CaptureSet& caps, std::size_t layer, std::size_t offset,
                            std::vector<double>& scratch) {
        if (stat == SteerStat::mean) {
            double acc = 0.0;
            for (std::size_t r = 0; r < caps.n; ++r)
                acc += static_cast<double>(caps.at(layer, r)[offset]);
            return acc / static_cast<double>(caps.n);
        }
        scratch.resize(caps.n);
        for (std::size_t r = 0; r < caps.n; ++r)
            scratch[r] = static_cast<double>(caps.at(layer, r)[offset]);
        std::sort(scratch.begin(), scratch.end());
        const std::size_t mid = scratch.size() / 2;
        return scratch.size() % 2 == 1 ? scratch[mid]
                                       : 0.5 * (scratch[mid - 1] + scratch[mid]);
    };

    parallel_for(0, n_layers, [&](std::size_t li) {
        std::vector<double> scratch;
        const std::size_t layer = li + 1;
        for (std::size_t off = 0; off < stride; ++off) {
            const double t = cell_stat(captures_target, layer, off, scratch);
            const double c = cell_stat(captures_source, layer, off, scratch);
            s.s[li * stride + off] = static_cast<float>(t - c);
        }
    });
    return s;
}

/// h <- h + lambda * s over the selected tokens. lambda == 0 leaves the
/// input bitwise untouched; unselected rows are never rewritten.
inline void steer_activations(float* h, const float* s_layer, std::size_t tokens,
                              std::size_t dim, const SteerConfig& cfg) {
    if (cfg.lambda == 0.0) return;
    const float lam = static_cast<float>(cfg.lambda);
    if (cfg.mode == SteerMode::all_tokens) {
        for (std::size_t i = 0; i < tokens * dim; ++i) h[i] += lam * s_layer[i];
    } else {
        if (cfg.token_index >= tokens)
            throw TokenOutOfRange("steer_activations: token index out of range");
        const std::size_t base = cfg.token_index * dim;
        for (std::size_t c = 0; c < dim; ++c) h[base + c] += lam * s_layer[base + c];
    }
}

/// Convex combination (1-beta) a + beta b; beta = 0 and beta = 1 return the
/// pure matrices bitwise.
inline SteeringMatrix compose(const SteeringMatrix& s_a, const SteeringMatrix& s_b,
                              double beta) {
    if (s_a.model_hash != s_b.model_hash)
        throw ModelMismatch("compose: steering matrices come from different models");
    if (s_a.layers != s_b.layers || s_a.tokens != s_b.tokens || s_a.dim != s_b.dim)
        throw ShapeMismatch("compose: steering matrix dims differ");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error("compose: beta must be in [0, 1]");
    if (beta == 0.0) return s_a;
    if (beta == 1.0) return s_b;
    SteeringMatrix out = s_a;
    const float bw = static_cast<float>(beta);
    const float aw = static_cast<float>(1.0 - beta);
    for (std::size_t i = 0; i < out.s.size(); ++i)
        out.s[i] = aw * s_a.s[i] + bw * s_b.s[i];
    out.target_label = s_b.target_label;  // blend toward b's concept
    return out;
}

/// Element-wise negation; reverses the intervention direction, so the
/// source/target metadata swap.
inline SteeringMatrix negate(const SteeringMatrix& s) {
    SteeringMatrix out = s;
    for (auto& v : out.s) v = -v;
    std::swap(out.source_label, out.target_label);
    return out;
}

struct DisplacementRow {
    std::size_t sample = 0;
    double pre_x = 0.0, pre_y = 0.0;
    double post_x = 0.0, post_y = 0.0;
    double dist_before = 0.0, dist_after = 0.0;          // PCA space
    double dist_before_raw = 0.0, dist_after_raw = 0.0;  // activation space
};

struct DisplacementReport {
    std::vector<DisplacementRow> rows;  // one per source-class sample
    double target_centroid_x = 0.0, target_centroid_y = 0.0;
    std::size_t layer = 0;
    std::size_t moved_closer = 0;      // PCA-space count
    std::size_t moved_closer_raw = 0;  // activation-space count
};

/// Project token-mean activations at one layer into the PCA plane fitted on
/// the unsteered run (union of both classes) and tabulate how each
/// source-class sample moved relative to the target-class centroid.
inline DisplacementReport steering_displacement_report(const CaptureSet& before,
                                                       const CaptureSet& after,
                                                       std::size_t layer,
                                                       std::int32_t source_label,
                                                       std::int32_t target_label,
                                                       std::size_t k = 2) {
    if (before.n != after.n || before.tokens != after.tokens || before.dim != after.dim)
        throw ShapeMismatch("displacement report: capture sets differ in shape");
    if (layer >= before.layers) throw ShapeMismatch("displacement report: no such layer");

    RepMatrix rep_before = reduce_layer(before, layer, Reduction::token_mean);
    RepMatrix rep_after = reduce_layer(after, layer, Reduction::token_mean);

    PcaResult basis = pca(rep_before.values, k);

    const std::size_t d = before.dim;
    std::vector<double> centroid_raw(d, 0.0);
    std::size_t n_target = 0;
    for (std::size_t i = 0; i < before.n; ++i) {
        if (before.labels[i] != target_label) continue;
        ++n_target;
        for (std::size_t c = 0; c < d; ++c) centroid_raw[c] += rep_before.values(i, c);
    }
    if (n_target == 0) throw EmptyClass("displacement report: no target-class samples");
    for (auto& v : centroid_raw) v /= static_cast<double>(n_target);

    // Shared centering so coordinates match the fitted projection exactly;
    // after-rows reuse the before-run means, keeping the map fixed.
    std::vector<double> col_mean(d, 0.0);
    for (std::size_t i = 0; i < before.n; ++i)
        for (std::size_t c = 0; c < d; ++c) col_mean[c] += rep_before.values(i, c);
    for (auto& v : col_mean) v /= static_cast<double>(before.n);

    auto project = [&](const double* row, double& x, double& y) {
        x = y = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double v = row[c] - col_mean[c];
            x += v * basis.components(0, c);
            if (basis.components.rows > 1) y += v * basis.components(1, c);
        }
    };

    double cx, cy;
    project(centroid_raw.data(), cx, cy);

    DisplacementReport report;
    report.layer = layer;
    report.target_centroid_x = cx;
    report.target_centroid_y = cy;
    for (std::size_t i = 0; i < before.n; ++i) {
        if (before.labels[i] != source_label) continue;
        DisplacementRow row;
        row.sample = i;
        project(&rep_before.values.data[i * d], row.pre_x, row.pre_y);
        project(&rep_after.values.data[i * d], row.post_x, row.post_y);
        row.dist_before = std::hypot(row.pre_x - cx, row.pre_y - cy);
        row.dist_after = std::hypot(row.post_x - cx, row.post_y - cy);
        double db = 0.0, da = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double eb = rep_before.values(i, c) - centroid_raw[c];
            const double ea = rep_after.values(i, c) - centroid_raw[c];
            db += eb * eb;
            da += ea * ea;
        }
        row.dist_before_raw = std::sqrt(db);
        row.dist_after_raw = std::sqrt(da);
        if (row.dist_after < row.dist_before) ++report.moved_closer;
        if (row.dist_after_raw < row.dist_before_raw) ++report.moved_closer_raw;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace tslens
