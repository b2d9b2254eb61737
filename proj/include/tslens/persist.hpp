#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tslens/blocks.hpp"
#include "tslens/io.hpp"
#include "tslens/model.hpp"
#include "tslens/probe.hpp"
#include "tslens/steer.hpp"
#include "tslens/synthgen.hpp"

namespace tslens {

// Dataset: [n, T] tensor + sidecar with labels and per-row params.

inline void save_dataset(const std::string& path, const SeriesSet& set) {
    write_tensor(path, {set.n, set.length}, set.series);
    MetaSidecar meta;
    meta.kind = "dataset";
    meta.dims = {set.n, set.length};
    meta.dataset_checksum = set.checksum();
    meta.labels = set.labels;
    meta.extra["seed"] = set.seed;
    meta.extra["normalized"] = set.normalized;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : set.params)
        params.push_back({{"a", p.a}, {"f", p.f}, {"m", p.m}, {"b", p.b}});
    meta.extra["params"] = params;
    write_sidecar(path, meta);
}

inline SeriesSet load_dataset(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.dims.size() != 2) throw IoFailure("load_dataset: expected a 2-d tensor");
    MetaSidecar meta = read_sidecar(path);
    SeriesSet set;
    set.n = t.dims[0];
    set.length = t.dims[1];
    set.series = std::move(t.values);
    set.labels = meta.labels;
    if (set.labels.size() != set.n) set.labels.assign(set.n, 0);
    set.seed = meta.extra.value("seed", std::uint64_t{0});
    set.normalized = meta.extra.value("normalized", false);
    if (meta.extra.contains("params")) {
        for (const auto& p : meta.extra["params"]) {
            PatternParams pp;
            pp.a = p.value("a", 0.0);
            pp.f = p.value("f", 0.0);
            pp.m = p.value("m", 0.0);
            pp.b = p.value("b", 0.0);
            set.params.push_back(pp);
        }
    }
    return set;
}

// Weights: flat tensor + config in the sidecar.

inline void save_weights(const std::string& path, const Weights& w) {
    std::vector<float> flat = flatten_weights(w);
    write_tensor(path, {flat.size()}, flat);
    MetaSidecar meta;
    meta.kind = "weights";
    meta.dims = {flat.size()};
    meta.model_hash = model_hash(w);
    meta.extra["layers"] = w.config.layers;
    meta.extra["dim"] = w.config.dim;
    meta.extra["heads"] = w.config.heads;
    meta.extra["patch"] = w.config.patch;
    meta.extra["seq_len"] = w.config.seq_len;
    meta.extra["ff_mult"] = w.config.ff_mult;
    meta.extra["init_seed"] = w.config.init_seed;
    write_sidecar(path, meta);
}

inline Weights load_weights(const std::string& path) {
    Tensor t = read_tensor(path);
    MetaSidecar meta = read_sidecar(path);
    ModelConfig cfg;
    cfg.layers = meta.extra.value("layers", std::size_t{8});
    cfg.dim = meta.extra.value("dim", std::size_t{64});
    cfg.heads = meta.extra.value("heads", std::size_t{4});
    cfg.patch = meta.extra.value("patch", std::size_t{8});
    cfg.seq_len = meta.extra.value("seq_len", std::size_t{128});
    cfg.ff_mult = meta.extra.value("ff_mult", std::size_t{4});
    cfg.init_seed = meta.extra.value("init_seed", std::uint64_t{1});
    cfg.validate();

    Weights w = init_model(cfg);  // shapes only; payload overwritten below
    std::size_t offset = 0;
    for_each_weight_tensor(w, [&](const char*, std::vector<float>& tensor) {
        if (offset + tensor.size() > t.values.size())
            throw IoFailure("load_weights: payload too small for config");
        std::copy(t.values.begin() + static_cast<std::ptrdiff_t>(offset),
                  t.values.begin() + static_cast<std::ptrdiff_t>(offset + tensor.size()),
                  tensor.begin());
        offset += tensor.size();
    });
    if (offset != t.values.size())
        throw IoFailure("load_weights: payload size does not match config");
    if (meta.model_hash != 0 && model_hash(w) != meta.model_hash)
        throw IoFailure("load_weights: payload hash does not match sidecar");
    return w;
}

// Captures: [L+1, n, N, D] tensor + labels and hash chain in the sidecar.

inline void save_captures(const std::string& path, const CaptureSet& caps) {
    write_tensor(path, {caps.layers, caps.n, caps.tokens, caps.dim}, caps.data);
    MetaSidecar meta;
    meta.kind = "captures";
    meta.dims = {caps.layers, caps.n, caps.tokens, caps.dim};
    meta.model_hash = caps.model_hash;
    meta.dataset_checksum = caps.dataset_checksum;
    meta.labels = caps.labels;
    write_sidecar(path, meta);
}

inline CaptureSet load_captures(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.dims.size() != 4) throw IoFailure("load_captures: expected a 4-d tensor");
    MetaSidecar meta = read_sidecar(path);
    CaptureSet caps;
    caps.layers = t.dims[0];
    caps.n = t.dims[1];
    caps.tokens = t.dims[2];
    caps.dim = t.dims[3];
    caps.data = std::move(t.values);
    caps.labels = meta.labels;
    if (caps.labels.size() != caps.n) caps.labels.assign(caps.n, 0);
    caps.model_hash = meta.model_hash;
    caps.dataset_checksum = meta.dataset_checksum;
    return caps;
}

// Steering matrix: [L, N, D] tensor + derivation metadata.

inline void save_steering(const std::string& path, const SteeringMatrix& s) {
    write_tensor(path, {s.layers, s.tokens, s.dim}, s.s);
    MetaSidecar meta;
    meta.kind = "steering";
    meta.dims = {s.layers, s.tokens, s.dim};
    meta.model_hash = s.model_hash;
    meta.dataset_checksum = s.dataset_checksum;
    meta.extra["stat"] = to_string(s.stat);
    meta.extra["source"] = s.source_label;
    meta.extra["target"] = s.target_label;
    meta.extra["lambda_default"] = 1.0;
    write_sidecar(path, meta);
}

inline SteeringMatrix load_steering(const std::string& path) {
    Tensor t = read_tensor(path);
    if (t.dims.size() != 3) throw IoFailure("load_steering: expected a 3-d tensor");
    MetaSidecar meta = read_sidecar(path);
    SteeringMatrix s;
    s.layers = t.dims[0];
    s.tokens = t.dims[1];
    s.dim = t.dims[2];
    s.s = std::move(t.values);
    s.stat = meta.extra.value("stat", std::string("median")) == "mean" ? SteerStat::mean
                                                                       : SteerStat::median;
    s.source_label = meta.extra.value("source", 0);
    s.target_label = meta.extra.value("target", 0);
    s.model_hash = meta.model_hash;
    s.dataset_checksum = meta.dataset_checksum;
    return s;
}

// Probe set: [L, N, D+1] tensor of stacked w vectors + thresholds.

inline void save_probes(const std::string& path, const ProbeSet& set, std::size_t dim) {
    std::vector<float> flat(set.layers * set.tokens * (dim + 1), 0.0f);
    for (std::size_t i = 0; i < set.probes.size(); ++i) {
        const Probe& p = set.probes[i];
        float* row = &flat[i * (dim + 1)];
        for (std::size_t c = 0; c < p.w.size() && c < dim; ++c)
            row[c] = static_cast<float>(p.w[c]);
        row[dim] = static_cast<float>(p.threshold);
    }
    write_tensor(path, {set.layers, set.tokens, dim + 1}, flat);
    MetaSidecar meta;
    meta.kind = "probes";
    meta.dims = {set.layers, set.tokens, dim + 1};
    meta.model_hash = set.model_hash;
    write_sidecar(path, meta);
}

/// Run the capture pipeline over a dataset and stamp the hash chain.
inline CaptureSet capture_dataset(const ModelConfig& cfg, const Weights& w,
                                  const SeriesSet& data, const ForwardOptions& opts = {}) {
    if (data.length != cfg.seq_len)
        throw ShapeMismatch("capture: dataset length does not match model seq_len");
    ForwardOptions run = opts;
    run.capture = true;
    ForwardResult result = forward(cfg, w, std::span<const float>(data.series), data.n, run);
    result.captures.labels = data.labels;
    result.captures.dataset_checksum = data.checksum();
    return result.captures;
}

}  // namespace tslens
