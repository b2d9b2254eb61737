#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"
#include "tslens/parallel.hpp"
#include "tslens/rng.hpp"
#include "tslens/steer_types.hpp"

namespace tslens {

struct ModelConfig {
    std::size_t layers = 8;    // L
    std::size_t dim = 64;      // D
    std::size_t heads = 4;     // H
    std::size_t patch = 8;     // P
    std::size_t seq_len = 128; // T
    std::size_t ff_mult = 4;
    std::uint64_t init_seed = 1;

    std::size_t tokens() const { return seq_len / patch; }  // N
    std::size_t ff_dim() const { return dim * ff_mult; }

    void validate() const {
        if (layers < 1 || dim < 1 || heads < 1 || patch < 1 || seq_len < 1 || ff_mult < 1)
            throw InvalidConfig("model config: counts must be positive");
        if (dim % heads != 0) throw InvalidConfig("model config: dim not divisible by heads");
        if (seq_len % patch != 0) throw InvalidConfig("model config: seq_len not divisible by patch");
    }
};

struct LayerWeights {
    std::vector<float> wq, wk, wv, wo;        // D x D, no biases
    std::vector<float> ff_in_w;               // D x F
    std::vector<float> ff_in_b;               // F
    std::vector<float> ff_out_w;              // F x D
    std::vector<float> ff_out_b;              // D
    std::vector<float> ln1_g, ln1_b;          // D
    std::vector<float> ln2_g, ln2_b;          // D
};

struct Weights {
    ModelConfig config;
    std::vector<float> patch_w;  // P x D
    std::vector<float> patch_b;  // D
    std::vector<float> pos;      // N x D
    std::vector<LayerWeights> layer;
};

/// Visit every weight tensor in the canonical serialization order:
/// embedding, positions, then per layer Q, K, V, O, FF-in, FF-out, norms last.
template <typename W, typename Fn>
void for_each_weight_tensor(W& w, Fn&& fn) {
    fn("patch_w", w.patch_w);
    fn("patch_b", w.patch_b);
    fn("pos", w.pos);
    for (auto& l : w.layer) {
        fn("wq", l.wq);
        fn("wk", l.wk);
        fn("wv", l.wv);
        fn("wo", l.wo);
        fn("ff_in_w", l.ff_in_w);
        fn("ff_in_b", l.ff_in_b);
        fn("ff_out_w", l.ff_out_w);
        fn("ff_out_b", l.ff_out_b);
        fn("ln1_g", l.ln1_g);
        fn("ln1_b", l.ln1_b);
        fn("ln2_g", l.ln2_g);
        fn("ln2_b", l.ln2_b);
    }
}

inline std::vector<float> flatten_weights(const Weights& w) {
    std::vector<float> flat;
    for_each_weight_tensor(w, [&](const char*, const std::vector<float>& t) {
        flat.insert(flat.end(), t.begin(), t.end());
    });
    return flat;
}

/// FNV-1a over the serialized weight bytes; chains captures, probes and
/// steering matrices to the exact model that produced them.
inline std::uint64_t model_hash(const Weights& w) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for_each_weight_tensor(w, [&](const char*, const std::vector<float>& t) {
        h = fnv1a64(t.data(), t.size() * sizeof(float), h);
    });
    return h;
}

/// Frozen random weights: Gaussian(0, 0.02) for embeddings and projections in
/// the serialization order above; layer-norm gains/biases are 1/0 and consume
/// no draws. Identical config (incl. seed) gives bitwise-identical weights.
inline Weights init_model(const ModelConfig& config) {
    config.validate();
    Weights w;
    w.config = config;
    Rng rng(config.init_seed);
    auto draw = [&](std::vector<float>& t, std::size_t count) {
        t.resize(count);
        for (auto& v : t) v = static_cast<float>(rng.gaussian(0.0, 0.02));
    };
    const std::size_t d = config.dim, f = config.ff_dim(), n = config.tokens();
    draw(w.patch_w, config.patch * d);
    draw(w.patch_b, d);
    draw(w.pos, n * d);
    w.layer.resize(config.layers);
    for (auto& l : w.layer) {
        draw(l.wq, d * d);
        draw(l.wk, d * d);
        draw(l.wv, d * d);
        draw(l.wo, d * d);
        draw(l.ff_in_w, d * f);
        draw(l.ff_in_b, f);
        draw(l.ff_out_w, f * d);
        draw(l.ff_out_b, d);
        l.ln1_g.assign(d, 1.0f);
        l.ln1_b.assign(d, 0.0f);
        l.ln2_g.assign(d, 1.0f);
        l.ln2_b.assign(d, 0.0f);
    }
    return w;
}

struct SkipMask {
    std::vector<char> skip;  // index 0 <-> layer 1

    SkipMask() = default;
    explicit SkipMask(std::size_t layers) : skip(layers, 0) {}

    bool skipped(int layer_1based) const {
        return skip[static_cast<std::size_t>(layer_1based - 1)] != 0;
    }
    void set(int layer_1based, bool v = true) {
        skip[static_cast<std::size_t>(layer_1based - 1)] = v ? 1 : 0;
    }
    std::size_t count() const {
        std::size_t c = 0;
        for (char s : skip) c += (s != 0);
        return c;
    }
};

/// Residual-stream captures: index 0 is the post-embedding stream, index i is
/// the stream after layer i's feed-forward residual add (post-steer when a
/// steered run is active).
struct CaptureSet {
    std::size_t layers = 0;  // L + 1 streams
    std::size_t n = 0;
    std::size_t tokens = 0;
    std::size_t dim = 0;
    std::vector<float> data;  // layers x n x tokens x dim
    std::vector<std::int32_t> labels;
    std::uint64_t model_hash = 0;
    std::uint64_t dataset_checksum = 0;

    std::size_t sample_stride() const { return tokens * dim; }
    float* at(std::size_t layer, std::size_t sample) {
        return &data[(layer * n + sample) * sample_stride()];
    }
    const float* at(std::size_t layer, std::size_t sample) const {
        return &data[(layer * n + sample) * sample_stride()];
    }
};

struct ReadoutHead {
    Matrix weight;             // D x P
    std::vector<double> bias;  // P
    double ridge_alpha = 0.0;
    double train_mse = 0.0;
    bool fitted = false;
};

struct ForwardOptions {
    const SkipMask* mask = nullptr;
    const SteeringMatrix* steer = nullptr;
    SteerConfig steer_cfg;
    const ReadoutHead* head = nullptr;
    bool capture = true;
};

struct ForwardResult {
    CaptureSet captures;
    std::vector<double> outputs;  // n x T when a fitted head was supplied
    bool has_outputs = false;
};

namespace detail {

inline void layer_norm(const float* x, const float* gain, const float* bias,
                       std::size_t d, float* out) {
    float mean = 0.0f;
    for (std::size_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t i = 0; i < d; ++i) {
        const float c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (std::size_t i = 0; i < d; ++i) out[i] = gain[i] * (x[i] - mean) * inv + bias[i];
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

// out[n x dc] = in[n x dr] * w[dr x dc] (+ bias)
inline void linear(const float* in, std::size_t n, std::size_t dr, const float* w,
                   std::size_t dc, const float* bias, float* out) {
    for (std::size_t i = 0; i < n; ++i) {
        float* orow = out + i * dc;
        if (bias) {
            for (std::size_t j = 0; j < dc; ++j) orow[j] = bias[j];
        } else {
            for (std::size_t j = 0; j < dc; ++j) orow[j] = 0.0f;
        }
        const float* irow = in + i * dr;
        for (std::size_t k = 0; k < dr; ++k) {
            const float v = irow[k];
            if (v == 0.0f) continue;
            const float* wrow = w + k * dc;
            for (std::size_t j = 0; j < dc; ++j) orow[j] += v * wrow[j];
        }
    }
}

}  // namespace detail

/// Single-sample forward pass writing per-layer streams into `streams`
/// ((L+1) x N x D scratch). Kept separate so bench can run without captures.
inline void forward_sample(const ModelConfig& cfg, const Weights& w, const float* series,
                           const ForwardOptions& opts, std::vector<float>& scratch,
                           float* streams, bool record_streams, float* final_stream) {
    const std::size_t n_tok = cfg.tokens(), d = cfg.dim, p = cfg.patch;
    const std::size_t dh = d / cfg.heads, f = cfg.ff_dim();

    // scratch layout: h | u | q | k | v | ctx | ff
    scratch.assign(6 * n_tok * d + n_tok * f, 0.0f);
    float* h = scratch.data();
    float* u = h + n_tok * d;
    float* q = u + n_tok * d;
    float* k = q + n_tok * d;
    float* v = k + n_tok * d;
    float* ctx = v + n_tok * d;
    float* ff = ctx + n_tok * d;

    // patch embedding + positions
    for (std::size_t j = 0; j < n_tok; ++j) {
        float* hrow = h + j * d;
        for (std::size_t c = 0; c < d; ++c) hrow[c] = w.patch_b[c] + w.pos[j * d + c];
        const float* x = series + j * p;
        for (std::size_t r = 0; r < p; ++r) {
            const float xv = x[r];
            const float* wrow = &w.patch_w[r * d];
            for (std::size_t c = 0; c < d; ++c) hrow[c] += xv * wrow[c];
        }
    }
    if (record_streams) std::copy(h, h + n_tok * d, streams);

    std::vector<float> scores(n_tok);
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    for (std::size_t li = 0; li < cfg.layers; ++li) {
        const int layer_1based = static_cast<int>(li) + 1;
        const bool skipped = opts.mask && opts.mask->skipped(layer_1based);
        if (!skipped) {
            const LayerWeights& lw = w.layer[li];

            // attention sublayer, pre-norm
            for (std::size_t j = 0; j < n_tok; ++j)
                detail::layer_norm(h + j * d, lw.ln1_g.data(), lw.ln1_b.data(), d, u + j * d);
            detail::linear(u, n_tok, d, lw.wq.data(), d, nullptr, q);
            detail::linear(u, n_tok, d, lw.wk.data(), d, nullptr, k);
            detail::linear(u, n_tok, d, lw.wv.data(), d, nullptr, v);
            for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
                const std::size_t off = hh * dh;
                for (std::size_t i = 0; i < n_tok; ++i) {
                    const float* qi = q + i * d + off;
                    float maxs = -3.4e38f;
                    for (std::size_t j = 0; j < n_tok; ++j) {
                        const float* kj = k + j * d + off;
                        float s = 0.0f;
                        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                        s *= inv_sqrt_dh;
                        scores[j] = s;
                        if (s > maxs) maxs = s;
                    }
                    float denom = 0.0f;
                    for (std::size_t j = 0; j < n_tok; ++j) {
                        scores[j] = std::exp(scores[j] - maxs);
                        denom += scores[j];
                    }
                    float* crow = ctx + i * d + off;
                    for (std::size_t c = 0; c < dh; ++c) crow[c] = 0.0f;
                    for (std::size_t j = 0; j < n_tok; ++j) {
                        const float a = scores[j] / denom;
                        const float* vj = v + j * d + off;
                        for (std::size_t c = 0; c < dh; ++c) crow[c] += a * vj[c];
                    }
                }
            }
            detail::linear(ctx, n_tok, d, lw.wo.data(), d, nullptr, u);
            for (std::size_t i = 0; i < n_tok * d; ++i) h[i] += u[i];

            // feed-forward sublayer, pre-norm
            for (std::size_t j = 0; j < n_tok; ++j)
                detail::layer_norm(h + j * d, lw.ln2_g.data(), lw.ln2_b.data(), d, u + j * d);
            detail::linear(u, n_tok, d, lw.ff_in_w.data(), f, lw.ff_in_b.data(), ff);
            for (std::size_t i = 0; i < n_tok * f; ++i) ff[i] = detail::gelu(ff[i]);
            detail::linear(ff, n_tok, f, lw.ff_out_w.data(), d, lw.ff_out_b.data(), u);
            for (std::size_t i = 0; i < n_tok * d; ++i) h[i] += u[i];

            // steering injects into the captured residual stream, so the
            // recorded stream is post-steer and layers i+1..L consume it
            if (opts.steer && opts.steer_cfg.lambda != 0.0 &&
                opts.steer_cfg.applies_to(layer_1based)) {
                const float lam = static_cast<float>(opts.steer_cfg.lambda);
                const float* srow = opts.steer->layer_data(static_cast<std::size_t>(layer_1based));
                if (opts.steer_cfg.mode == SteerMode::all_tokens) {
                    for (std::size_t i = 0; i < n_tok * d; ++i) h[i] += lam * srow[i];
                } else {
                    const std::size_t j = opts.steer_cfg.token_index;
                    for (std::size_t c = 0; c < d; ++c) h[j * d + c] += lam * srow[j * d + c];
                }
            }
        }
        if (record_streams)
            std::copy(h, h + n_tok * d, streams + (li + 1) * n_tok * d);
    }
    if (final_stream) std::copy(h, h + n_tok * d, final_stream);
}

/// Decode final-layer activations (n x N x D) back to series (n x T) through
/// the patch-wise linear readout.
inline std::vector<double> decode(const ReadoutHead& head, const float* acts, std::size_t n,
                                  std::size_t tokens, std::size_t dim) {
    if (!head.fitted) throw NotFitted("decode: readout head not fitted");
    if (head.weight.rows != dim) throw ShapeMismatch("decode: head dim mismatch");
    const std::size_t p = head.weight.cols;
    std::vector<double> out(n * tokens * p);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < tokens; ++j) {
            const float* a = acts + (s * tokens + j) * dim;
            double* orow = &out[(s * tokens + j) * p];
            for (std::size_t c = 0; c < p; ++c) orow[c] = head.bias[c];
            for (std::size_t r = 0; r < dim; ++r) {
                const double av = static_cast<double>(a[r]);
                for (std::size_t c = 0; c < p; ++c) orow[c] += av * head.weight(r, c);
            }
        }
    }
    return out;
}

inline std::vector<double> decode(const ReadoutHead& head, const CaptureSet& caps) {
    return decode(head, caps.at(caps.layers - 1, 0), caps.n, caps.tokens, caps.dim);
}

/// Batched forward. Samples run in parallel over disjoint capture regions, so
/// output bytes are independent of the worker count.
inline ForwardResult forward(const ModelConfig& cfg, const Weights& w,
                             std::span<const float> batch, std::size_t n,
                             const ForwardOptions& opts = {}) {
    cfg.validate();
    if (batch.size() != n * cfg.seq_len)
        throw ShapeMismatch("forward: batch size is not n * seq_len");
    if (opts.mask && opts.mask->skip.size() != cfg.layers)
        throw ShapeMismatch("forward: skip mask length != layer count");
    if (opts.steer) {
        if (opts.steer->layers != cfg.layers || opts.steer->tokens != cfg.tokens() ||
            opts.steer->dim != cfg.dim)
            throw ShapeMismatch("forward: steering matrix dims do not match model");
        if (opts.steer_cfg.mode == SteerMode::single_token &&
            opts.steer_cfg.token_index >= cfg.tokens())
            throw TokenOutOfRange("forward: steering token index out of range");
        for (int l : opts.steer_cfg.layers)
            if (l < 1 || static_cast<std::size_t>(l) > cfg.layers)
                throw ShapeMismatch("forward: steering layer index out of range");
    }

    ForwardResult result;
    CaptureSet& caps = result.captures;
    const std::size_t n_tok = cfg.tokens();
    std::vector<float> finals;
    if (opts.capture) {
        caps.layers = cfg.layers + 1;
        caps.n = n;
        caps.tokens = n_tok;
        caps.dim = cfg.dim;
        caps.data.resize(caps.layers * n * n_tok * cfg.dim);
        caps.model_hash = model_hash(w);
    } else {
        finals.resize(n * n_tok * cfg.dim);
    }

    parallel_for(0, n, [&](std::size_t s) {
        std::vector<float> scratch;
        if (opts.capture) {
            // per-sample strided view into the shared capture tensor
            std::vector<float> streams((cfg.layers + 1) * n_tok * cfg.dim);
            forward_sample(cfg, w, batch.data() + s * cfg.seq_len, opts, scratch,
                           streams.data(), true, nullptr);
            for (std::size_t li = 0; li <= cfg.layers; ++li)
                std::copy(streams.begin() + li * n_tok * cfg.dim,
                          streams.begin() + (li + 1) * n_tok * cfg.dim, caps.at(li, s));
        } else {
            forward_sample(cfg, w, batch.data() + s * cfg.seq_len, opts, scratch, nullptr,
                           false, finals.data() + s * n_tok * cfg.dim);
        }
    });

    if (opts.head) {
        const float* acts = opts.capture ? caps.at(cfg.layers, 0) : finals.data();
        result.outputs = decode(*opts.head, acts, n, n_tok, cfg.dim);
        result.has_outputs = true;
    }
    return result;
}

/// App-C style pruning that zeroes the O-projection and FF-out weights (and
/// bias) of each skipped layer, so both residual updates vanish while the
/// layer is still "executed".
inline Weights zero_block_weights(const Weights& w, const std::vector<int>& skipped_layers) {
    Weights out = w;
    for (int layer : skipped_layers) {
        if (layer < 1 || static_cast<std::size_t>(layer) > w.config.layers)
            throw BlockOutOfRange("zero_block_weights: layer index out of range");
        LayerWeights& l = out.layer[static_cast<std::size_t>(layer - 1)];
        std::fill(l.wo.begin(), l.wo.end(), 0.0f);
        std::fill(l.ff_out_w.begin(), l.ff_out_w.end(), 0.0f);
        std::fill(l.ff_out_b.begin(), l.ff_out_b.end(), 0.0f);
    }
    return out;
}

/// Pooled per-token ridge regression mapping D-dim activations to P patch
/// values. The intercept is unpenalized: with alpha -> inf the weights vanish
/// and predictions collapse to the patch mean.
inline ReadoutHead fit_readout(const CaptureSet& caps, std::span<const float> targets,
                               double alpha) {
    const std::size_t n = caps.n, n_tok = caps.tokens, d = caps.dim;
    const std::size_t rows = n * n_tok;
    if (rows < d) throw ShapeMismatch("fit_readout: n*N must be >= D");
    const std::size_t p = targets.size() / (n * n_tok);
    if (targets.size() != n * n_tok * p || p == 0)
        throw ShapeMismatch("fit_readout: targets are not n x T with T divisible by N");

    Matrix a(rows, d), b(rows, p);
    const float* acts = caps.at(caps.layers - 1, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) a(r, c) = static_cast<double>(acts[r * d + c]);
        for (std::size_t c = 0; c < p; ++c) b(r, c) = static_cast<double>(targets[r * p + c]);
    }
    std::vector<double> a_mean(d, 0.0), b_mean(p, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) a_mean[c] += a(r, c);
        for (std::size_t c = 0; c < p; ++c) b_mean[c] += b(r, c);
    }
    for (auto& v : a_mean) v /= static_cast<double>(rows);
    for (auto& v : b_mean) v /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) a(r, c) -= a_mean[c];
        for (std::size_t c = 0; c < p; ++c) b(r, c) -= b_mean[c];
    }

    ReadoutHead head;
    head.weight = solve_ridge(a, b, alpha);
    head.bias.resize(p);
    for (std::size_t c = 0; c < p; ++c) {
        double v = b_mean[c];
        for (std::size_t r = 0; r < d; ++r) v -= a_mean[r] * head.weight(r, c);
        head.bias[c] = v;
    }
    head.ridge_alpha = alpha;
    head.fitted = true;

    double mse = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
            double pred = head.bias[c];
            for (std::size_t k = 0; k < d; ++k)
                pred += static_cast<double>(acts[r * d + k]) * head.weight(k, c);
            const double err = pred - static_cast<double>(targets[r * p + c]);
            mse += err * err;
        }
    }
    head.train_mse = mse / static_cast<double>(rows * p);
    return head;
}

}  // namespace tslens
