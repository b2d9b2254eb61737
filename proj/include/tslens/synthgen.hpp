#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tslens/common.hpp"
#include "tslens/parallel.hpp"
#include "tslens/rng.hpp"

namespace tslens {

/// y(t) = a*sin(2*pi*t/f) + m*t + b. The constant family is the a = 0 case,
/// where f is unused.
struct PatternParams {
    double a = 0.0;  // amplitude
    double f = 0.0;  // period, in time steps
    double m = 0.0;  // slope per step
    double b = 0.0;  // intercept
};

enum class PatternClass {
    constant,
    increasing_slope,
    decreasing_slope,
    sine_constant,
    sine_increasing,
    sine_decreasing,
};

inline const char* to_string(PatternClass c) {
    switch (c) {
        case PatternClass::constant: return "constant";
        case PatternClass::increasing_slope: return "increasing_slope";
        case PatternClass::decreasing_slope: return "decreasing_slope";
        case PatternClass::sine_constant: return "sine_constant";
        case PatternClass::sine_increasing: return "sine_increasing";
        case PatternClass::sine_decreasing: return "sine_decreasing";
    }
    return "?";
}

inline bool pattern_class_from_string(const std::string& s, PatternClass& out) {
    for (PatternClass c : {PatternClass::constant, PatternClass::increasing_slope,
                           PatternClass::decreasing_slope, PatternClass::sine_constant,
                           PatternClass::sine_increasing, PatternClass::sine_decreasing}) {
        if (s == to_string(c)) { out = c; return true; }
    }
    return false;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct GenSpec {
    PatternClass pattern_class = PatternClass::constant;
    Range a, f, m, b;

    void validate() const {
        for (const Range* r : {&a, &f, &m, &b})
            if (!(r->lo <= r->hi)) throw Error("GenSpec: range has min > max");
    }

    /// Parameter ranges with the full-scale period (f = 128); slope and
    /// intercept ranges are shared by every case.
    static GenSpec full_scale(PatternClass c) { return preset(c, 128.0); }

    /// Desk-scale period f = 32 so a length-128 window holds the same four
    /// cycles a length-512 window holds at f = 128.
    static GenSpec desk_scale(PatternClass c) { return preset(c, 32.0); }

    static GenSpec preset(PatternClass c, double sine_period) {
        GenSpec s;
        s.pattern_class = c;
        s.b = {-30.0, 30.0};
        switch (c) {
            case PatternClass::constant: break;
            case PatternClass::increasing_slope: s.m = {0.5, 1.0}; break;
            case PatternClass::decreasing_slope: s.m = {-1.0, -0.5}; break;
            case PatternClass::sine_constant:
                s.a = {50.0, 50.0}; s.f = {sine_period, sine_period};
                break;
            case PatternClass::sine_increasing:
                s.a = {50.0, 50.0}; s.f = {sine_period, sine_period};
                s.m = {0.5, 1.0};
                break;
            case PatternClass::sine_decreasing:
                s.a = {50.0, 50.0}; s.f = {sine_period, sine_period};
                s.m = {-1.0, -0.5};
                break;
        }
        return s;
    }
};

/// Draw order is fixed at (a, f, m, b); a degenerate range U(c, c) yields
/// exactly c since lo + u*(hi - lo) == lo when hi == lo.
inline PatternParams sample_params(const GenSpec& spec, Rng& rng) {
    spec.validate();
    PatternParams p;
    p.a = rng.uniform(spec.a.lo, spec.a.hi);
    p.f = rng.uniform(spec.f.lo, spec.f.hi);
    p.m = rng.uniform(spec.m.lo, spec.m.hi);
    p.b = rng.uniform(spec.b.lo, spec.b.hi);
    return p;
}

/// Evaluate the pattern formula at t = 0 .. length-1.
inline std::vector<double> render(const PatternParams& p, std::size_t length) {
    if (length < 1) throw Error("render: length must be >= 1");
    if (p.a != 0.0 && !(p.f > 0.0))
        throw InvalidPeriod("render: sinusoid requires a positive period");
    std::vector<double> y(length);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (std::size_t t = 0; t < length; ++t) {
        const double td = static_cast<double>(t);
        double v = p.m * td + p.b;
        if (p.a != 0.0) v += p.a * std::sin(two_pi * td / p.f);
        y[t] = v;
    }
    return y;
}

/// Population z-score. Rows with stdev below 1e-12 come back as all zeros
/// with the degenerate flag set instead of erroring, so the constant class
/// survives a normalize-on run.
inline std::vector<double> znormalize(const std::vector<double>& series, bool& degenerate) {
    if (series.size() < 2) throw Error("znormalize: need at least two samples");
    const double n = static_cast<double>(series.size());
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : series) var += (v - mean) * (v - mean);
    const double stdev = std::sqrt(var / n);
    if (stdev < 1e-12) {
        degenerate = true;
        return std::vector<double>(series.size(), 0.0);
    }
    degenerate = false;
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - mean) / stdev;
    return out;
}

struct SeriesSet {
    std::size_t n = 0;
    std::size_t length = 0;
    std::vector<float> series;          // n x length, row-major (float32 on disk too)
    std::vector<std::int32_t> labels;   // class id per row (index into specs)
    std::vector<PatternParams> params;  // per row
    std::uint64_t seed = 0;
    bool normalized = false;

    const float* row(std::size_t i) const { return &series[i * length]; }
    std::uint64_t checksum() const { return fnv1a64(series); }
};

/// Rows are rendered from one child Rng each (child_state = SplitMix64(seed ^ row)),
/// so identical inputs are bit-identical regardless of worker count.
inline SeriesSet make_dataset(const std::vector<GenSpec>& specs, std::size_t n_per_class,
                              std::size_t length, std::uint64_t seed, bool normalize) {
    if (n_per_class < 1) throw Error("make_dataset: n_per_class must be >= 1");
    if (specs.empty()) throw Error("make_dataset: need at least one GenSpec");
    for (const auto& s : specs) s.validate();

    SeriesSet out;
    out.n = n_per_class * specs.size();
    out.length = length;
    out.seed = seed;
    out.normalized = normalize;
    out.series.resize(out.n * length);
    out.labels.resize(out.n);
    out.params.resize(out.n);

    parallel_for(0, out.n, [&](std::size_t row) {
        const std::size_t cls = row / n_per_class;
        Rng rng = Rng::child(seed, row);
        PatternParams p = sample_params(specs[cls], rng);
        std::vector<double> y = render(p, length);
        if (normalize) {
            bool degenerate = false;
            y = znormalize(y, degenerate);
        }
        out.labels[row] = static_cast<std::int32_t>(cls);
        out.params[row] = p;
        for (std::size_t t = 0; t < length; ++t)
            out.series[row * length + t] = static_cast<float>(y[t]);
    });
    return out;
}

}  // namespace tslens
