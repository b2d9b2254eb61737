#include <doctest.h>

#include <cmath>
#include <span>
#include <vector>

#include "helpers.hpp"
#include "tslens/model.hpp"
#include "tslens/io.hpp"
#include "tslens/probe.hpp"
#include "tslens/synthgen.hpp"

using namespace tslens;
using testutil::random_matrix;

namespace {

// Sample Fisher criterion of a direction over two point sets (population
// variances; the shift-free form the probe is supposed to maximize).
double criterion(const Matrix& h_s, const Matrix& h_c, const std::vector<double>& w) {
    auto stats = [&](const Matrix& h, double& mean, double& var) {
        std::vector<double> proj(h.rows);
        for (std::size_t i = 0; i < h.rows; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < h.cols; ++j) v += h(i, j) * w[j];
            proj[i] = v;
        }
        mean = 0.0;
        for (double v : proj) mean += v;
        mean /= static_cast<double>(proj.size());
        var = 0.0;
        for (double v : proj) var += (v - mean) * (v - mean);
        var /= static_cast<double>(proj.size());
    };
    double mu_s, var_s, mu_c, var_c;
    stats(h_s, mu_s, var_s);
    stats(h_c, mu_c, var_c);
    return (mu_s - mu_c) * (mu_s - mu_c) / (var_s + var_c);
}

// Coarse angle grid plus golden-section refinement; 2-D criterion oracle.
double best_direction_angle(const Matrix& h_s, const Matrix& h_c) {
    auto value = [&](double angle) {
        std::vector<double> w = {std::cos(angle), std::sin(angle)};
        return criterion(h_s, h_c, w);
    };
    double best = 0.0, best_val = -1.0;
    for (int i = 0; i < 720; ++i) {
        const double angle = 3.14159265358979323846 * i / 720.0;
        const double v = value(angle);
        if (v > best_val) {
            best_val = v;
            best = angle;
        }
    }
    double lo = best - 0.01, hi = best + 0.01;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    for (int it = 0; it < 80; ++it) {
        if (value(x1) < value(x2)) {
            lo = x1;
            x1 = x2;
            x2 = lo + phi * (hi - lo);
        } else {
            hi = x2;
            x2 = x1;
            x1 = hi - phi * (hi - lo);
        }
    }
    return 0.5 * (lo + hi);
}

CaptureSet default_captures(std::size_t n_per_class, std::uint64_t seed = 7) {
    ModelConfig cfg;
    Weights w = init_model(cfg);
    std::vector<GenSpec> specs = {GenSpec::desk_scale(PatternClass::constant),
                                  GenSpec::desk_scale(PatternClass::sine_constant)};
    SeriesSet data = make_dataset(specs, n_per_class, cfg.seq_len, seed, false);
    ForwardResult r = forward(cfg, w, std::span<const float>(data.series), data.n);
    r.captures.labels = data.labels;
    r.captures.dataset_checksum = data.checksum();
    return r.captures;
}

}  // namespace

TEST_CASE("fit_fisher_probe separates well-separated 1-D clusters") {
    Matrix h_s(2, 1, {10.0, 10.1});
    Matrix h_c(2, 1, {0.0, 0.1});
    Probe p = fit_fisher_probe(h_s, h_c);
    CHECK(p.train_accuracy == 1.0);
    CHECK(std::abs(std::abs(p.w[0]) - 1.0) < 1e-12);  // unit norm
    CHECK(predict(p, &h_s.data[0]) == p.pos_label);
    CHECK(predict(p, &h_c.data[0]) == p.neg_label);
}

TEST_CASE("fit_fisher_probe rejects coincident class means") {
    Matrix h(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        h(i, 0) = static_cast<double>(i);
        h(i, 1) = 1.0 - static_cast<double>(i);
    }
    CHECK_THROWS_AS(fit_fisher_probe(h, h, 0.0), DegenerateClasses);
}

TEST_CASE("fit_fisher_probe matches the criterion-maximization oracle") {
    Rng rng(3);
    // shared covariance via a fixed mixing matrix
    const double mix[2][2] = {{1.4, 0.0}, {0.8, 0.7}};
    auto sample_class = [&](double mx, double my, std::size_t n) {
        Matrix h(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double g0 = rng.gaussian(), g1 = rng.gaussian();
            h(i, 0) = mx + mix[0][0] * g0 + mix[0][1] * g1;
            h(i, 1) = my + mix[1][0] * g0 + mix[1][1] * g1;
        }
        return h;
    };
    Matrix h_s = sample_class(1.5, 0.6, 4000);
    Matrix h_c = sample_class(0.0, 0.0, 4000);
    Probe p = fit_fisher_probe(h_s, h_c);

    const double got_angle = std::atan2(p.w[1], p.w[0]);
    const double oracle_angle = best_direction_angle(h_s, h_c);
    double diff = std::abs(got_angle - oracle_angle);
    while (diff > 3.14159265358979323846 / 2.0) diff = std::abs(diff - 3.14159265358979323846);
    CHECK(diff < 1e-3);
}

TEST_CASE("closed form beats 1000 random directions on 50 instances") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng.next_u64() % 6;
        const std::size_t n = 40;
        Matrix basis = random_matrix(rng, d, d, 0.6);
        std::vector<double> mu(d);
        for (auto& v : mu) v = rng.gaussian(0.0, 1.0);
        auto sample_class = [&](double shift) {
            Matrix h(n, d);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> g(d);
                for (auto& v : g) v = rng.gaussian();
                for (std::size_t a = 0; a < d; ++a) {
                    double v = shift * mu[a];
                    for (std::size_t b = 0; b < d; ++b) v += basis(a, b) * g[b];
                    h(i, a) = v;
                }
            }
            return h;
        };
        Matrix h_s = sample_class(1.0);
        Matrix h_c = sample_class(0.0);
        Probe p = fit_fisher_probe(h_s, h_c);
        const double fitted = criterion(h_s, h_c, p.w);
        for (int r = 0; r < 1000; ++r) {
            std::vector<double> w(d);
            double nrm = 0.0;
            for (auto& v : w) {
                v = rng.gaussian();
                nrm += v * v;
            }
            nrm = std::sqrt(nrm);
            for (auto& v : w) v /= nrm;
            CHECK(criterion(h_s, h_c, w) <= fitted * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("predict midpoints and tie rule") {
    Probe p;
    p.w = {1.0};
    p.threshold = 2.0;
    p.pos_label = 7;
    p.neg_label = 3;
    const double above = 2.5, below = 1.5, tie = 2.0;
    CHECK(predict(p, &above) == 7);
    CHECK(predict(p, &below) == 3);
    CHECK(predict(p, &tie) == 3);  // ties go to the negative class
}

TEST_CASE("predict is invariant to positive rescaling of w and threshold") {
    Rng rng(11);
    Probe p;
    p.w = {0.3, -0.9, 0.2};
    p.threshold = 0.4;
    Probe scaled = p;
    for (auto& v : scaled.w) v *= 13.5;
    scaled.threshold *= 13.5;
    for (int i = 0; i < 200; ++i) {
        double h[3] = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
        CHECK(predict(p, h) == predict(scaled, h));
    }
}

TEST_CASE("ldr trivial values and flags") {
    bool degenerate = false;
    CHECK(ldr({1.0, 1.0, 0.5, 0.5, 4, 4}, degenerate) == 0.0);
    CHECK_FALSE(degenerate);

    CHECK(ldr({1.0, 0.0, 0.5, 0.5, 4, 4}, degenerate) == doctest::Approx(1.0));
    CHECK(ldr({3.0, 1.0, 1.0, 1.0, 4, 4}, degenerate) == doctest::Approx(2.0));

    CHECK(ldr({1.0, 0.0, 0.0, 0.0, 4, 4}, degenerate) == 0.0);
    CHECK(degenerate);  // vanishing pooled variance
    CHECK(ldr({1.0, 0.0, 0.5, 0.5, 0, 4}, degenerate) == 0.0);
    CHECK(degenerate);  // empty predicted class
}

TEST_CASE("ldr is invariant under a common affine transform") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z_s(30), z_c(30);
        for (auto& v : z_s) v = rng.gaussian(1.0, 0.7);
        for (auto& v : z_c) v = rng.gaussian(0.0, 0.4);
        auto stats = [](const std::vector<double>& zs, const std::vector<double>& zc) {
            ClassStats st;
            st.count_s = zs.size();
            st.count_c = zc.size();
            for (double v : zs) st.mu_s += v;
            st.mu_s /= static_cast<double>(zs.size());
            for (double v : zc) st.mu_c += v;
            st.mu_c /= static_cast<double>(zc.size());
            for (double v : zs) st.var_s += (v - st.mu_s) * (v - st.mu_s);
            st.var_s /= static_cast<double>(zs.size());
            for (double v : zc) st.var_c += (v - st.mu_c) * (v - st.mu_c);
            st.var_c /= static_cast<double>(zc.size());
            return st;
        };
        bool deg = false;
        const double base = ldr(stats(z_s, z_c), deg);
        const double a = 2.75, b = -4.0;
        std::vector<double> t_s = z_s, t_c = z_c;
        for (auto& v : t_s) v = a * v + b;
        for (auto& v : t_c) v = a * v + b;
        const double transformed = ldr(stats(t_s, t_c), deg);
        CHECK(std::abs(transformed - base) < 1e-9 * std::max(1.0, base));
    }
}

TEST_CASE("minmax_scale affine rescale and constant input") {
    Matrix raw(2, 2, {0.0, 2.0, 4.0, 8.0});
    Matrix scaled = minmax_scale(raw);
    CHECK(scaled(0, 0) == doctest::Approx(0.0));
    CHECK(scaled(0, 1) == doctest::Approx(0.25));
    CHECK(scaled(1, 0) == doctest::Approx(0.5));
    CHECK(scaled(1, 1) == doctest::Approx(1.0));

    Matrix flat(3, 3);
    for (auto& v : flat.data) v = 5.5;
    Matrix zeros = minmax_scale(flat);
    for (double v : zeros.data) CHECK(v == 0.0);
}

TEST_CASE("ldr_map on the default corpus spans [0, 1]") {
    CaptureSet caps = default_captures(96);
    ProbeSet probes;
    LDRMap map = ldr_map(caps, 1, 0, &probes);
    REQUIRE(map.values.rows == 8);
    REQUIRE(map.values.cols == 16);
    CHECK(probes.probes.size() == 8 * 16);

    double lo = 1e300, hi = -1e300;
    for (double v : map.values.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    for (double v : map.raw.data) CHECK(v >= 0.0);
}

TEST_CASE("probe_token_averaged reaches high accuracy on the default corpus") {
    CaptureSet caps = default_captures(96);
    auto results = probe_token_averaged(caps, 1, 0);
    REQUIRE(results.size() == 9);
    double best = 0.0;
    for (const auto& r : results) best = std::max(best, r.holdout_accuracy);
    CHECK(best >= 0.95);
}

TEST_CASE("probe_token_averaged permutation null stays near chance") {
    CaptureSet caps = default_captures(96);
    const std::size_t layers = caps.layers;
    std::vector<double> mean_acc(layers, 0.0);
    Rng rng(2024);
    const int shuffles = 20;
    for (int s = 0; s < shuffles; ++s) {
        std::vector<std::int32_t> shuffled = caps.labels;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.next_u64() % i]);
        auto results = probe_token_averaged(caps, 1, 0, &shuffled);
        for (std::size_t l = 0; l < layers; ++l)
            mean_acc[l] += results[l].holdout_accuracy;
    }
    for (std::size_t l = 0; l < layers; ++l) {
        mean_acc[l] /= shuffles;
        CHECK(mean_acc[l] >= 0.4);
        CHECK(mean_acc[l] <= 0.6);
    }
}

// The committed golden map comes from the reference run over the full
// default corpus (1024 rows, seed 7, unnormalized) through the seed-1 model.
TEST_CASE("ldr_map matches the committed golden file") {
    CaptureSet caps = default_captures(512);
    LDRMap map = ldr_map(caps, 1, 0);
    Matrix golden =
        read_matrix_csv(std::string(TSLENS_SOURCE_DIR) + "/tests/golden/ldr_map_default.csv");
    REQUIRE(golden.rows == map.values.rows);
    REQUIRE(golden.cols == map.values.cols);
    for (std::size_t i = 0; i < golden.data.size(); ++i)
        CHECK(std::abs(golden.data[i] - map.values.data[i]) < 1e-6);
}

TEST_CASE("probe_token_averaged rejects duplicated classes") {
    CaptureSet caps = default_captures(8);
    // give both labels to identical activation rows
    CaptureSet dup = caps;
    for (std::size_t li = 0; li < dup.layers; ++li)
        for (std::size_t i = 0; i < dup.n; ++i)
            std::copy(caps.at(li, 0), caps.at(li, 0) + caps.sample_stride(), dup.at(li, i));
    CHECK_THROWS_AS(probe_token_averaged(dup, 1, 0), DegenerateClasses);
}
