#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tslens/common.hpp"
#include "tslens/matrix.hpp"
#include "tslens/model.hpp"

namespace tslens {

/// Consecutive layers [start, end], 1-based inclusive, as in the block tables.
struct Block {
    int start = 0;
    int end = 0;

    bool operator==(const Block&) const = default;
    int interior_count() const { return end - start - 1; }
};

struct BlockSet {
    std::vector<Block> blocks;  // disjoint, sorted by start
    double tau = 0.85;
    int k = 3;
    std::uint64_t source_checksum = 0;
    int total_layers = 0;  // 0 when unknown
};

/// Three-phase block identification over a square self-similarity matrix:
/// greedy growth (a layer joins while it clears tau against every member),
/// size filtering, then a full submatrix min >= tau verification. The greedy
/// pass flushes its trailing candidate, otherwise a fully redundant model
/// would yield no blocks at all.
inline BlockSet identify_blocks(const Matrix& s, double tau, int k) {
    if (s.rows != s.cols) throw NotSquare("identify_blocks: similarity matrix not square");
    if (!(tau > 0.0 && tau <= 1.0)) throw Error("identify_blocks: tau must be in (0, 1]");
    if (k < 2) throw Error("identify_blocks: minimum block size must be >= 2");
    const int layers = static_cast<int>(s.rows);
    auto sim = [&](int a, int b) {
        return s(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1));
    };

    // Phase 1: greedy candidate growth
    std::vector<Block> candidates;
    int cur_start = 1, cur_end = 0;  // empty candidate
    auto flush = [&] {
        if (cur_end - cur_start + 1 >= k) candidates.push_back({cur_start, cur_end});
    };
    for (int li = 1; li <= layers; ++li) {
        bool joins = cur_end >= cur_start;  // non-empty candidate
        if (joins) {
            for (int lj = cur_start; lj <= cur_end; ++lj) {
                if (sim(li, lj) < tau) { joins = false; break; }
            }
        } else {
            joins = true;  // vacuous over the empty candidate
        }
        if (joins) {
            if (cur_end < cur_start) cur_start = li;
            cur_end = li;
        } else {
            flush();
            cur_start = cur_end = li;
        }
    }
    flush();

    // Phase 2: size filter
    std::vector<Block> filtered;
    for (const Block& b : candidates)
        if (b.end - b.start + 1 >= k) filtered.push_back(b);

    // Phase 3: block-wide self-similarity (min over the full submatrix,
    // diagonal included)
    BlockSet out;
    out.tau = tau;
    out.k = k;
    out.total_layers = layers;
    for (const Block& b : filtered) {
        double mn = 1e300;
        for (int i = b.start; i <= b.end; ++i)
            for (int j = b.start; j <= b.end; ++j) mn = std::min(mn, sim(i, j));
        if (mn >= tau) out.blocks.push_back(b);
    }
    return out;
}

/// Skip set for Algorithm-1 pruning: interior indices of each selected block;
/// block edges are always retained.
struct PruningPlan {
    std::vector<int> skipped;                      // sorted, 1-based
    std::vector<std::pair<int, int>> retained_edges;
    int total_layers = 0;
};

struct PruneSelection {
    bool all = true;
    int block_index = 0;  // 1-based when all == false

    static PruneSelection every() { return {true, 0}; }
    static PruneSelection single(int index_1based) { return {false, index_1based}; }
};

inline PruningPlan plan_prune(const BlockSet& blocks, int total_layers,
                              PruneSelection selection = PruneSelection::every()) {
    PruningPlan plan;
    plan.total_layers = total_layers;
    std::vector<Block> chosen;
    if (selection.all) {
        chosen = blocks.blocks;
    } else {
        if (selection.block_index < 1 ||
            static_cast<std::size_t>(selection.block_index) > blocks.blocks.size())
            throw BlockOutOfRange("plan_prune: no such block");
        chosen.push_back(blocks.blocks[static_cast<std::size_t>(selection.block_index - 1)]);
    }
    for (const Block& b : chosen) {
        if (b.start < 1 || b.end > total_layers || b.start >= b.end)
            throw BlockOutOfRange("plan_prune: block outside 1..L");
        plan.retained_edges.emplace_back(b.start, b.end);
        for (int j = b.start + 1; j <= b.end - 1; ++j) plan.skipped.push_back(j);
    }
    std::sort(plan.skipped.begin(), plan.skipped.end());
    plan.skipped.erase(std::unique(plan.skipped.begin(), plan.skipped.end()),
                       plan.skipped.end());
    return plan;
}

inline double encoder_sparsity(const PruningPlan& plan) {
    if (plan.total_layers <= 0) throw Error("encoder_sparsity: plan has no layer count");
    return static_cast<double>(plan.skipped.size()) / static_cast<double>(plan.total_layers);
}

inline SkipMask to_skip_mask(const PruningPlan& plan) {
    SkipMask mask(static_cast<std::size_t>(plan.total_layers));
    for (int l : plan.skipped) mask.set(l);
    return mask;
}

// --- JSON round-trip (external interface format) ---

inline nlohmann::json to_json(const BlockSet& b) {
    nlohmann::json j;
    j["tau"] = b.tau;
    j["k"] = b.k;
    j["blocks"] = nlohmann::json::array();
    for (const Block& blk : b.blocks)
        j["blocks"].push_back({{"start", blk.start}, {"end", blk.end}});
    if (b.total_layers > 0) j["total_layers"] = b.total_layers;
    if (b.source_checksum != 0) j["source_checksum"] = hex64(b.source_checksum);
    return j;
}

inline BlockSet blockset_from_json(const nlohmann::json& j) {
    BlockSet b;
    b.tau = j.value("tau", 0.85);
    b.k = j.value("k", 3);
    b.total_layers = j.value("total_layers", 0);
    if (j.contains("source_checksum"))
        b.source_checksum = std::stoull(j["source_checksum"].get<std::string>(), nullptr, 16);
    for (const auto& e : j.at("blocks"))
        b.blocks.push_back({e.at("start").get<int>(), e.at("end").get<int>()});
    return b;
}

inline nlohmann::json to_json(const PruningPlan& p) {
    nlohmann::json j;
    j["total_layers"] = p.total_layers;
    j["skipped"] = p.skipped;
    return j;
}

inline PruningPlan plan_from_json(const nlohmann::json& j) {
    PruningPlan p;
    p.total_layers = j.at("total_layers").get<int>();
    p.skipped = j.at("skipped").get<std::vector<int>>();
    return p;
}

// --- micro-benchmark ---

struct LatencyStats {
    double median_ms = 0.0;
    double mean_ms = 0.0;
    double stdev_ms = 0.0;
    int reps = 0;
};

/// Wall-clock forward latency under the plan's skip mask. Runs single-threaded
/// (workers are not touched; the batch loop here is sequential by design) with
/// five warm-up passes excluded. Median is the primary statistic.
inline LatencyStats bench(const ModelConfig& cfg, const Weights& w, const PruningPlan& plan,
                          int reps, std::span<const float> batch, std::size_t n) {
    if (reps < 10) throw Error("bench: need at least 10 reps");
    SkipMask mask = to_skip_mask(plan);
    if (mask.skip.size() != cfg.layers) {
        if (plan.total_layers != 0 && plan.total_layers != static_cast<int>(cfg.layers))
            throw ShapeMismatch("bench: plan layer count does not match model");
        mask = SkipMask(cfg.layers);
        for (int l : plan.skipped) mask.set(l);
    }
    ForwardOptions opts;
    opts.mask = &mask;
    opts.capture = false;

    std::vector<float> scratch;
    std::vector<float> sink(cfg.tokens() * cfg.dim);
    auto run_once = [&] {
        for (std::size_t s = 0; s < n; ++s)
            forward_sample(cfg, w, batch.data() + s * cfg.seq_len, opts, scratch, nullptr,
                           false, sink.data());
    };

    for (int i = 0; i < 5; ++i) run_once();

    std::vector<double> times_ms(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        run_once();
        const auto t1 = std::chrono::steady_clock::now();
        times_ms[static_cast<std::size_t>(r)] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    LatencyStats stats;
    stats.reps = reps;
    std::vector<double> sorted = times_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    stats.median_ms = (sorted.size() % 2 == 1) ? sorted[mid]
                                               : 0.5 * (sorted[mid - 1] + sorted[mid]);
    double mean = 0.0;
    for (double t : times_ms) mean += t;
    mean /= static_cast<double>(times_ms.size());
    double var = 0.0;
    for (double t : times_ms) var += (t - mean) * (t - mean);
    var /= static_cast<double>(times_ms.size());
    stats.mean_ms = mean;
    stats.stdev_ms = std::sqrt(var);
    return stats;
}

}  // namespace tslens
