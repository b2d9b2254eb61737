#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tslens/common.hpp"

namespace tslens {

enum class SteerStat { median, mean };

inline const char* to_string(SteerStat s) {
    return s == SteerStat::median ? "median" : "mean";
}

/// Stacked per-layer steering vectors S_i (layers 1..L, embedding stream
/// excluded), stored float32 like every other activation artifact.
struct SteeringMatrix {
    std::size_t layers = 0;  // L
    std::size_t tokens = 0;  // N
    std::size_t dim = 0;     // D
    std::vector<float> s;    // L x N x D
    SteerStat stat = SteerStat::median;
    std::int32_t source_label = 0;
    std::int32_t target_label = 0;
    std::uint64_t model_hash = 0;
    std::uint64_t dataset_checksum = 0;

    const float* layer_data(std::size_t layer_1based) const {
        return &s[(layer_1based - 1) * tokens * dim];
    }
};

enum class SteerMode { all_tokens, single_token };

/// lambda scales the intervention; |lambda| outside [0.1, 2.0] is allowed
/// but callers are expected to warn. An empty layer list means every layer
/// 1..L; the embedding stream is never steered.
struct SteerConfig {
    double lambda = 1.0;
    SteerMode mode = SteerMode::all_tokens;
    std::size_t token_index = 0;  // single_token target row
    std::vector<int> layers;      // 1-based; empty = all

    bool applies_to(int layer_1based) const {
        if (layers.empty()) return true;
        return std::find(layers.begin(), layers.end(), layer_1based) != layers.end();
    }

    static bool lambda_in_recommended_range(double lambda) {
        const double mag = lambda < 0 ? -lambda : lambda;
        return mag >= 0.1 && mag <= 2.0;
    }
};

}  // namespace tslens
