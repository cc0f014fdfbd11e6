#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fwplab/fwp_layer.hpp"

namespace fwplab {

struct BenchRow {
    std::string form;  // recurrent | chunkwise | quadratic
    std::string rule;
    int T = 0;
    int S = 0;
    int d_key = 0;
    int d_out = 0;
    int heads = 0;
    double median_ns = 0.0;
    double p10_ns = 0.0;
    double p90_ns = 0.0;
    double max_abs_diff_vs_recurrent = 0.0;
};

std::string bench_csv(const std::vector<BenchRow>& rows);

// Times every execution form available for cfg.rule on one random input
// stream. Every timed form is first checked against the recurrent reference;
// a max-abs difference above 1e-9 raises NumericError before any timing.
std::vector<BenchRow> bench_forms(const LayerConfig& cfg, int T, int S, int reps,
                                  uint64_t seed);

}  // namespace fwplab
