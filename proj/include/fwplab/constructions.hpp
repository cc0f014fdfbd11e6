#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fwplab/fwp_layer.hpp"
#include "fwplab/tensor.hpp"

namespace fwplab {

// Single-head vanilla FWP whose forward pass performs one gradient-descent
// step of linear regression on the in-context demonstrations.
struct GdConstruction {
    int d_x = 0;
    int d_y = 0;
    Mat W0;  // d_y x d_x linear-model initialization
    LayerConfig cfg;
    SlowWeights slow;
    Vec w_out;  // readout: zeros over the input block, -1 over the target block
};

GdConstruction build_gd_fwp(int d_x, int d_y, const Mat& W0);

struct GdRunResult {
    Vec prediction;           // w_out^T-extracted readout, equals DeltaW_T z*
    Vec approx_prediction;    // (W0 + DeltaW_T) z*, the "small W0" quantity
    double approx_gap = 0.0;  // max-abs difference between the two (reported, not asserted)
    // Per-step max-abs deviation of the fast-state lower-left block from
    // -DeltaW_t; all entries should sit at rounding error.
    double max_state_trace_dev = 0.0;
};

GdRunResult run_gd_fwp(const GdConstruction& c,
                       const std::vector<std::pair<Vec, Vec>>& demos, const Vec& query);

// DeltaW = lr * sum_t (f(z_t) - W0 z_t) (x) z_t — the independent oracle.
Mat gd_oracle(const std::vector<std::pair<Vec, Vec>>& demos, const Mat& W0, double lr);

// Scalar DeltaNet that tracks parity exactly: fast state flips between 0 and 2.
struct ParityMachine {
    LayerConfig cfg;
    SlowWeights slow;
};

ParityMachine build_parity_machine();
// Returns 1 for odd, 0 for even; tokens must be '0'/'1'.
int run_parity_machine(const ParityMachine& m, const std::string& bits);

struct MemoryDemoResult {
    Vec first_read;   // after storing once
    Vec second_read;  // after storing the same pair again
};

// Store (k, v) twice, read back by q=k, under the given rule (eta=1 for delta).
MemoryDemoResult memory_write_read_demo(const Vec& key, const Vec& value, const UpdateRule& rule);

}  // namespace fwplab
