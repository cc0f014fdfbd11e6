#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fwplab/tensor.hpp"
#include "fwplab/update_rules.hpp"

namespace fwplab {

enum class PhiKind { Identity, EluPlusOne, SiluL2Norm };

std::string phi_name(PhiKind kind);
PhiKind phi_from_name(const std::string& name);
Vec phi_map(PhiKind kind, const Vec& x);

double sigmoid(double x);

struct LayerConfig {
    int d_in = 0;
    int d_key = 0;
    int d_out = 0;
    int heads = 1;
    UpdateRule rule = UpdateRule::additive();
    PhiKind phi = PhiKind::Identity;
    bool value_activation = false;
    bool normalized = false;  // additive rule only
    double psi_scale = 2.0;
    double norm_eps = 1e-9;
    // Test hook: feed eta/lambda/a straight from the raw projections instead of
    // the bounded sigmoid mappings. Used by closed-form constructions.
    bool raw_gain_passthrough = false;

    int head_key() const { return d_key / heads; }
    int head_out() const { return d_out / heads; }
    void validate() const;
    // RetNet per-head constant decay, 1 - 2^{-5-h} unless overridden.
    double retnet_lambda(int head) const;
    std::vector<double> retnet_lambda_override;
};

struct SlowWeights {
    Mat Wq;     // d_key x d_in
    Mat Wk;     // d_key x d_in
    Mat Wv;     // d_out x d_in
    Mat w_b;    // H x d_in, per-head learning-rate projection
    Mat w_lam;  // H x d_in, per-head decay projection
    Mat Wa;     // d_out x d_in, GLA row-decay projection
};

SlowWeights init_slow_weights(const LayerConfig& cfg, uint64_t seed);

// Per-head fast memory; everything starts at zero.
struct FastState {
    std::vector<Mat> W;  // H matrices, head_out x head_key
    std::vector<Vec> z;  // H normalizer vectors (normalized path only)
};

FastState zero_state(const LayerConfig& cfg);

struct HeadProjection {
    Vec q, k, v;
    double beta_raw = 0.0;
    double lam_raw = 0.0;
    Vec a_raw;
};

std::vector<HeadProjection> project(const SlowWeights& slow, const LayerConfig& cfg,
                                    const Vec& x);

// Bounded-mapped rule inputs plus the phi-mapped query for one head.
struct MappedStep {
    StepInputs s;
    Vec q_feat;
};

MappedStep map_head_inputs(const LayerConfig& cfg, const HeadProjection& p);

// One recurrent step; returns the layer output and advances the state.
// step_index is only used to name the offending step in numeric errors.
Vec step(const LayerConfig& cfg, const SlowWeights& slow, FastState& state, const Vec& x,
         int step_index = -1);

std::pair<std::vector<Vec>, FastState> forward_seq(const LayerConfig& cfg,
                                                   const SlowWeights& slow,
                                                   const std::vector<Vec>& xs);

}  // namespace fwplab
