#pragma once

#include <utility>
#include <vector>

#include "fwplab/fwp_layer.hpp"
#include "fwplab/tensor.hpp"

namespace fwplab {

struct ChunkPlan {
    int S = 1;  // chunk size
    int T = 0;  // sequence length; the last chunk may be partial

    ChunkPlan(int chunk_size, int seq_len) : S(chunk_size), T(seq_len) {
        if (S < 1) throw ConfigError("ChunkPlan: chunk size must be >= 1");
        if (T < 0) throw ConfigError("ChunkPlan: negative sequence length");
    }
    int num_chunks() const { return (T + S - 1) / S; }
};

// One chunk of the additive rule: Y = W_in Q + V (K^T Q (.) M) with the
// multiplicative-zero causal mask, W_out = W_in + V K^T. Columns of Q/K/V are
// the (already phi-mapped) per-step vectors.
std::pair<Mat, Mat> chunk_forward_additive(const Mat& Q, const Mat& K, const Mat& V,
                                           const Mat& W_in);

// Decayed analogue. row_decay[tau] in (0,1]^{d_out} is the per-row state decay
// applied at step tau (scalar-decay rules replicate the scalar across rows);
// out_scale[tau] weighs the outer-product write of step tau.
std::pair<Mat, Mat> chunk_forward_decay(const Mat& Q, const Mat& K, const Mat& V,
                                        const std::vector<Vec>& row_decay,
                                        const std::vector<double>& out_scale,
                                        const Mat& W_in);

bool rule_supports_chunkwise(RuleKind kind);

// Full-sequence chunkwise execution of an FWP layer; exactly matches
// forward_seq for every supported rule (additive and the decay family).
std::vector<Vec> chunkwise_layer_forward(const LayerConfig& cfg, const SlowWeights& slow,
                                         const std::vector<Vec>& xs, int chunk_size);

}  // namespace fwplab
