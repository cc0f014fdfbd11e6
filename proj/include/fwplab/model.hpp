#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fwplab/fwp_layer.hpp"
#include "fwplab/tensor.hpp"

namespace fwplab {

// Named parameters with matching gradient accumulators; iteration order is
// the registration order, so reductions and optimizer sweeps are deterministic.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Mat> values;
    std::vector<Mat> grads;

    int add(const std::string& name, Mat init);
    int index_of(const std::string& name) const;
    void zero_grads();
    size_t entry_count() const;
};

enum class MixerKind { Fwp, SoftmaxAttention, Rnn, SsmCell };

std::string mixer_name(MixerKind kind);
MixerKind mixer_from_name(const std::string& name);

struct ModelConfig {
    int d_in = 3;       // one-hot vocab size, or episode input width
    int d_model = 32;
    int n_blocks = 2;   // 0 = embed -> bare mixer -> readout
    int n_out = 2;      // readout width (classes, or d_y for regression)
    MixerKind mixer = MixerKind::Fwp;
    // Fwp mixer settings; d_in/d_key/d_out are derived from d_model.
    UpdateRule rule = UpdateRule::delta();
    PhiKind phi = PhiKind::SiluL2Norm;
    int heads = 2;
    double psi_scale = 2.0;
    bool value_activation = false;
    double ln_eps = 1e-5;

    LayerConfig mixer_layer_config() const;
    void validate() const;
};

struct Model {
    ModelConfig cfg;
    ParamSet params;
};

Model build_model(const ModelConfig& cfg, uint64_t seed);

// Which positions of the output sequence incur loss, and against what.
struct LossSpec {
    enum class Kind { CrossEntropy, Mse } kind = Kind::CrossEntropy;
    std::vector<int> positions;
    std::vector<int> labels;   // CrossEntropy, parallel to positions
    std::vector<Vec> targets;  // Mse, parallel to positions
};

LossSpec final_step_label(int seq_len, int label);

// Forward pass only; returns logits at every time step.
std::vector<Vec> model_forward(const Model& m, const std::vector<Vec>& xs);

// Forward + reverse-mode BPTT; accumulates into params.grads, returns loss.
// logits_out, when given, receives the per-step logits from the forward pass.
double model_forward_backward(Model& m, const std::vector<Vec>& xs, const LossSpec& loss,
                              std::vector<Vec>* logits_out = nullptr);

double model_loss(const Model& m, const std::vector<Vec>& xs, const LossSpec& loss);

// Central finite differences over every parameter entry vs the analytic
// gradients; returns the max relative error.
double finite_diff_check(Model& m, const std::vector<Vec>& xs, const LossSpec& loss,
                         double eps = 1e-6);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
    long long step = 0;
    std::vector<Mat> m1;
    std::vector<Mat> m2;
};

AdamState make_adam(const ParamSet& params, double lr);
void adam_step(ParamSet& params, AdamState& state);

}  // namespace fwplab
