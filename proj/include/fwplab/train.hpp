#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fwplab/model.hpp"
#include "fwplab/tasks.hpp"

namespace fwplab {

struct TrainConfig {
    TaskSpec task;
    int steps = 200;
    int batch_size = 32;
    int eval_every = 0;  // 0 = evaluate only after the final step
    int eval_samples = 200;
    double lr = 1e-3;
    // Classification tasks train on per-step prefix labels (each position is
    // labeled by the oracle applied to the prefix consumed so far); turning
    // this off trains on the final-step label only.
    bool per_step_loss = true;
    std::vector<int> eval_lengths = {32, 64};

    void validate() const;
};

struct MetricsRow {
    long step = 0;
    std::string split;  // "train" or "eval"
    double loss = 0.0;
    double accuracy = 0.0;  // episode tasks report negative MSE slot as -1
    int seq_len_bucket = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
    Model model;
    std::vector<MetricsRow> metrics;
    double final_eval_accuracy = 0.0;  // last eval bucket's accuracy
};

// Per-position labels for a classification sample: position 0 is the BOS
// prefix (empty string), position i the first i tokens.
LossSpec prefix_label_loss(const TaskSpec& spec, const Sample& sample, bool per_step);

// Deterministic given (configs, seed); throws NumericError on divergence.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        uint64_t seed);

// Held-out accuracy at a fixed sequence length (classification tasks).
double evaluate_accuracy(const Model& m, const TaskSpec& task, int length, int n,
                         uint64_t seed);

}  // namespace fwplab
