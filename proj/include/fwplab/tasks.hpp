#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fwplab/tensor.hpp"

namespace fwplab {

enum class TaskKind { Parity, ModAdd, AnBn, AnBnCn, IclRegression };

struct TaskSpec {
    TaskKind kind = TaskKind::Parity;
    int modulus = 5;  // modadd only
    int L_min = 1;
    int L_max = 12;
    // icl_regression only
    int d_x = 3;
    int d_y = 2;
    double noise_sd = 0.0;
    int n_demos = 8;

    void validate() const;
};

std::string task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

struct Sample {
    std::string tokens;
    int label = 0;  // parity: 0 even / 1 odd; modadd: residue; anbn(cn): 0 non-member / 1 member
};

struct Episode {
    std::vector<std::pair<Vec, Vec>> demos;
    Vec query;
    Vec query_target;
    bool synchronous = true;
};

// Label oracles (independent brute-force definitions).
int parity_label(const std::string& tokens);
int modadd_label(const std::string& tokens, int modulus);
bool anbn_member(const std::string& tokens);
bool anbncn_member(const std::string& tokens);

std::vector<Sample> generate_samples(const TaskSpec& spec, uint64_t seed, int n);
std::vector<Episode> generate_episodes(const TaskSpec& spec, uint64_t seed, int n);

// Vocabulary for a task; BOS is always the last symbol.
std::vector<char> task_vocab(TaskKind kind, int modulus = 5);

// One-hot columns with a leading BOS symbol.
std::vector<Vec> encode(const Sample& sample, const std::vector<char>& vocab);
std::string decode(const std::vector<Vec>& encoded, const std::vector<char>& vocab);

// Baseline sequence cells.
Vec rnn_step(const Mat& Wr, const Mat& Wi, const Vec& s, const Vec& x);
Vec ssm_cell_step(const Vec& r, const Vec& i, const Vec& s, const Vec& x);

struct BucketAccuracy {
    int length_min = 0;
    int length_max = 0;
    int correct = 0;
    int total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

}  // namespace fwplab
