#include "fwplab/train.hpp"

#include <cmath>
#include <sstream>

namespace fwplab {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t idx) {
    return seed * 0x9E3779B97F4A7C15ULL + idx;
}

int num_classes(const TaskSpec& spec) {
    switch (spec.kind) {
        case TaskKind::Parity:
        case TaskKind::AnBn:
        case TaskKind::AnBnCn: return 2;
        case TaskKind::ModAdd: return spec.modulus;
        case TaskKind::IclRegression: return 0;
    }
    throw ConfigError("num_classes: unknown task");
}

int prefix_oracle(const TaskSpec& spec, const std::string& prefix) {
    switch (spec.kind) {
        case TaskKind::Parity: return parity_label(prefix);
        case TaskKind::ModAdd: return modadd_label(prefix, spec.modulus);
        case TaskKind::AnBn: return anbn_member(prefix) ? 1 : 0;
        case TaskKind::AnBnCn: return anbncn_member(prefix) ? 1 : 0;
        case TaskKind::IclRegression: break;
    }
    throw ConfigError("prefix_oracle: not a classification task");
}

int argmax(const Vec& v) {
    int best = 0;
    for (int i = 1; i < v.dim(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// [x ; y ; 0] per demo, then [x* ; 0 ; 1] for the query slot.
std::vector<Vec> encode_episode(const Episode& ep, int d_x, int d_y) {
    if (!ep.synchronous)
        throw ConfigError("train: only synchronous-feedback episodes are supported");
    std::vector<Vec> xs;
    const int d = d_x + d_y + 1;
    for (const auto& [x, y] : ep.demos) {
        Vec row(d);
        for (int i = 0; i < d_x; ++i) row[i] = x[i];
        for (int i = 0; i < d_y; ++i) row[d_x + i] = y[i];
        xs.push_back(std::move(row));
    }
    Vec q(d);
    for (int i = 0; i < d_x; ++i) q[i] = ep.query[i];
    q[d - 1] = 1.0;  // is-query indicator
    xs.push_back(std::move(q));
    return xs;
}

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats eval_classification(const Model& m, const TaskSpec& task,
                              const std::vector<char>& vocab, int length, int n,
                              uint64_t seed) {
    TaskSpec spec = task;
    spec.L_min = spec.L_max = length;
    const std::vector<Sample> samples = generate_samples(spec, seed, n);
    EvalStats st;
    for (const Sample& s : samples) {
        const std::vector<Vec> xs = encode(s, vocab);
        const std::vector<Vec> logits = model_forward(m, xs);
        const Vec& last = logits.back();
        const Vec probs = softmax(last);
        st.loss += -std::log(std::max(probs[s.label], 1e-300));
        if (argmax(last) == s.label) st.accuracy += 1.0;
    }
    st.loss /= n;
    st.accuracy /= n;
    return st;
}

}  // namespace

void TrainConfig::validate() const {
    task.validate();
    if (steps < 0) throw ConfigError("TrainConfig: steps must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (eval_samples < 1) throw ConfigError("TrainConfig: eval_samples must be >= 1");
    if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "step,split,loss,accuracy,seq_len_bucket\n";
    for (const MetricsRow& r : rows)
        out << r.step << ',' << r.split << ',' << r.loss << ',' << r.accuracy << ','
            << r.seq_len_bucket << '\n';
    return out.str();
}

LossSpec prefix_label_loss(const TaskSpec& spec, const Sample& sample, bool per_step) {
    const int T = static_cast<int>(sample.tokens.size()) + 1;  // + BOS
    LossSpec loss;
    loss.kind = LossSpec::Kind::CrossEntropy;
    if (!per_step) {
        loss.positions = {T - 1};
        loss.labels = {sample.label};
        return loss;
    }
    for (int t = 0; t < T; ++t) {
        loss.positions.push_back(t);
        loss.labels.push_back(prefix_oracle(spec, sample.tokens.substr(0, t)));
    }
    return loss;
}

double evaluate_accuracy(const Model& m, const TaskSpec& task, int length, int n,
                         uint64_t seed) {
    const std::vector<char> vocab = task_vocab(task.kind, task.modulus);
    return eval_classification(m, task, vocab, length, n, seed).accuracy;
}

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        uint64_t seed) {
    model_cfg.validate();
    train_cfg.validate();
    const TaskSpec& task = train_cfg.task;
    const bool episodic = task.kind == TaskKind::IclRegression;

    std::vector<char> vocab;
    if (!episodic) {
        vocab = task_vocab(task.kind, task.modulus);
        if (model_cfg.d_in != static_cast<int>(vocab.size()))
            throw ConfigError("train: d_in must equal the task vocab size (" +
                              std::to_string(vocab.size()) + ")");
        if (model_cfg.n_out != num_classes(task))
            throw ConfigError("train: n_out must equal the task class count");
    } else {
        if (model_cfg.d_in != task.d_x + task.d_y + 1)
            throw ConfigError("train: d_in must be d_x + d_y + 1 for episodes");
        if (model_cfg.n_out != task.d_y)
            throw ConfigError("train: n_out must equal d_y for episodes");
    }

    TrainResult result;
    result.model = build_model(model_cfg, mix_seed(seed, 1));
    Model& m = result.model;
    AdamState adam = make_adam(m.params, train_cfg.lr);
    const double inv_batch = 1.0 / train_cfg.batch_size;

    auto run_eval = [&](long step) {
        if (episodic) {
            const std::vector<Episode> eps =
                generate_episodes(task, mix_seed(seed, 700000 + step), train_cfg.eval_samples);
            double mse = 0.0;
            for (const Episode& ep : eps) {
                const std::vector<Vec> xs = encode_episode(ep, task.d_x, task.d_y);
                const std::vector<Vec> logits = model_forward(m, xs);
                const Vec diff = sub(logits.back(), ep.query_target);
                mse += dot(diff, diff) / task.d_y;
            }
            mse /= train_cfg.eval_samples;
            result.metrics.push_back({step, "eval", mse, -1.0, task.n_demos + 1});
            result.final_eval_accuracy = -1.0;
            return;
        }
        for (int L : train_cfg.eval_lengths) {
            const EvalStats st = eval_classification(m, task, vocab, L, train_cfg.eval_samples,
                                                     mix_seed(seed, 800000 + L));
            result.metrics.push_back({step, "eval", st.loss, st.accuracy, L});
            result.final_eval_accuracy = st.accuracy;
        }
    };

    for (long step = 0; step < train_cfg.steps; ++step) {
        m.params.zero_grads();
        double batch_loss = 0.0;
        double batch_acc = 0.0;
        if (!episodic) {
            const std::vector<Sample> batch =
                generate_samples(task, mix_seed(seed, 10000 + step), train_cfg.batch_size);
            for (const Sample& s : batch) {
                const std::vector<Vec> xs = encode(s, vocab);
                const LossSpec loss = prefix_label_loss(task, s, train_cfg.per_step_loss);
                std::vector<Vec> logits;
                batch_loss += model_forward_backward(m, xs, loss, &logits) * inv_batch;
                if (argmax(logits.back()) == s.label) batch_acc += inv_batch;
            }
        } else {
            const std::vector<Episode> batch =
                generate_episodes(task, mix_seed(seed, 10000 + step), train_cfg.batch_size);
            for (const Episode& ep : batch) {
                const std::vector<Vec> xs = encode_episode(ep, task.d_x, task.d_y);
                LossSpec loss;
                loss.kind = LossSpec::Kind::Mse;
                loss.positions = {static_cast<int>(xs.size()) - 1};
                loss.targets = {ep.query_target};
                batch_loss += model_forward_backward(m, xs, loss) * inv_batch;
            }
            batch_acc = -1.0;
        }
        if (!std::isfinite(batch_loss))
            throw NumericError("training diverged at step " + std::to_string(step));
        for (Mat& g : m.params.grads)
            for (double& v : g.a) v *= inv_batch;
        adam_step(m.params, adam);
        result.metrics.push_back({step, "train", batch_loss, batch_acc, task.L_max});
        if (train_cfg.eval_every > 0 && (step + 1) % train_cfg.eval_every == 0 &&
            step + 1 < train_cfg.steps)
            run_eval(step + 1);
    }
    run_eval(train_cfg.steps);
    return result;
}

}  // namespace fwplab
