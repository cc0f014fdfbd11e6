#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fwplab/attention.hpp"
#include "fwplab/bench.hpp"
#include "fwplab/checkpoint.hpp"
#include "fwplab/chunkwise.hpp"
#include "fwplab/constructions.hpp"
#include "fwplab/tasks.hpp"
#include "fwplab/train.hpp"

#ifdef FWPLAB_OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fwplab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitThreshold = 4;

uint64_t mix_seed(uint64_t seed, uint64_t idx) {
    return seed * 0x9E3779B97F4A7C15ULL + idx;
}

void apply_thread_cap() {
#ifdef FWPLAB_OPENMP
    if (const char* env = std::getenv("FWPLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
}

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const std::string& k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError("unknown config key \"" + it.key() + "\" in " + where);
    }
}

void write_out(const std::string& out_dir, const std::string& name,
               const std::string& contents) {
    fs::create_directories(out_dir);
    atomic_write_file((fs::path(out_dir) / name).string(), contents);
}

// ---------- equiv ----------

std::vector<Vec> random_stream(int d, int T, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Vec> xs(static_cast<size_t>(T), Vec(d));
    for (Vec& x : xs)
        for (double& v : x.a) v = dist(rng);
    return xs;
}

double stream_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double d = 0.0;
    for (size_t t = 0; t < a.size(); ++t) d = std::max(d, max_abs_diff(a[t], b[t]));
    return d;
}

// Columns of the output matrix vs the per-step vectors.
double mat_stream_diff(const Mat& Y, const std::vector<Vec>& ys) {
    double d = 0.0;
    for (int t = 0; t < Y.cols; ++t)
        for (int i = 0; i < Y.rows; ++i) d = std::max(d, std::fabs(Y(i, t) - ys[t][i]));
    return d;
}

double pair_nosoftmax_vs_fwp(uint64_t seed, bool inject) {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 16;
    cfg.heads = (seed % 2 == 0) ? 1 : 2;
    cfg.rule = UpdateRule::additive();
    cfg.phi = PhiKind::Identity;
    SlowWeights slow = init_slow_weights(cfg, seed);
    if (inject) slow.Wk(0, 0) += 1e-3;
    const std::vector<Vec> xs = random_stream(cfg.d_in, 64, mix_seed(seed, 2));
    std::vector<Vec> recur = forward_seq(cfg, slow, xs).first;
    if (inject) slow.Wk(0, 0) -= 1e-3;  // attention side sees the unperturbed weights

    const int H = cfg.heads, hk = cfg.head_key(), ho = cfg.head_out();
    const int T = static_cast<int>(xs.size());
    std::vector<Vec> att(static_cast<size_t>(T), Vec(cfg.d_out));
    for (int h = 0; h < H; ++h) {
        Mat Q(hk, T), K(hk, T), V(ho, T);
        for (int t = 0; t < T; ++t) {
            const std::vector<HeadProjection> proj = project(slow, cfg, xs[t]);
            for (int i = 0; i < hk; ++i) {
                Q(i, t) = proj[h].q[i];
                K(i, t) = proj[h].k[i];
            }
            for (int i = 0; i < ho; ++i) V(i, t) = proj[h].v[i];
        }
        const Mat Y = nosoftmax_attention(Q, K, V);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < ho; ++i) att[t][h * ho + i] = Y(i, t);
    }
    return stream_diff(recur, att);
}

double pair_linearized_vs_normalized(uint64_t seed, bool inject) {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 8;
    cfg.heads = 1;
    cfg.rule = UpdateRule::additive();
    cfg.phi = PhiKind::EluPlusOne;
    cfg.normalized = true;
    cfg.norm_eps = 0.0;
    SlowWeights slow = init_slow_weights(cfg, seed);
    if (inject) slow.Wq(0, 0) += 1e-3;
    const std::vector<Vec> xs = random_stream(cfg.d_in, 48, mix_seed(seed, 3));
    const std::vector<Vec> recur = forward_seq(cfg, slow, xs).first;
    if (inject) slow.Wq(0, 0) -= 1e-3;

    const int T = static_cast<int>(xs.size());
    Mat Q(cfg.d_key, T), K(cfg.d_key, T), V(cfg.d_out, T);
    for (int t = 0; t < T; ++t) {
        const std::vector<HeadProjection> proj = project(slow, cfg, xs[t]);
        for (int i = 0; i < cfg.d_key; ++i) {
            Q(i, t) = proj[0].q[i];
            K(i, t) = proj[0].k[i];
        }
        for (int i = 0; i < cfg.d_out; ++i) V(i, t) = proj[0].v[i];
    }
    const Mat Y = linearized_attention(Q, K, V,
                                       [](const Vec& v) { return phi_map(PhiKind::EluPlusOne, v); });
    return mat_stream_diff(Y, recur);
}

double pair_softmax_parallel_vs_sequential(uint64_t seed, bool inject) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int d = 8, T = 40;
    Mat Q(d, T), K(d, T), V(d, T);
    for (double& v : Q.a) v = dist(rng);
    for (double& v : K.a) v = dist(rng);
    for (double& v : V.a) v = dist(rng);
    Mat K2 = K;
    if (inject) K2(0, 0) += 1e-3;
    const Mat Y = softmax_attention_parallel(Q, K2, V);
    KvCache cache(d, d);
    double diff = 0.0;
    for (int t = 0; t < T; ++t) {
        Vec q(d), k(d), v(d);
        for (int i = 0; i < d; ++i) {
            q[i] = Q(i, t);
            k[i] = K(i, t);
            v[i] = V(i, t);
        }
        const Vec y = softmax_attention_step(cache, q, k, v);
        for (int i = 0; i < d; ++i) diff = std::max(diff, std::fabs(y[i] - Y(i, t)));
    }
    return diff;
}

double pair_chunk_vs_recurrent(const UpdateRule& rule, PhiKind phi, uint64_t seed,
                               bool inject) {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 8;
    cfg.heads = 2;
    cfg.rule = rule;
    cfg.phi = phi;
    SlowWeights slow = init_slow_weights(cfg, seed);
    const std::vector<Vec> xs = random_stream(cfg.d_in, 37, mix_seed(seed, 5));
    std::vector<Vec> recur = forward_seq(cfg, slow, xs).first;
    if (inject) slow.Wv(0, 0) += 1e-3;
    return stream_diff(recur, chunkwise_layer_forward(cfg, slow, xs, 5));
}

struct EquivPair {
    std::string name;
    double tol;
    std::function<double(uint64_t, bool)> run;
};

std::vector<EquivPair> equiv_registry() {
    std::vector<EquivPair> pairs;
    pairs.push_back({"nosoftmax_vs_fwp", 1e-10, pair_nosoftmax_vs_fwp});
    pairs.push_back({"linearized_vs_normalized_fwp", 1e-10, pair_linearized_vs_normalized});
    pairs.push_back(
        {"softmax_parallel_vs_sequential", 1e-12, pair_softmax_parallel_vs_sequential});
    pairs.push_back({"chunk_vs_recurrent_additive", 1e-9, [](uint64_t s, bool inj) {
                         return pair_chunk_vs_recurrent(UpdateRule::additive(),
                                                        PhiKind::EluPlusOne, s, inj);
                     }});
    for (const RuleKind kind : {RuleKind::RetNet, RuleKind::Mamba2, RuleKind::GatedRFA,
                                RuleKind::MLSTM, RuleKind::GLA}) {
        UpdateRule rule;
        rule.kind = kind;
        pairs.push_back({"chunk_vs_recurrent_" + rule_name(kind), 1e-9,
                         [rule](uint64_t s, bool inj) {
                             return pair_chunk_vs_recurrent(rule, PhiKind::EluPlusOne, s, inj);
                         }});
    }
    return pairs;
}

int cmd_equiv(const json& cfg, uint64_t seed, const std::string& out_dir) {
    check_keys(cfg, {"seeds", "fault_pair"}, "equiv");
    const int n_seeds = cfg.value("seeds", 10);
    const std::string fault_pair = cfg.value("fault_pair", "");
    if (n_seeds < 1) throw ConfigError("equiv: seeds must be >= 1");

    json report = json::array();
    bool all_pass = true;
    std::string first_failure;
    for (const EquivPair& pair : equiv_registry()) {
        const bool inject = pair.name == fault_pair;
        double max_diff = 0.0;
        for (int s = 0; s < n_seeds; ++s)
            max_diff = std::max(max_diff, pair.run(mix_seed(seed, 100 + s), inject));
        const bool pass = max_diff < pair.tol;
        if (!pass && first_failure.empty()) first_failure = pair.name;
        all_pass = all_pass && pass;
        json row;
        row["pair"] = pair.name;
        row["seeds"] = n_seeds;
        row["max_diff"] = max_diff;
        row["tol"] = pair.tol;
        row["pass"] = pass;
        report.push_back(std::move(row));
        std::cout << (pass ? "PASS " : "FAIL ") << pair.name << " max_diff=" << max_diff
                  << " tol=" << pair.tol << "\n";
    }
    if (!fault_pair.empty()) {
        bool found = false;
        for (const EquivPair& pair : equiv_registry()) found = found || pair.name == fault_pair;
        if (!found) throw ConfigError("equiv: unknown fault_pair " + fault_pair);
    }
    write_out(out_dir, "equiv_report.json", report.dump(2) + "\n");
    if (!all_pass) {
        std::cerr << "equivalence breach in pair: " << first_failure << "\n";
        return kExitThreshold;
    }
    return kExitOk;
}

// ---------- gradcheck ----------

int cmd_gradcheck(const json& cfg, uint64_t seed, const std::string& out_dir) {
    check_keys(cfg, {"seeds", "d_model", "T", "threshold"}, "gradcheck");
    const int n_seeds = cfg.value("seeds", 1);
    const int d_model = cfg.value("d_model", 6);
    const int T = cfg.value("T", 5);
    const double threshold = cfg.value("threshold", 1e-5);
    if (n_seeds < 1 || d_model < 2 || T < 1) throw ConfigError("gradcheck: bad settings");

    struct Variant {
        std::string name;
        ModelConfig mc;
    };
    std::vector<Variant> variants;
    auto base = [&](MixerKind mixer) {
        ModelConfig mc;
        mc.d_in = 3;
        mc.d_model = d_model;
        mc.n_blocks = 0;
        mc.n_out = 2;
        mc.mixer = mixer;
        mc.heads = 2;
        return mc;
    };
    for (const RuleKind kind : {RuleKind::Additive, RuleKind::Delta, RuleKind::Oja,
                                RuleKind::RetNet, RuleKind::Mamba2, RuleKind::GatedRFA,
                                RuleKind::MLSTM, RuleKind::GLA, RuleKind::GatedDelta}) {
        ModelConfig mc = base(MixerKind::Fwp);
        mc.rule.kind = kind;
        variants.push_back({"fwp_" + rule_name(kind), mc});
    }
    variants.push_back({"softmax_attention", base(MixerKind::SoftmaxAttention)});
    variants.push_back({"rnn", base(MixerKind::Rnn)});
    variants.push_back({"ssm_cell", base(MixerKind::SsmCell)});
    {
        ModelConfig mc = base(MixerKind::Fwp);
        mc.rule.kind = RuleKind::Delta;
        mc.n_blocks = 1;
        variants.push_back({"block_stack_delta", mc});
    }

    json report = json::array();
    bool all_pass = true;
    for (const Variant& var : variants) {
        double worst = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            Model m = build_model(var.mc, mix_seed(seed, 10 + s));
            const std::vector<Vec> xs = random_stream(var.mc.d_in, T, mix_seed(seed, 50 + s));
            LossSpec loss = final_step_label(T, 1);
            worst = std::max(worst, finite_diff_check(m, xs, loss));
        }
        const bool pass = worst < threshold;
        all_pass = all_pass && pass;
        json row;
        row["variant"] = var.name;
        row["max_rel_err"] = worst;
        row["pass"] = pass;
        report.push_back(std::move(row));
        std::cout << (pass ? "PASS " : "FAIL ") << var.name << " max_rel_err=" << worst << "\n";
    }
    write_out(out_dir, "gradcheck_report.json", report.dump(2) + "\n");
    return all_pass ? kExitOk : kExitThreshold;
}

// ---------- construct ----------

int cmd_construct(const json& cfg, uint64_t seed, const std::string& out_dir) {
    check_keys(cfg, {"which", "n_problems"}, "construct");
    const std::string which = cfg.value("which", "all");
    const int n_problems = cfg.value("n_problems", 20);
    bool all_pass = true;
    json report = json::object();

    if (which == "all" || which == "gd") {
        std::mt19937_64 rng(mix_seed(seed, 11));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        std::uniform_int_distribution<int> dim_dist(1, 6);
        std::uniform_int_distribution<int> len_dist(1, 16);
        double worst_pred = 0.0, worst_trace = 0.0;
        for (int p = 0; p < n_problems; ++p) {
            const int d_x = dim_dist(rng), d_y = dim_dist(rng), T = len_dist(rng);
            Mat W0(d_y, d_x);
            for (double& v : W0.a) v = dist(rng);
            std::vector<std::pair<Vec, Vec>> demos;
            for (int t = 0; t < T; ++t) {
                Vec z(d_x), f(d_y);
                for (double& v : z.a) v = dist(rng);
                for (double& v : f.a) v = dist(rng);
                demos.emplace_back(z, f);
            }
            Vec query(d_x);
            for (double& v : query.a) v = dist(rng);
            const GdConstruction c = build_gd_fwp(d_x, d_y, W0);
            const GdRunResult run = run_gd_fwp(c, demos, query);
            const Mat dW = gd_oracle(demos, W0, 1.0);
            const Vec oracle_pred = matvec(dW, query);
            worst_pred = std::max(worst_pred, max_abs_diff(run.prediction, oracle_pred));
            worst_trace = std::max(worst_trace, run.max_state_trace_dev);
        }
        const bool pass = worst_pred < 1e-10 && worst_trace < 1e-12;
        all_pass = all_pass && pass;
        report["gd"] = {{"max_deviation", worst_pred},
                        {"max_state_trace_dev", worst_trace},
                        {"pass", pass}};
        std::cout << (pass ? "PASS " : "FAIL ") << "gd max_deviation=" << worst_pred
                  << " trace_dev=" << worst_trace << "\n";
    }
    if (which == "all" || which == "parity") {
        const ParityMachine pm = build_parity_machine();
        long total = 0, correct = 0;
        for (int L = 1; L <= 12; ++L) {
            for (long bits = 0; bits < (1L << L); ++bits) {
                std::string s(static_cast<size_t>(L), '0');
                for (int i = 0; i < L; ++i)
                    if (bits & (1L << i)) s[static_cast<size_t>(i)] = '1';
                total += 1;
                if (run_parity_machine(pm, s) == parity_label(s)) correct += 1;
            }
        }
        const bool pass = correct == total;
        all_pass = all_pass && pass;
        report["parity"] = {{"total", total}, {"correct", correct}, {"pass", pass}};
        std::cout << (pass ? "PASS " : "FAIL ") << "parity " << correct << "/" << total << "\n";
    }
    if (which == "all" || which == "memory") {
        std::mt19937_64 rng(mix_seed(seed, 13));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        Vec key(6), value(6);
        for (double& v : value.a) v = dist(rng);
        key[2] = 1.0;  // exactly unit norm, so retrieval is exact in floating point
        const MemoryDemoResult add = memory_write_read_demo(key, value, UpdateRule::additive());
        const MemoryDemoResult del = memory_write_read_demo(key, value, UpdateRule::delta());
        const double add_dev = max_abs_diff(add.second_read, scale(value, 2.0));
        const double del_dev = max_abs_diff(del.second_read, value);
        const bool pass = add_dev == 0.0 && del_dev < 1e-12;
        all_pass = all_pass && pass;
        report["memory"] = {{"additive_double_store_dev", add_dev},
                            {"delta_double_store_dev", del_dev},
                            {"pass", pass}};
        std::cout << (pass ? "PASS " : "FAIL ") << "memory additive_dev=" << add_dev
                  << " delta_dev=" << del_dev << "\n";
    }
    if (report.empty()) throw ConfigError("construct: unknown target " + which);
    write_out(out_dir, "construct_report.json", report.dump(2) + "\n");
    return all_pass ? kExitOk : kExitThreshold;
}

// ---------- train ----------

TaskSpec task_from_json(const json& j) {
    check_keys(j, {"kind", "modulus", "L_min", "L_max", "d_x", "d_y", "noise_sd", "n_demos"},
               "task");
    TaskSpec spec;
    spec.kind = task_from_name(j.at("kind").get<std::string>());
    spec.modulus = j.value("modulus", spec.modulus);
    spec.L_min = j.value("L_min", spec.L_min);
    spec.L_max = j.value("L_max", spec.L_max);
    spec.d_x = j.value("d_x", spec.d_x);
    spec.d_y = j.value("d_y", spec.d_y);
    spec.noise_sd = j.value("noise_sd", spec.noise_sd);
    spec.n_demos = j.value("n_demos", spec.n_demos);
    spec.validate();
    return spec;
}

ModelConfig model_from_json(const json& j) {
    check_keys(j,
               {"d_in", "d_model", "n_blocks", "n_out", "mixer", "rule", "retnet_lambda",
                "n_h", "phi", "heads", "psi_scale", "value_activation", "ln_eps"},
               "model");
    return model_config_from_json(j.dump());
}

int cmd_train(const json& cfg, uint64_t seed, const std::string& out_dir) {
    check_keys(cfg, {"model", "train"}, "train");
    if (!cfg.contains("model") || !cfg.contains("train"))
        throw ConfigError("train: config needs \"model\" and \"train\" sections");
    json model_json = cfg.at("model");
    // fill defaults via the checkpoint schema
    const json defaults = json::parse(model_config_to_json(ModelConfig{}));
    for (auto it = defaults.begin(); it != defaults.end(); ++it)
        if (!model_json.contains(it.key())) model_json[it.key()] = it.value();
    const ModelConfig mc = model_from_json(model_json);

    const json& tj = cfg.at("train");
    check_keys(tj,
               {"task", "steps", "batch_size", "eval_every", "eval_samples", "lr",
                "per_step_loss", "eval_lengths"},
               "train section");
    TrainConfig tc;
    tc.task = task_from_json(tj.at("task"));
    tc.steps = tj.value("steps", tc.steps);
    tc.batch_size = tj.value("batch_size", tc.batch_size);
    tc.eval_every = tj.value("eval_every", tc.eval_every);
    tc.eval_samples = tj.value("eval_samples", tc.eval_samples);
    tc.lr = tj.value("lr", tc.lr);
    tc.per_step_loss = tj.value("per_step_loss", tc.per_step_loss);
    if (tj.contains("eval_lengths")) tc.eval_lengths = tj.at("eval_lengths").get<std::vector<int>>();

    const TrainResult result = train_model(mc, tc, seed);
    write_out(out_dir, "metrics.csv", metrics_csv(result.metrics));
    fs::create_directories(out_dir);
    save_checkpoint((fs::path(out_dir) / "checkpoint.json").string(), result.model);
    std::cout << "trained " << tc.steps << " steps, final eval accuracy "
              << result.final_eval_accuracy << "\n";
    return kExitOk;
}

// ---------- bench ----------

int cmd_bench(const json& cfg, uint64_t seed, const std::string& out_dir, int T_flag,
              int S_flag, int d_flag, int reps_flag) {
    check_keys(cfg, {"T", "S", "d", "reps", "rules"}, "bench");
    const int T = T_flag > 0 ? T_flag : cfg.value("T", 4096);
    const int S = S_flag > 0 ? S_flag : cfg.value("S", 64);
    const int d = d_flag > 0 ? d_flag : cfg.value("d", 64);
    const int reps = reps_flag > 0 ? reps_flag : cfg.value("reps", 5);
    std::vector<std::string> rules = {"additive", "retnet"};
    if (cfg.contains("rules")) rules = cfg.at("rules").get<std::vector<std::string>>();

    std::vector<BenchRow> rows;
    for (const std::string& rn : rules) {
        LayerConfig lc;
        lc.d_in = lc.d_key = lc.d_out = d;
        lc.heads = 1;
        lc.rule.kind = rule_from_name(rn);
        lc.phi = PhiKind::EluPlusOne;
        const std::vector<BenchRow> r = bench_forms(lc, T, S, reps, mix_seed(seed, 21));
        rows.insert(rows.end(), r.begin(), r.end());
    }
    write_out(out_dir, "bench.csv", bench_csv(rows));
    std::cout << bench_csv(rows);
    double recurrent_ns = 0.0, chunk_ns = 0.0;
    for (const BenchRow& r : rows) {
        if (r.form == "recurrent" && recurrent_ns == 0.0) recurrent_ns = r.median_ns;
        if (r.form == "chunkwise" && chunk_ns == 0.0) chunk_ns = r.median_ns;
    }
    if (recurrent_ns > 0.0 && chunk_ns > 0.0)
        std::cout << "chunkwise vs recurrent speed ratio: " << recurrent_ns / chunk_ns << "\n";
    return kExitOk;
}

// ---------- datagen ----------

int cmd_datagen(const json& cfg, uint64_t seed, const std::string& out_dir) {
    check_keys(cfg, {"task", "n", "file"}, "datagen");
    if (!cfg.contains("task")) throw ConfigError("datagen: config needs a \"task\" section");
    const TaskSpec spec = task_from_json(cfg.at("task"));
    const int n = cfg.value("n", 100);
    const std::string file = cfg.value("file", "data.jsonl");
    if (n < 1) throw ConfigError("datagen: n must be >= 1");

    std::ostringstream out;
    if (spec.kind == TaskKind::IclRegression) {
        for (const Episode& ep : generate_episodes(spec, seed, n)) {
            json line;
            json demos = json::array();
            for (const auto& [x, y] : ep.demos) demos.push_back({x.a, y.a});
            line["demos"] = std::move(demos);
            line["query"] = ep.query.a;
            line["target"] = ep.query_target.a;
            out << line.dump() << "\n";
        }
    } else {
        for (const Sample& s : generate_samples(spec, seed, n)) {
            json line;
            line["tokens"] = s.tokens;
            line["label"] = std::to_string(s.label);
            out << line.dump() << "\n";
        }
    }
    write_out(out_dir, file, out.str());
    std::cout << "wrote " << n << " records to " << (fs::path(out_dir) / file).string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();

    CLI::App app{"fast-weight programmer laboratory"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON config path")->capture_default_str();
    app.add_option("--seed", seed, "global seed, split per component")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    CLI::App* sub_equiv = app.add_subcommand("equiv", "run the oracle-pair equivalence suite");
    CLI::App* sub_gradcheck =
        app.add_subcommand("gradcheck", "finite-difference checks over all mixer variants");
    CLI::App* sub_construct =
        app.add_subcommand("construct", "verify the closed-form constructions");
    CLI::App* sub_train = app.add_subcommand("train", "train a model from a JSON config");
    CLI::App* sub_bench =
        app.add_subcommand("bench", "time recurrent / chunkwise / quadratic forms");
    CLI::App* sub_datagen = app.add_subcommand("datagen", "dump task data as JSON lines");

    // --config/--seed/--out are accepted after the subcommand name too
    for (CLI::App* sub :
         {sub_equiv, sub_gradcheck, sub_construct, sub_train, sub_bench, sub_datagen})
        sub->fallthrough();

    int bench_T = 0, bench_S = 0, bench_d = 0, bench_reps = 0;
    sub_bench->add_option("--T", bench_T, "sequence length");
    sub_bench->add_option("--S", bench_S, "chunk size");
    sub_bench->add_option("--d", bench_d, "model width");
    sub_bench->add_option("--reps", bench_reps, "timing repetitions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        const json cfg = load_config(config_path);
        if (sub_equiv->parsed()) return cmd_equiv(cfg, seed, out_dir);
        if (sub_gradcheck->parsed()) return cmd_gradcheck(cfg, seed, out_dir);
        if (sub_construct->parsed()) return cmd_construct(cfg, seed, out_dir);
        if (sub_train->parsed()) return cmd_train(cfg, seed, out_dir);
        if (sub_bench->parsed())
            return cmd_bench(cfg, seed, out_dir, bench_T, bench_S, bench_d, bench_reps);
        if (sub_datagen->parsed()) return cmd_datagen(cfg, seed, out_dir);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
