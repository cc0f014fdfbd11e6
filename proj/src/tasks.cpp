#include "fwplab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fwplab {

void TaskSpec::validate() const {
    if (L_min < 1 || L_min > L_max) throw ConfigError("TaskSpec: need 1 <= L_min <= L_max");
    if (kind == TaskKind::ModAdd && modulus < 2) throw ConfigError("TaskSpec: modulus >= 2");
    if (kind == TaskKind::IclRegression) {
        if (d_x < 1 || d_y < 1 || n_demos < 0) throw ConfigError("TaskSpec: bad episode dims");
        if (noise_sd < 0.0) throw ConfigError("TaskSpec: negative noise");
    }
}

std::string task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Parity: return "parity";
        case TaskKind::ModAdd: return "modadd";
        case TaskKind::AnBn: return "anbn";
        case TaskKind::AnBnCn: return "anbncn";
        case TaskKind::IclRegression: return "icl_regression";
    }
    throw ConfigError("task_name: unknown task");
}

TaskKind task_from_name(const std::string& name) {
    if (name == "parity") return TaskKind::Parity;
    if (name == "modadd") return TaskKind::ModAdd;
    if (name == "anbn") return TaskKind::AnBn;
    if (name == "anbncn") return TaskKind::AnBnCn;
    if (name == "icl_regression") return TaskKind::IclRegression;
    throw ConfigError("unknown task name: " + name);
}

int parity_label(const std::string& tokens) {
    int acc = 0;
    for (char c : tokens) {
        if (c != '0' && c != '1') throw ConfigError("parity: non-binary token");
        acc ^= (c == '1');
    }
    return acc;
}

int modadd_label(const std::string& tokens, int modulus) {
    int acc = 0;
    for (char c : tokens) {
        if (c < '0' || c > '9') throw ConfigError("modadd: non-digit token");
        acc = (acc + (c - '0')) % modulus;
    }
    return acc;
}

bool anbn_member(const std::string& tokens) {
    const size_t n = tokens.size() / 2;
    if (tokens.size() != 2 * n || n == 0) return false;
    for (size_t i = 0; i < n; ++i)
        if (tokens[i] != 'a') return false;
    for (size_t i = n; i < tokens.size(); ++i)
        if (tokens[i] != 'b') return false;
    return true;
}

bool anbncn_member(const std::string& tokens) {
    const size_t n = tokens.size() / 3;
    if (tokens.size() != 3 * n || n == 0) return false;
    for (size_t i = 0; i < n; ++i)
        if (tokens[i] != 'a') return false;
    for (size_t i = n; i < 2 * n; ++i)
        if (tokens[i] != 'b') return false;
    for (size_t i = 2 * n; i < tokens.size(); ++i)
        if (tokens[i] != 'c') return false;
    return true;
}

namespace {

std::string block_string(int n_a, int n_b, int n_c) {
    std::string s;
    s.append(static_cast<size_t>(n_a), 'a');
    s.append(static_cast<size_t>(n_b), 'b');
    if (n_c >= 0) s.append(static_cast<size_t>(n_c), 'c');
    return s;
}

// Negatives: half near-miss count perturbations, half shuffles, so sequence
// length is not a usable cue.
std::string counting_negative(std::mt19937_64& rng, int n, bool three_blocks) {
    std::uniform_int_distribution<int> coin(0, 1);
    if (coin(rng) == 0) {
        std::uniform_int_distribution<int> which(0, three_blocks ? 2 : 1);
        std::uniform_int_distribution<int> delta_pick(0, 1);
        int counts[3] = {n, n, three_blocks ? n : -1};
        const int slot = which(rng);
        int d = delta_pick(rng) == 0 ? -1 : 1;
        if (counts[slot] + d < 0) d = 1;
        counts[slot] += d;
        return block_string(counts[0], counts[1], three_blocks ? counts[2] : -1);
    }
    std::string s = block_string(n, n, three_blocks ? n : -1);
    for (int attempt = 0; attempt < 32; ++attempt) {
        std::shuffle(s.begin(), s.end(), rng);
        const bool member = three_blocks ? anbncn_member(s) : anbn_member(s);
        if (!member) return s;
    }
    // all-equal blocks of size <= 1 may shuffle back into membership
    s.push_back(three_blocks ? 'c' : 'b');
    return s;
}

}  // namespace

std::vector<Sample> generate_samples(const TaskSpec& spec, uint64_t seed, int n) {
    spec.validate();
    if (spec.kind == TaskKind::IclRegression)
        throw ConfigError("generate_samples: icl_regression produces episodes");
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(n));
    for (int idx = 0; idx < n; ++idx) {
        // Per-index derived seed: any one sample is reproducible in isolation.
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(idx));
        std::uniform_int_distribution<int> len_dist(spec.L_min, spec.L_max);
        Sample s;
        switch (spec.kind) {
            case TaskKind::Parity: {
                const int len = len_dist(rng);
                std::uniform_int_distribution<int> bit(0, 1);
                // Class balance: draw a target parity, then fix the last bit.
                const int target = bit(rng);
                for (int i = 0; i < len; ++i) s.tokens.push_back(bit(rng) ? '1' : '0');
                if (parity_label(s.tokens) != target)
                    s.tokens.back() = s.tokens.back() == '1' ? '0' : '1';
                s.label = target;
                break;
            }
            case TaskKind::ModAdd: {
                const int len = len_dist(rng);
                std::uniform_int_distribution<int> digit(0, 9);
                for (int i = 0; i < len; ++i) s.tokens.push_back(static_cast<char>('0' + digit(rng)));
                s.label = modadd_label(s.tokens, spec.modulus);
                break;
            }
            case TaskKind::AnBn:
            case TaskKind::AnBnCn: {
                const bool three = spec.kind == TaskKind::AnBnCn;
                const int blocks = three ? 3 : 2;
                const int n_min = std::max(1, spec.L_min / blocks);
                const int n_max = std::max(n_min, spec.L_max / blocks);
                std::uniform_int_distribution<int> n_dist(n_min, n_max);
                std::uniform_int_distribution<int> coin(0, 1);
                const int block_n = n_dist(rng);
                if (coin(rng) == 1) {
                    s.tokens = block_string(block_n, block_n, three ? block_n : -1);
                    s.label = 1;
                } else {
                    s.tokens = counting_negative(rng, block_n, three);
                    s.label = 0;
                }
                break;
            }
            case TaskKind::IclRegression:
                break;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Episode> generate_episodes(const TaskSpec& spec, uint64_t seed, int n) {
    spec.validate();
    if (spec.kind != TaskKind::IclRegression)
        throw ConfigError("generate_episodes: only icl_regression produces episodes");
    std::vector<Episode> out;
    out.reserve(static_cast<size_t>(n));
    for (int idx = 0; idx < n; ++idx) {
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(idx));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Mat map(spec.d_y, spec.d_x);  // hidden linear map per episode
        for (double& w : map.a) w = gauss(rng);
        Episode ep;
        for (int t = 0; t < spec.n_demos; ++t) {
            Vec z(spec.d_x);
            for (double& v : z.a) v = gauss(rng);
            Vec y = matvec(map, z);
            if (spec.noise_sd > 0.0)
                for (double& v : y.a) v += spec.noise_sd * gauss(rng);
            ep.demos.emplace_back(std::move(z), std::move(y));
        }
        ep.query = Vec(spec.d_x);
        for (double& v : ep.query.a) v = gauss(rng);
        ep.query_target = matvec(map, ep.query);
        out.push_back(std::move(ep));
    }
    return out;
}

std::vector<char> task_vocab(TaskKind kind, int modulus) {
    (void)modulus;
    switch (kind) {
        case TaskKind::Parity: return {'0', '1', '^'};
        case TaskKind::ModAdd: return {'0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '^'};
        case TaskKind::AnBn: return {'a', 'b', '^'};
        case TaskKind::AnBnCn: return {'a', 'b', 'c', '^'};
        case TaskKind::IclRegression: throw ConfigError("task_vocab: episodes are not tokenized");
    }
    throw ConfigError("task_vocab: unknown task");
}

std::vector<Vec> encode(const Sample& sample, const std::vector<char>& vocab) {
    const int V = static_cast<int>(vocab.size());
    auto one_hot = [&](char c) {
        for (int i = 0; i < V; ++i) {
            if (vocab[static_cast<size_t>(i)] == c) {
                Vec v(V);
                v[i] = 1.0;
                return v;
            }
        }
        throw ConfigError(std::string("encode: token '") + c + "' not in vocab");
    };
    std::vector<Vec> out;
    out.reserve(sample.tokens.size() + 1);
    out.push_back(one_hot(vocab.back()));  // BOS is the last vocab symbol
    for (char c : sample.tokens) out.push_back(one_hot(c));
    return out;
}

std::string decode(const std::vector<Vec>& encoded, const std::vector<char>& vocab) {
    std::string out;
    for (size_t t = 1; t < encoded.size(); ++t) {  // skip BOS
        const Vec& v = encoded[t];
        require(v.dim() == static_cast<int>(vocab.size()), "decode: dim != vocab size");
        int arg = 0;
        for (int i = 1; i < v.dim(); ++i)
            if (v[i] > v[arg]) arg = i;
        out.push_back(vocab[static_cast<size_t>(arg)]);
    }
    return out;
}

Vec rnn_step(const Mat& Wr, const Mat& Wi, const Vec& s, const Vec& x) {
    Vec pre = add(matvec(Wr, s), matvec(Wi, x));
    for (double& v : pre.a) v = std::tanh(v);
    return pre;
}

Vec ssm_cell_step(const Vec& r, const Vec& i, const Vec& s, const Vec& x) {
    require(r.dim() == s.dim() && i.dim() == x.dim() && s.dim() == x.dim(),
            "ssm_cell_step: dims must all match");
    return add(hadamard(r, s), hadamard(i, x));
}

}  // namespace fwplab
