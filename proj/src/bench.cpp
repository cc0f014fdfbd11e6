#include "fwplab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "fwplab/chunkwise.hpp"

namespace fwplab {

namespace {

constexpr double kSelfCheckTol = 1e-9;

std::vector<Vec> random_stream(const LayerConfig& cfg, int T, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Vec> xs(static_cast<size_t>(T), Vec(cfg.d_in));
    for (Vec& x : xs)
        for (double& v : x.a) v = dist(rng);
    return xs;
}

double stream_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double d = 0.0;
    for (size_t t = 0; t < a.size(); ++t) d = std::max(d, max_abs_diff(a[t], b[t]));
    return d;
}

// Unrolled attention-style evaluation of the additive layer:
// y_t = sum_{tau <= t} v_tau (k_tau . q_t), per head.
std::vector<Vec> quadratic_forward(const LayerConfig& cfg, const SlowWeights& slow,
                                   const std::vector<Vec>& xs) {
    const int T = static_cast<int>(xs.size());
    const int H = cfg.heads, ho = cfg.head_out();
    std::vector<std::vector<MappedStep>> steps(H);
    for (const Vec& x : xs) {
        const std::vector<HeadProjection> proj = project(slow, cfg, x);
        for (int h = 0; h < H; ++h) steps[h].push_back(map_head_inputs(cfg, proj[h]));
    }
    std::vector<Vec> ys(static_cast<size_t>(T), Vec(cfg.d_out));
    for (int h = 0; h < H; ++h) {
        for (int t = 0; t < T; ++t) {
            Vec y(ho);
            for (int tau = 0; tau <= t; ++tau) {
                const double w = dot(steps[h][tau].s.k_feat, steps[h][t].q_feat);
                for (int i = 0; i < ho; ++i) y[i] += w * steps[h][tau].s.v[i];
            }
            for (int i = 0; i < ho; ++i) ys[t][h * ho + i] = y[i];
        }
    }
    return ys;
}

struct Percentiles {
    double median = 0.0, p10 = 0.0, p90 = 0.0;
};

template <typename F>
Percentiles time_ns(F&& fn, int reps) {
    std::vector<double> samples;
    samples.reserve(reps);
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    auto rank = [&](double p) {
        const int i = std::min<int>(reps - 1, static_cast<int>(p * reps));
        return samples[i];
    };
    return {rank(0.5), rank(0.1), rank(0.9)};
}

}  // namespace

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out.precision(12);
    out << "form,rule,T,S,d_key,d_out,heads,median_ns,p10_ns,p90_ns,max_abs_diff_vs_recurrent\n";
    for (const BenchRow& r : rows)
        out << r.form << ',' << r.rule << ',' << r.T << ',' << r.S << ',' << r.d_key << ','
            << r.d_out << ',' << r.heads << ',' << r.median_ns << ',' << r.p10_ns << ','
            << r.p90_ns << ',' << r.max_abs_diff_vs_recurrent << '\n';
    return out.str();
}

std::vector<BenchRow> bench_forms(const LayerConfig& cfg, int T, int S, int reps,
                                  uint64_t seed) {
    cfg.validate();
    if (T < 1 || S < 1 || reps < 1) throw ConfigError("bench_forms: T, S, reps must be >= 1");
    const SlowWeights slow = init_slow_weights(cfg, seed);
    const std::vector<Vec> xs = random_stream(cfg, T, seed + 1);

    const std::vector<Vec> reference = forward_seq(cfg, slow, xs).first;

    auto make_row = [&](const std::string& form, double diff) {
        BenchRow row;
        row.form = form;
        row.rule = rule_name(cfg.rule.kind);
        row.T = T;
        row.S = S;
        row.d_key = cfg.d_key;
        row.d_out = cfg.d_out;
        row.heads = cfg.heads;
        row.max_abs_diff_vs_recurrent = diff;
        return row;
    };

    std::vector<BenchRow> rows;
    {
        BenchRow row = make_row("recurrent", 0.0);
        const Percentiles p = time_ns([&] { forward_seq(cfg, slow, xs); }, reps);
        row.median_ns = p.median;
        row.p10_ns = p.p10;
        row.p90_ns = p.p90;
        rows.push_back(row);
    }
    if (rule_supports_chunkwise(cfg.rule.kind)) {
        const double diff = stream_diff(chunkwise_layer_forward(cfg, slow, xs, S), reference);
        if (diff > kSelfCheckTol)
            throw NumericError("bench self-check failed: chunkwise vs recurrent diff " +
                               std::to_string(diff));
        BenchRow row = make_row("chunkwise", diff);
        const Percentiles p = time_ns([&] { chunkwise_layer_forward(cfg, slow, xs, S); }, reps);
        row.median_ns = p.median;
        row.p10_ns = p.p10;
        row.p90_ns = p.p90;
        rows.push_back(row);
    }
    if (cfg.rule.kind == RuleKind::Additive && !cfg.normalized) {
        const double diff = stream_diff(quadratic_forward(cfg, slow, xs), reference);
        if (diff > kSelfCheckTol)
            throw NumericError("bench self-check failed: quadratic vs recurrent diff " +
                               std::to_string(diff));
        BenchRow row = make_row("quadratic", diff);
        const Percentiles p = time_ns([&] { quadratic_forward(cfg, slow, xs); }, reps);
        row.median_ns = p.median;
        row.p10_ns = p.p10;
        row.p90_ns = p.p90;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace fwplab
