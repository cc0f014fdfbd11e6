#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "fwplab/attention.hpp"
#include "fwplab/fwp_layer.hpp"

using namespace fwplab;

namespace {

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

}  // namespace

TEST_CASE("phi maps take their closed-form values") {
    const Vec in{1.0, -1.0};
    SUBCASE("elu_plus_one") {
        const Vec out = phi_map(PhiKind::EluPlusOne, in);
        CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(out[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    }
    SUBCASE("identity") { CHECK(max_abs_diff(phi_map(PhiKind::Identity, in), in) == 0.0); }
    SUBCASE("silu_l2norm is unit norm, zero maps to zero") {
        CHECK(l2_norm(phi_map(PhiKind::SiluL2Norm, in)) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(l2_norm(phi_map(PhiKind::SiluL2Norm, Vec(3))) == 0.0);
    }
    SUBCASE("elu_plus_one is strictly positive") {
        const Vec out = phi_map(PhiKind::EluPlusOne, Vec{-30.0, 0.0, 4.0});
        for (int i = 0; i < out.dim(); ++i) CHECK(out[i] > 0.0);
    }
}

TEST_CASE("config validation") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 6;
    cfg.heads = 4;  // does not divide 6
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.heads = 2;
    CHECK_NOTHROW(cfg.validate());
    cfg.normalized = true;
    cfg.rule = UpdateRule::delta();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.normalized = false;
    cfg.rule = UpdateRule::delta_product(2);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("retnet per-head decay defaults to 1 - 2^{-5-h}") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 8;
    cfg.heads = 2;
    CHECK(cfg.retnet_lambda(0) == doctest::Approx(1.0 - std::pow(2.0, -5.0)));
    CHECK(cfg.retnet_lambda(1) == doctest::Approx(1.0 - std::pow(2.0, -6.0)));
    cfg.retnet_lambda_override = {0.5, 0.25};
    CHECK(cfg.retnet_lambda(1) == 0.25);
}

TEST_CASE("identity-phi additive layer equals softmax-free attention") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        for (const int H : {1, 2}) {
            LayerConfig cfg;
            cfg.d_in = cfg.d_key = cfg.d_out = 8;
            cfg.heads = H;
            cfg.rule = UpdateRule::additive();
            cfg.phi = PhiKind::Identity;
            const SlowWeights slow = init_slow_weights(cfg, seed);
            const std::vector<Vec> xs = random_stream(cfg.d_in, 24, seed + 500);
            const std::vector<Vec> recur = forward_seq(cfg, slow, xs).first;
            const int hk = cfg.head_key(), ho = cfg.head_out();
            const int T = static_cast<int>(xs.size());
            std::vector<Vec> att(static_cast<size_t>(T), Vec(cfg.d_out));
            for (int h = 0; h < H; ++h) {
                Mat Q(hk, T), K(hk, T), V(ho, T);
                for (int t = 0; t < T; ++t) {
                    const auto proj = project(slow, cfg, xs[t]);
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
            CHECK(stream_diff(recur, att) < 1e-10);
        }
    }
}

TEST_CASE("normalized additive layer equals linearized attention") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        LayerConfig cfg;
        cfg.d_in = cfg.d_key = cfg.d_out = 6;
        cfg.heads = 1;
        cfg.rule = UpdateRule::additive();
        cfg.phi = PhiKind::EluPlusOne;
        cfg.normalized = true;
        cfg.norm_eps = 0.0;
        const SlowWeights slow = init_slow_weights(cfg, seed);
        const std::vector<Vec> xs = random_stream(cfg.d_in, 20, seed + 900);
        const std::vector<Vec> recur = forward_seq(cfg, slow, xs).first;
        const int T = static_cast<int>(xs.size());
        Mat Q(cfg.d_key, T), K(cfg.d_key, T), V(cfg.d_out, T);
        for (int t = 0; t < T; ++t) {
            const auto proj = project(slow, cfg, xs[t]);
            for (int i = 0; i < cfg.d_key; ++i) {
                Q(i, t) = proj[0].q[i];
                K(i, t) = proj[0].k[i];
            }
            for (int i = 0; i < cfg.d_out; ++i) V(i, t) = proj[0].v[i];
        }
        const Mat Y = linearized_attention(
            Q, K, V, [](const Vec& v) { return phi_map(PhiKind::EluPlusOne, v); });
        double diff = 0.0;
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < cfg.d_out; ++i)
                diff = std::max(diff, std::fabs(Y(i, t) - recur[static_cast<size_t>(t)][i]));
        CHECK(diff < 1e-10);
    }
}

TEST_CASE("heads are block-independent") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 8;
    cfg.heads = 2;
    cfg.rule = UpdateRule::delta();
    cfg.phi = PhiKind::EluPlusOne;
    SlowWeights slow = init_slow_weights(cfg, 77);
    const std::vector<Vec> xs = random_stream(cfg.d_in, 12, 78);
    const std::vector<Vec> base = forward_seq(cfg, slow, xs).first;
    // perturb only head-1 projection rows; head-0 output coordinates must not move
    slow.Wv(7, 3) += 0.5;
    slow.Wk(6, 1) -= 0.25;
    const std::vector<Vec> pert = forward_seq(cfg, slow, xs).first;
    for (size_t t = 0; t < xs.size(); ++t)
        for (int i = 0; i < cfg.head_out(); ++i) CHECK(base[t][i] == pert[t][i]);
}

TEST_CASE("forward is causal: a prefix run matches the full run") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 6;
    cfg.heads = 2;
    cfg.rule = UpdateRule::gla();
    cfg.phi = PhiKind::EluPlusOne;
    const SlowWeights slow = init_slow_weights(cfg, 91);
    const std::vector<Vec> xs = random_stream(cfg.d_in, 15, 92);
    const std::vector<Vec> full = forward_seq(cfg, slow, xs).first;
    const std::vector<Vec> head(xs.begin(), xs.begin() + 7);
    const std::vector<Vec> part = forward_seq(cfg, slow, head).first;
    for (size_t t = 0; t < part.size(); ++t) CHECK(max_abs_diff(part[t], full[t]) == 0.0);
}

TEST_CASE("step-by-step state advance matches forward_seq") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 6;
    cfg.heads = 1;
    cfg.rule = UpdateRule::mlstm();
    const SlowWeights slow = init_slow_weights(cfg, 101);
    const std::vector<Vec> xs = random_stream(cfg.d_in, 9, 102);
    FastState state = zero_state(cfg);
    const std::vector<Vec> whole = forward_seq(cfg, slow, xs).first;
    for (size_t t = 0; t < xs.size(); ++t) {
        const Vec y = step(cfg, slow, state, xs[t], static_cast<int>(t));
        CHECK(max_abs_diff(y, whole[t]) == 0.0);
    }
}

TEST_CASE("bounded mappings stay inside their ranges") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 4;
    cfg.heads = 1;
    cfg.rule = UpdateRule::gated_delta();
    cfg.psi_scale = 2.0;
    const SlowWeights slow = init_slow_weights(cfg, 111);
    for (const Vec& x : random_stream(cfg.d_in, 20, 112)) {
        const auto proj = project(slow, cfg, x);
        const MappedStep ms = map_head_inputs(cfg, proj[0]);
        CHECK(ms.s.eta > 0.0);
        CHECK(ms.s.eta < cfg.psi_scale);
        CHECK(ms.s.lam > 0.0);
        CHECK(ms.s.lam < 1.0);
    }
}

TEST_CASE("raw gain passthrough skips the sigmoid mappings") {
    LayerConfig cfg;
    cfg.d_in = cfg.d_key = cfg.d_out = 2;
    cfg.heads = 1;
    cfg.rule = UpdateRule::delta();
    cfg.raw_gain_passthrough = true;
    SlowWeights slow = init_slow_weights(cfg, 121);
    slow.w_b = Mat(1, 2);
    slow.w_b(0, 1) = 2.0;
    const Vec x{0.0, 1.0};
    const auto proj = project(slow, cfg, x);
    const MappedStep ms = map_head_inputs(cfg, proj[0]);
    CHECK(ms.s.eta == 2.0);
}
