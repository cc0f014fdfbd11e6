#include "fwplab/constructions.hpp"

#include <cmath>

namespace fwplab {

GdConstruction build_gd_fwp(int d_x, int d_y, const Mat& W0) {
    if (d_x < 1 || d_y < 1) throw ConfigError("build_gd_fwp: dims must be >= 1");
    require(W0.rows == d_y && W0.cols == d_x, "build_gd_fwp: W0 must be d_y x d_x");
    if (!all_finite(W0)) throw NumericError("build_gd_fwp: W0 has non-finite entries");
    const int d = d_x + d_y;

    GdConstruction c;
    c.d_x = d_x;
    c.d_y = d_y;
    c.W0 = W0;
    c.cfg.d_in = c.cfg.d_key = c.cfg.d_out = d;
    c.cfg.heads = 1;
    c.cfg.rule = UpdateRule::additive();
    c.cfg.phi = PhiKind::Identity;

    // Wq = Wk = [[I, 0], [0, 0]] : queries/keys expose only the observation part.
    Mat Wqk(d, d);
    for (int i = 0; i < d_x; ++i) Wqk(i, i) = 1.0;
    // Wv = [[0, 0], [W0, -I]] : values carry the negative regression residual.
    Mat Wv(d, d);
    for (int i = 0; i < d_y; ++i) {
        for (int j = 0; j < d_x; ++j) Wv(d_x + i, j) = W0(i, j);
        Wv(d_x + i, d_x + i) = -1.0;
    }
    c.slow = init_slow_weights(c.cfg, 0);
    c.slow.Wq = Wqk;
    c.slow.Wk = Wqk;
    c.slow.Wv = Wv;

    c.w_out = Vec(d);
    for (int i = 0; i < d_y; ++i) c.w_out[d_x + i] = -1.0;
    return c;
}

Mat gd_oracle(const std::vector<std::pair<Vec, Vec>>& demos, const Mat& W0, double lr) {
    Mat delta(W0.rows, W0.cols);
    for (const auto& [z, fz] : demos) {
        require(z.dim() == W0.cols && fz.dim() == W0.rows, "gd_oracle: demo dims");
        const Vec resid = sub(fz, matvec(W0, z));
        delta = add(delta, scale(outer(resid, z), lr));
    }
    return delta;
}

GdRunResult run_gd_fwp(const GdConstruction& c,
                       const std::vector<std::pair<Vec, Vec>>& demos, const Vec& query) {
    require(query.dim() == c.d_x, "run_gd_fwp: query dim != d_x");
    const int d = c.d_x + c.d_y;
    FastState state = zero_state(c.cfg);
    Mat neg_delta(c.d_y, c.d_x);  // running -DeltaW_t
    GdRunResult res;

    int t = 0;
    for (const auto& [z, fz] : demos) {
        require(z.dim() == c.d_x && fz.dim() == c.d_y, "run_gd_fwp: demo dims");
        Vec x(d);
        for (int i = 0; i < c.d_x; ++i) x[i] = z[i];
        for (int i = 0; i < c.d_y; ++i) x[c.d_x + i] = fz[i];
        step(c.cfg, c.slow, state, x, ++t);

        const Vec resid = sub(matvec(c.W0, z), fz);  // W0 z - f(z)
        neg_delta = add(neg_delta, outer(resid, z));
        const Mat& W = state.W[0];
        for (int i = 0; i < c.d_y; ++i)
            for (int j = 0; j < c.d_x; ++j)
                res.max_state_trace_dev =
                    std::max(res.max_state_trace_dev, std::fabs(W(c.d_x + i, j) - neg_delta(i, j)));
    }

    // Query convention: x* = [z*, W0 z*].
    const Vec w0z = matvec(c.W0, query);
    Vec xq(d);
    for (int i = 0; i < c.d_x; ++i) xq[i] = query[i];
    for (int i = 0; i < c.d_y; ++i) xq[c.d_x + i] = w0z[i];
    const Vec y = step(c.cfg, c.slow, state, xq, ++t);

    res.prediction = Vec(c.d_y);
    for (int i = 0; i < c.d_y; ++i) res.prediction[i] = -y[c.d_x + i];

    // Exact identity: prediction == DeltaW_T z*. The full updated predictor is
    // (W0 + DeltaW_T) z*; the gap between the two is W0 z*, reported only.
    const Mat delta = gd_oracle(demos, c.W0, 1.0);
    res.approx_prediction = add(matvec(delta, query), w0z);
    res.approx_gap = max_abs_diff(res.approx_prediction, res.prediction);
    return res;
}

ParityMachine build_parity_machine() {
    ParityMachine m;
    m.cfg.d_in = 2;  // one-hot over {'0', '1'}
    m.cfg.d_key = m.cfg.d_out = 1;
    m.cfg.heads = 1;
    m.cfg.rule = UpdateRule::delta();
    m.cfg.phi = PhiKind::Identity;
    m.cfg.raw_gain_passthrough = true;  // eta must hit 0 and 2 exactly

    m.slow = init_slow_weights(m.cfg, 0);
    m.slow.Wq = Mat(1, 2, {1.0, 1.0});   // q = 1 for every token
    m.slow.Wk = Mat(1, 2, {1.0, 1.0});   // k = 1 for every token
    m.slow.Wv = Mat(1, 2, {1.0, 1.0});   // v = 1
    m.slow.w_b = Mat(1, 2, {0.0, 2.0});  // eta: 0 on '0', 2 on '1'
    m.slow.w_lam = Mat(1, 2);
    m.slow.Wa = Mat(1, 2);
    return m;
}

int run_parity_machine(const ParityMachine& m, const std::string& bits) {
    FastState state = zero_state(m.cfg);
    int t = 0;
    for (char c : bits) {
        if (c != '0' && c != '1') throw ConfigError("parity machine: non-binary token");
        Vec x(2);
        x[c - '0'] = 1.0;
        step(m.cfg, m.slow, state, x, ++t);
    }
    // Fast state stays in {0, 2}; threshold at the midpoint.
    return state.W[0](0, 0) > 1.0 ? 1 : 0;
}

MemoryDemoResult memory_write_read_demo(const Vec& key, const Vec& value,
                                        const UpdateRule& rule) {
    StepInputs s;
    s.k_feat = key;
    s.v = value;
    s.eta = 1.0;
    s.lam = 1.0;
    if (rule.kind == RuleKind::GLA) {
        s.a = Vec(value.dim());
        for (double& a : s.a.a) a = 1.0;
    }
    Mat W(value.dim(), key.dim());
    MemoryDemoResult res;
    W = apply_rule(rule, W, s);
    res.first_read = matvec(W, key);
    W = apply_rule(rule, W, s);
    res.second_read = matvec(W, key);
    return res;
}

}  // namespace fwplab
