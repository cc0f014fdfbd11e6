#include "fwplab/fwp_layer.hpp"

#include <cmath>
#include <random>

namespace fwplab {

std::string phi_name(PhiKind kind) {
    switch (kind) {
        case PhiKind::Identity: return "identity";
        case PhiKind::EluPlusOne: return "elu_plus_one";
        case PhiKind::SiluL2Norm: return "silu_l2norm";
    }
    throw ConfigError("phi_name: unknown phi");
}

PhiKind phi_from_name(const std::string& name) {
    if (name == "identity") return PhiKind::Identity;
    if (name == "elu_plus_one") return PhiKind::EluPlusOne;
    if (name == "silu_l2norm") return PhiKind::SiluL2Norm;
    throw ConfigError("unknown phi name: " + name);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec phi_map(PhiKind kind, const Vec& x) {
    switch (kind) {
        case PhiKind::Identity:
            return x;
        case PhiKind::EluPlusOne: {
            Vec out(x.dim());
            for (int i = 0; i < x.dim(); ++i)
                out[i] = x[i] > 0.0 ? x[i] + 1.0 : std::exp(x[i]);
            return out;
        }
        case PhiKind::SiluL2Norm: {
            Vec out(x.dim());
            for (int i = 0; i < x.dim(); ++i) out[i] = x[i] * sigmoid(x[i]);
            return l2_normalize(out);
        }
    }
    throw ConfigError("phi_map: unknown phi");
}

void LayerConfig::validate() const {
    if (d_in <= 0 || d_key <= 0 || d_out <= 0) throw ConfigError("LayerConfig: dims must be positive");
    if (heads < 1) throw ConfigError("LayerConfig: heads must be >= 1");
    if (d_key % heads != 0 || d_out % heads != 0)
        throw ConfigError("LayerConfig: d_key and d_out must be divisible by heads");
    if (normalized && rule.kind != RuleKind::Additive)
        throw ConfigError("LayerConfig: normalized path is defined for the additive rule only");
    if (rule.kind == RuleKind::DeltaProduct)
        throw ConfigError("LayerConfig: delta_product has no single-step layer form; use delta");
}

double LayerConfig::retnet_lambda(int head) const {
    if (!retnet_lambda_override.empty()) {
        if (head >= static_cast<int>(retnet_lambda_override.size()))
            throw ConfigError("retnet_lambda: override shorter than head count");
        return retnet_lambda_override[static_cast<size_t>(head)];
    }
    return 1.0 - std::pow(2.0, -5.0 - head);
}

SlowWeights init_slow_weights(const LayerConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto fill = [&](int r, int c) {
        Mat m(r, c);
        for (double& v : m.a) v = dist(rng);
        return m;
    };
    SlowWeights slow;
    slow.Wq = fill(cfg.d_key, cfg.d_in);
    slow.Wk = fill(cfg.d_key, cfg.d_in);
    slow.Wv = fill(cfg.d_out, cfg.d_in);
    slow.w_b = fill(cfg.heads, cfg.d_in);
    slow.w_lam = fill(cfg.heads, cfg.d_in);
    slow.Wa = fill(cfg.d_out, cfg.d_in);
    return slow;
}

FastState zero_state(const LayerConfig& cfg) {
    cfg.validate();
    FastState st;
    st.W.assign(cfg.heads, Mat(cfg.head_out(), cfg.head_key()));
    if (cfg.normalized) st.z.assign(cfg.heads, Vec(cfg.head_key()));
    return st;
}

namespace {

Vec slice(const Vec& x, int begin, int len) {
    Vec out(len);
    for (int i = 0; i < len; ++i) out[i] = x[begin + i];
    return out;
}

}  // namespace

std::vector<HeadProjection> project(const SlowWeights& slow, const LayerConfig& cfg,
                                    const Vec& x) {
    require(x.dim() == cfg.d_in, "project: input dim != d_in");
    const Vec q = matvec(slow.Wq, x);
    const Vec k = matvec(slow.Wk, x);
    const Vec v = matvec(slow.Wv, x);
    const Vec betas = matvec(slow.w_b, x);
    const Vec lams = matvec(slow.w_lam, x);
    const bool gla = cfg.rule.kind == RuleKind::GLA;
    const Vec a_full = gla ? matvec(slow.Wa, x) : Vec();

    std::vector<HeadProjection> heads(static_cast<size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        HeadProjection& p = heads[static_cast<size_t>(h)];
        p.q = slice(q, h * cfg.head_key(), cfg.head_key());
        p.k = slice(k, h * cfg.head_key(), cfg.head_key());
        p.v = slice(v, h * cfg.head_out(), cfg.head_out());
        p.beta_raw = betas[h];
        p.lam_raw = lams[h];
        if (gla) p.a_raw = slice(a_full, h * cfg.head_out(), cfg.head_out());
    }
    return heads;
}

MappedStep map_head_inputs(const LayerConfig& cfg, const HeadProjection& p) {
    MappedStep m;
    m.s.k_feat = phi_map(cfg.phi, p.k);
    m.s.v = cfg.value_activation ? phi_map(cfg.phi, p.v) : p.v;
    if (cfg.raw_gain_passthrough) {
        m.s.eta = p.beta_raw;
        m.s.lam = p.lam_raw;
        m.s.a = p.a_raw;
    } else {
        m.s.eta = cfg.psi_scale * sigmoid(p.beta_raw);
        m.s.lam = sigmoid(p.lam_raw);
        if (cfg.rule.kind == RuleKind::GLA) {
            m.s.a = Vec(p.a_raw.dim());
            for (int i = 0; i < m.s.a.dim(); ++i) m.s.a[i] = sigmoid(p.a_raw[i]);
        }
    }
    m.q_feat = phi_map(cfg.phi, p.q);
    return m;
}

Vec step(const LayerConfig& cfg, const SlowWeights& slow, FastState& state, const Vec& x,
         int step_index) {
    const std::vector<HeadProjection> proj = project(slow, cfg, x);
    Vec y(cfg.d_out);
    for (int h = 0; h < cfg.heads; ++h) {
        const HeadProjection& p = proj[static_cast<size_t>(h)];
        MappedStep m = map_head_inputs(cfg, p);
        const StepInputs& s = m.s;
        UpdateRule rule = cfg.rule;
        if (rule.kind == RuleKind::RetNet) rule.retnet_lambda = cfg.retnet_lambda(h);

        Mat& W = state.W[static_cast<size_t>(h)];
        W = apply_rule(rule, W, s);

        const Vec& q_feat = m.q_feat;
        Vec y_head = matvec(W, q_feat);
        if (cfg.normalized) {
            Vec& z = state.z[static_cast<size_t>(h)];
            z = add(z, s.k_feat);
            const double denom = dot(z, q_feat) + cfg.norm_eps;
            if (denom == 0.0)
                throw NumericError("step " + std::to_string(step_index) +
                                   ": zero normalizer denominator");
            y_head = scale(y_head, 1.0 / denom);
        }
        if (!all_finite(y_head) || !all_finite(W))
            throw NumericError("step " + std::to_string(step_index) +
                               ": non-finite fast state or output");
        for (int i = 0; i < cfg.head_out(); ++i) y[h * cfg.head_out() + i] = y_head[i];
    }
    return y;
}

std::pair<std::vector<Vec>, FastState> forward_seq(const LayerConfig& cfg,
                                                   const SlowWeights& slow,
                                                   const std::vector<Vec>& xs) {
    cfg.validate();
    FastState state = zero_state(cfg);
    std::vector<Vec> ys;
    ys.reserve(xs.size());
    for (size_t t = 0; t < xs.size(); ++t)
        ys.push_back(step(cfg, slow, state, xs[t], static_cast<int>(t) + 1));
    return {std::move(ys), std::move(state)};
}

}  // namespace fwplab
