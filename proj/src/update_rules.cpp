#include "fwplab/update_rules.hpp"

#include <cmath>

namespace fwplab {

UpdateRule UpdateRule::retnet(double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("retnet: lambda must be in (0,1]");
    UpdateRule r{RuleKind::RetNet};
    r.retnet_lambda = lambda;
    return r;
}

UpdateRule UpdateRule::delta_product(int n_h) {
    if (n_h < 1) throw ConfigError("delta_product: n_h must be >= 1");
    UpdateRule r{RuleKind::DeltaProduct};
    r.n_h = n_h;
    return r;
}

std::string rule_name(RuleKind kind) {
    switch (kind) {
        case RuleKind::Additive: return "additive";
        case RuleKind::Delta: return "delta";
        case RuleKind::Oja: return "oja";
        case RuleKind::RetNet: return "retnet";
        case RuleKind::Mamba2: return "mamba2";
        case RuleKind::GatedRFA: return "gated_rfa";
        case RuleKind::MLSTM: return "mlstm";
        case RuleKind::GLA: return "gla";
        case RuleKind::GatedDelta: return "gated_delta";
        case RuleKind::DeltaProduct: return "delta_product";
    }
    throw ConfigError("rule_name: unknown rule");
}

RuleKind rule_from_name(const std::string& name) {
    if (name == "additive") return RuleKind::Additive;
    if (name == "delta") return RuleKind::Delta;
    if (name == "oja") return RuleKind::Oja;
    if (name == "retnet") return RuleKind::RetNet;
    if (name == "mamba2") return RuleKind::Mamba2;
    if (name == "gated_rfa") return RuleKind::GatedRFA;
    if (name == "mlstm") return RuleKind::MLSTM;
    if (name == "gla") return RuleKind::GLA;
    if (name == "gated_delta") return RuleKind::GatedDelta;
    if (name == "delta_product") return RuleKind::DeltaProduct;
    throw ConfigError("unknown rule name: " + name);
}

bool rule_uses_eta(RuleKind kind) {
    return kind == RuleKind::Delta || kind == RuleKind::Oja || kind == RuleKind::MLSTM ||
           kind == RuleKind::GatedDelta || kind == RuleKind::DeltaProduct;
}

bool rule_uses_lambda(RuleKind kind) {
    return kind == RuleKind::Mamba2 || kind == RuleKind::GatedRFA || kind == RuleKind::MLSTM ||
           kind == RuleKind::GatedDelta;
}

bool rule_uses_row_decay(RuleKind kind) { return kind == RuleKind::GLA; }

namespace {

void check_dims(const Mat& W, const StepInputs& s) {
    require(s.k_feat.dim() == W.cols, "apply_rule: key dim != W.cols");
    require(s.v.dim() == W.rows, "apply_rule: value dim != W.rows");
}

Mat decayed_plus_outer(const Mat& W, double decay, const Vec& v, const Vec& k, double outer_scale) {
    Mat out(W.rows, W.cols);
    for (int i = 0; i < W.rows; ++i) {
        const double vi = outer_scale * v[i];
        for (int j = 0; j < W.cols; ++j) out(i, j) = decay * W(i, j) + vi * k[j];
    }
    return out;
}

}  // namespace

Mat apply_rule(const UpdateRule& rule, const Mat& W, const StepInputs& s) {
    check_dims(W, s);
    switch (rule.kind) {
        case RuleKind::Additive:
            return decayed_plus_outer(W, 1.0, s.v, s.k_feat, 1.0);
        case RuleKind::Delta: {
            const Vec resid = sub(s.v, matvec(W, s.k_feat));
            return add(W, scale(outer(resid, s.k_feat), s.eta));
        }
        case RuleKind::Oja: {
            const Vec m = sub(s.k_feat, matvec_transposed(W, s.v));
            return add(W, scale(outer(s.v, m), s.eta));
        }
        case RuleKind::RetNet:
            return decayed_plus_outer(W, rule.retnet_lambda, s.v, s.k_feat, 1.0);
        case RuleKind::Mamba2:
            return decayed_plus_outer(W, s.lam, s.v, s.k_feat, 1.0);
        case RuleKind::GatedRFA:
            return decayed_plus_outer(W, s.lam, s.v, s.k_feat, 1.0 - s.lam);
        case RuleKind::MLSTM:
            return decayed_plus_outer(W, s.lam, s.v, s.k_feat, s.eta);
        case RuleKind::GLA: {
            require(s.a.dim() == W.rows, "apply_rule: GLA row decay dim != W.rows");
            Mat out(W.rows, W.cols);
            for (int i = 0; i < W.rows; ++i)
                for (int j = 0; j < W.cols; ++j)
                    out(i, j) = s.a[i] * W(i, j) + s.v[i] * s.k_feat[j];
            return out;
        }
        case RuleKind::GatedDelta: {
            // Decay first; the delta correction reads the decayed state. This is
            // the order consistent with the canonical form B=lam*I, A=I-eta*kk^T.
            const Mat decayed = scale(W, s.lam);
            const Vec resid = sub(s.v, matvec(decayed, s.k_feat));
            return add(decayed, scale(outer(resid, s.k_feat), s.eta));
        }
        case RuleKind::DeltaProduct:
            throw ConfigError("apply_rule: DeltaProduct needs micro-steps, use delta_product_step");
    }
    throw ConfigError("apply_rule: unknown rule");
}

std::optional<CanonicalTransition> canonical_transition(const UpdateRule& rule,
                                                        const StepInputs& s,
                                                        int d_out, int d_key) {
    require(d_out > 0 && d_key > 0, "canonical_transition: dims must be positive");
    CanonicalTransition t;
    t.A = identity(d_key);
    t.B = identity(d_out);
    t.C = zeros(d_out, d_key);

    auto householder = [&](double eta) {
        // I - eta * k k^T
        Mat A = identity(d_key);
        for (int i = 0; i < d_key; ++i)
            for (int j = 0; j < d_key; ++j) A(i, j) -= eta * s.k_feat[i] * s.k_feat[j];
        return A;
    };

    switch (rule.kind) {
        case RuleKind::Additive:
            t.C = outer(s.v, s.k_feat);
            return t;
        case RuleKind::Delta:
            t.A = householder(s.eta);
            t.C = scale(outer(s.v, s.k_feat), s.eta);
            return t;
        case RuleKind::Oja:
            return std::nullopt;
        case RuleKind::RetNet:
            t.B = scale(identity(d_out), rule.retnet_lambda);
            t.C = outer(s.v, s.k_feat);
            return t;
        case RuleKind::Mamba2:
            t.B = scale(identity(d_out), s.lam);
            t.C = outer(s.v, s.k_feat);
            return t;
        case RuleKind::GatedRFA:
            t.B = scale(identity(d_out), s.lam);
            t.C = scale(outer(s.v, s.k_feat), 1.0 - s.lam);
            return t;
        case RuleKind::MLSTM:
            t.B = scale(identity(d_out), s.lam);
            t.C = scale(outer(s.v, s.k_feat), s.eta);
            return t;
        case RuleKind::GLA: {
            require(s.a.dim() == d_out, "canonical_transition: GLA row decay dim");
            t.B = zeros(d_out, d_out);
            for (int i = 0; i < d_out; ++i) t.B(i, i) = s.a[i];
            t.C = outer(s.v, s.k_feat);
            return t;
        }
        case RuleKind::GatedDelta:
            t.A = householder(s.eta);
            t.B = scale(identity(d_out), s.lam);
            t.C = scale(outer(s.v, s.k_feat), s.eta);
            return t;
        case RuleKind::DeltaProduct:
            throw ConfigError("canonical_transition: compose per-micro-step Delta transitions");
    }
    throw ConfigError("canonical_transition: unknown rule");
}

double local_objective(const UpdateRule& rule, const Mat& W_eval, const Mat& W_prev,
                       const StepInputs& s) {
    check_dims(W_eval, s);
    const double attract = -dot(s.v, matvec(W_eval, s.k_feat));
    auto sq_resid = [&] {
        const Vec r = sub(s.v, matvec(W_eval, s.k_feat));
        return dot(r, r);
    };
    auto sq_drift = [&] {
        const Mat d = sub(W_eval, W_prev);
        double sum = 0.0;
        for (double x : d.a) sum += x * x;
        return sum;
    };
    switch (rule.kind) {
        case RuleKind::Additive:
        case RuleKind::Oja:  // same objective; the norm constraint is not evaluated here
            return attract;
        case RuleKind::Delta:
        case RuleKind::DeltaProduct:
            return sq_resid();
        case RuleKind::RetNet:
            return attract + rule.retnet_lambda * sq_drift();
        case RuleKind::Mamba2:
            return attract + s.lam * sq_drift();
        case RuleKind::GatedRFA:
            return (1.0 - s.lam) * attract + s.lam * sq_drift();
        case RuleKind::MLSTM:
            return s.eta * attract + s.lam * sq_drift();
        case RuleKind::GLA: {
            require(s.a.dim() == W_eval.rows, "local_objective: GLA row decay dim");
            double reg = 0.0;
            for (int i = 0; i < W_eval.rows; ++i)
                for (int j = 0; j < W_eval.cols; ++j) {
                    const double d = s.a[i] * (W_eval(i, j) - W_prev(i, j));
                    reg += d * d;
                }
            return attract + reg;
        }
        case RuleKind::GatedDelta:
            return sq_resid() + s.lam * sq_drift();
    }
    throw ConfigError("local_objective: unknown rule");
}

double objective_gradient_check(const UpdateRule& rule, const Mat& W, const StepInputs& s,
                                double step) {
    if (rule.kind != RuleKind::Delta && rule.kind != RuleKind::GatedDelta)
        throw ConfigError("objective_gradient_check: Delta-family rules only");
    check_dims(W, s);
    // Analytic gradient of 0.5*||v - W k||^2: -(v - W k) (x) k.
    const Vec resid = sub(s.v, matvec(W, s.k_feat));
    const Mat analytic = scale(outer(resid, s.k_feat), -1.0);

    double max_rel = 0.0;
    Mat probe = W;
    for (int i = 0; i < W.rows; ++i) {
        for (int j = 0; j < W.cols; ++j) {
            auto loss_at = [&](double w) {
                probe(i, j) = w;
                const Vec r = sub(s.v, matvec(probe, s.k_feat));
                return 0.5 * dot(r, r);
            };
            const double w0 = W(i, j);
            const double numeric = (loss_at(w0 + step) - loss_at(w0 - step)) / (2.0 * step);
            probe(i, j) = w0;
            const double denom = std::fabs(analytic(i, j)) + std::fabs(numeric);
            if (denom > 1e-12)
                max_rel = std::max(max_rel, std::fabs(analytic(i, j) - numeric) / denom);
        }
    }
    return max_rel;
}

Mat delta_product_step(const Mat& W, const std::vector<StepInputs>& micro_steps) {
    if (micro_steps.empty()) throw ConfigError("delta_product_step: empty micro-step list");
    Mat out = W;
    const UpdateRule delta = UpdateRule::delta();
    for (const StepInputs& s : micro_steps) out = apply_rule(delta, out, s);
    return out;
}

}  // namespace fwplab
