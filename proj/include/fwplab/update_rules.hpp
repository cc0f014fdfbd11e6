#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fwplab/tensor.hpp"

namespace fwplab {

enum class RuleKind {
    Additive,
    Delta,
    Oja,
    RetNet,
    Mamba2,
    GatedRFA,
    MLSTM,
    GLA,
    GatedDelta,
    DeltaProduct,
};

// One fast-weight update rule plus its fixed hyperparameters.
struct UpdateRule {
    RuleKind kind = RuleKind::Additive;
    double retnet_lambda = 0.9;  // constant decay, (0,1]
    int n_h = 1;                 // DeltaProduct micro-steps per token, >= 1

    static UpdateRule additive() { return {RuleKind::Additive}; }
    static UpdateRule delta() { return {RuleKind::Delta}; }
    static UpdateRule oja() { return {RuleKind::Oja}; }
    static UpdateRule retnet(double lambda);
    static UpdateRule mamba2() { return {RuleKind::Mamba2}; }
    static UpdateRule gated_rfa() { return {RuleKind::GatedRFA}; }
    static UpdateRule mlstm() { return {RuleKind::MLSTM}; }
    static UpdateRule gla() { return {RuleKind::GLA}; }
    static UpdateRule gated_delta() { return {RuleKind::GatedDelta}; }
    static UpdateRule delta_product(int n_h);
};

std::string rule_name(RuleKind kind);
RuleKind rule_from_name(const std::string& name);

bool rule_uses_eta(RuleKind kind);
bool rule_uses_lambda(RuleKind kind);  // dynamic scalar decay
bool rule_uses_row_decay(RuleKind kind);

// Already-mapped per-step inputs: keys are phi-mapped, eta/lam/a are bounded.
struct StepInputs {
    Vec k_feat;        // phi(k), dim d_key
    Vec v;             // value, dim d_out
    double eta = 1.0;  // dynamic learning rate psi(beta)
    double lam = 1.0;  // dynamic decay in (0,1); RetNet reads its constant instead
    Vec a;             // per-row decay in (0,1)^{d_out}, GLA only
};

// W_t = B W_{t-1} A + C with state-independent A, B, C.
struct CanonicalTransition {
    Mat A;  // d_key x d_key
    Mat B;  // d_out x d_out
    Mat C;  // d_out x d_key
};

Mat apply_rule(const UpdateRule& rule, const Mat& W, const StepInputs& s);

// Oja's transition depends on W, so it has no canonical form: nullopt.
std::optional<CanonicalTransition> canonical_transition(const UpdateRule& rule,
                                                        const StepInputs& s,
                                                        int d_out, int d_key);

// Per-rule local objective evaluated at W_eval (constant factors omitted).
double local_objective(const UpdateRule& rule, const Mat& W_eval, const Mat& W_prev,
                       const StepInputs& s);

// Analytic gradient of 0.5*||v - W k||^2 vs central finite differences.
double objective_gradient_check(const UpdateRule& rule, const Mat& W, const StepInputs& s,
                                double step = 1e-6);

Mat delta_product_step(const Mat& W, const std::vector<StepInputs>& micro_steps);

}  // namespace fwplab
