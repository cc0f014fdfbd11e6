#include "fwplab/model.hpp"

#include <cmath>
#include <random>

namespace fwplab {

int ParamSet::add(const std::string& name, Mat init) {
    names.push_back(name);
    grads.emplace_back(init.rows, init.cols);
    values.push_back(std::move(init));
    return static_cast<int>(values.size()) - 1;
}

int ParamSet::index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw ConfigError("ParamSet: no parameter named " + name);
}

void ParamSet::zero_grads() {
    for (Mat& g : grads)
        for (double& v : g.a) v = 0.0;
}

size_t ParamSet::entry_count() const {
    size_t n = 0;
    for (const Mat& m : values) n += m.a.size();
    return n;
}

std::string mixer_name(MixerKind kind) {
    switch (kind) {
        case MixerKind::Fwp: return "fwp";
        case MixerKind::SoftmaxAttention: return "softmax_attention";
        case MixerKind::Rnn: return "rnn";
        case MixerKind::SsmCell: return "ssm_cell";
    }
    throw ConfigError("mixer_name: unknown mixer");
}

MixerKind mixer_from_name(const std::string& name) {
    if (name == "fwp") return MixerKind::Fwp;
    if (name == "softmax_attention") return MixerKind::SoftmaxAttention;
    if (name == "rnn") return MixerKind::Rnn;
    if (name == "ssm_cell") return MixerKind::SsmCell;
    throw ConfigError("unknown mixer name: " + name);
}

LayerConfig ModelConfig::mixer_layer_config() const {
    LayerConfig lc;
    lc.d_in = lc.d_key = lc.d_out = d_model;
    lc.heads = heads;
    lc.rule = rule;
    lc.phi = phi;
    lc.psi_scale = psi_scale;
    lc.value_activation = value_activation;
    return lc;
}

void ModelConfig::validate() const {
    if (d_in < 1 || d_model < 1 || n_out < 1 || n_blocks < 0)
        throw ConfigError("ModelConfig: bad dimensions");
    if (d_model % heads != 0) throw ConfigError("ModelConfig: d_model must be divisible by heads");
    if (mixer == MixerKind::Fwp) mixer_layer_config().validate();
}

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec slice(const Vec& x, int begin, int len) {
    Vec out(len);
    for (int i = 0; i < len; ++i) out[i] = x[begin + i];
    return out;
}

void scatter_add(Vec& full, const Vec& part, int begin) {
    for (int i = 0; i < part.dim(); ++i) full[begin + i] += part[i];
}

// d(phi(x))/dx applied to upstream g; x is the pre-activation.
Vec phi_backward(PhiKind kind, const Vec& x, const Vec& g) {
    switch (kind) {
        case PhiKind::Identity:
            return g;
        case PhiKind::EluPlusOne: {
            Vec out(g.dim());
            for (int i = 0; i < g.dim(); ++i)
                out[i] = g[i] * (x[i] > 0.0 ? 1.0 : std::exp(x[i]));
            return out;
        }
        case PhiKind::SiluL2Norm: {
            Vec s(x.dim());
            for (int i = 0; i < x.dim(); ++i) s[i] = x[i] * sig(x[i]);
            const double n = l2_norm(s);
            if (n == 0.0) return Vec(g.dim());
            const Vec u = scale(s, 1.0 / n);
            Vec ds = scale(sub(g, scale(u, dot(u, g))), 1.0 / n);
            Vec out(g.dim());
            for (int i = 0; i < g.dim(); ++i) {
                const double sg = sig(x[i]);
                out[i] = ds[i] * (sg * (1.0 + x[i] * (1.0 - sg)));
            }
            return out;
        }
    }
    throw ConfigError("phi_backward: unknown phi");
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// --- layer norm (learned gain, no bias) ---

struct LnCache {
    std::vector<Vec> in;
    std::vector<Vec> xhat;
    std::vector<double> inv_std;
};

std::vector<Vec> ln_forward(const Mat& gain, const std::vector<Vec>& xs, double eps,
                            LnCache& cache) {
    const int d = gain.cols;
    std::vector<Vec> ys;
    ys.reserve(xs.size());
    for (const Vec& x : xs) {
        require(x.dim() == d, "layer norm: dim mismatch");
        double mu = 0.0;
        for (double v : x.a) mu += v;
        mu /= d;
        double var = 0.0;
        for (double v : x.a) var += (v - mu) * (v - mu);
        var /= d;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        Vec xhat(d), y(d);
        for (int i = 0; i < d; ++i) {
            xhat[i] = (x[i] - mu) * inv_std;
            y[i] = gain(0, i) * xhat[i];
        }
        cache.in.push_back(x);
        cache.xhat.push_back(xhat);
        cache.inv_std.push_back(inv_std);
        ys.push_back(std::move(y));
    }
    return ys;
}

std::vector<Vec> ln_backward(const Mat& gain, Mat& d_gain, const LnCache& cache,
                             const std::vector<Vec>& dys) {
    const int d = gain.cols;
    std::vector<Vec> dxs(dys.size(), Vec(d));
    for (size_t t = 0; t < dys.size(); ++t) {
        const Vec& dy = dys[t];
        const Vec& xhat = cache.xhat[t];
        Vec dxhat(d);
        for (int i = 0; i < d; ++i) {
            d_gain(0, i) += dy[i] * xhat[i];
            dxhat[i] = dy[i] * gain(0, i);
        }
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xhat[i];
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for (int i = 0; i < d; ++i)
            dxs[t][i] = cache.inv_std[t] * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
    return dxs;
}

// --- two-layer feedforward with GELU, hidden width 4x ---

struct FfnCache {
    std::vector<Vec> in;
    std::vector<Vec> pre;
    std::vector<Vec> act;
};

std::vector<Vec> ffn_forward(const Mat& W1, const Mat& W2, const std::vector<Vec>& xs,
                             FfnCache& cache) {
    std::vector<Vec> ys;
    ys.reserve(xs.size());
    for (const Vec& x : xs) {
        Vec pre = matvec(W1, x);
        Vec act(pre.dim());
        for (int i = 0; i < pre.dim(); ++i) act[i] = gelu(pre[i]);
        ys.push_back(matvec(W2, act));
        cache.in.push_back(x);
        cache.pre.push_back(std::move(pre));
        cache.act.push_back(std::move(act));
    }
    return ys;
}

std::vector<Vec> ffn_backward(const Mat& W1, const Mat& W2, Mat& dW1, Mat& dW2,
                              const FfnCache& cache, const std::vector<Vec>& dys) {
    std::vector<Vec> dxs;
    dxs.reserve(dys.size());
    for (size_t t = 0; t < dys.size(); ++t) {
        const Vec& dy = dys[t];
        const Vec& act = cache.act[t];
        const Vec& pre = cache.pre[t];
        for (int i = 0; i < W2.rows; ++i)
            for (int j = 0; j < W2.cols; ++j) dW2(i, j) += dy[i] * act[j];
        Vec dact = matvec_transposed(W2, dy);
        Vec dpre(pre.dim());
        for (int i = 0; i < pre.dim(); ++i) dpre[i] = dact[i] * gelu_grad(pre[i]);
        for (int i = 0; i < W1.rows; ++i)
            for (int j = 0; j < W1.cols; ++j) dW1(i, j) += dpre[i] * cache.in[t][j];
        dxs.push_back(matvec_transposed(W1, dpre));
    }
    return dxs;
}

// --- FWP mixer ---

struct FwpParamIdx {
    int Wq = -1, Wk = -1, Wv = -1, wb = -1, wlam = -1, Wa = -1;
};

struct FwpHeadStep {
    Vec q, k, v;              // raw per-head slices
    Vec k_feat, q_feat, v_used;
    double beta_raw = 0.0, lam_raw = 0.0;
    Vec a_raw;
    double eta = 1.0, lam = 1.0;
    Vec a;
};

struct FwpCache {
    std::vector<Vec> x;
    // per head: W[0..T], W[0] = 0; steps[t] holds per-step intermediates
    std::vector<std::vector<Mat>> W;
    std::vector<std::vector<FwpHeadStep>> steps;
};

std::vector<Vec> fwp_forward(const ModelConfig& mc, const ParamSet& p, const FwpParamIdx& idx,
                             const std::vector<Vec>& xs, FwpCache& cache) {
    const LayerConfig lc = mc.mixer_layer_config();
    const int H = lc.heads, hk = lc.head_key(), ho = lc.head_out();
    const int T = static_cast<int>(xs.size());
    cache.x = xs;
    cache.W.assign(H, {Mat(ho, hk)});
    cache.steps.assign(H, {});

    const Mat& Wq = p.values[idx.Wq];
    const Mat& Wk = p.values[idx.Wk];
    const Mat& Wv = p.values[idx.Wv];

    std::vector<Vec> ys(T, Vec(lc.d_out));
    for (int t = 0; t < T; ++t) {
        const Vec q_full = matvec(Wq, xs[t]);
        const Vec k_full = matvec(Wk, xs[t]);
        const Vec v_full = matvec(Wv, xs[t]);
        const Vec betas = idx.wb >= 0 ? matvec(p.values[idx.wb], xs[t]) : Vec(H);
        const Vec lams = idx.wlam >= 0 ? matvec(p.values[idx.wlam], xs[t]) : Vec(H);
        const Vec a_full = idx.Wa >= 0 ? matvec(p.values[idx.Wa], xs[t]) : Vec();
        for (int h = 0; h < H; ++h) {
            FwpHeadStep st;
            st.q = slice(q_full, h * hk, hk);
            st.k = slice(k_full, h * hk, hk);
            st.v = slice(v_full, h * ho, ho);
            st.beta_raw = betas[h];
            st.lam_raw = lams[h];
            st.k_feat = phi_map(lc.phi, st.k);
            st.q_feat = phi_map(lc.phi, st.q);
            st.v_used = lc.value_activation ? phi_map(lc.phi, st.v) : st.v;
            st.eta = lc.psi_scale * sig(st.beta_raw);
            st.lam = sig(st.lam_raw);
            if (idx.Wa >= 0) {
                st.a_raw = slice(a_full, h * ho, ho);
                st.a = Vec(ho);
                for (int i = 0; i < ho; ++i) st.a[i] = sig(st.a_raw[i]);
            }
            StepInputs s;
            s.k_feat = st.k_feat;
            s.v = st.v_used;
            s.eta = st.eta;
            s.lam = st.lam;
            s.a = st.a;
            UpdateRule rule = lc.rule;
            if (rule.kind == RuleKind::RetNet) rule.retnet_lambda = lc.retnet_lambda(h);
            Mat Wt = apply_rule(rule, cache.W[h].back(), s);
            const Vec y_head = matvec(Wt, st.q_feat);
            for (int i = 0; i < ho; ++i) ys[t][h * ho + i] = y_head[i];
            cache.W[h].push_back(std::move(Wt));
            cache.steps[h].push_back(std::move(st));
        }
        if (!all_finite(ys[t]))
            throw NumericError("fwp mixer: non-finite output at step " + std::to_string(t + 1));
    }
    return ys;
}

std::vector<Vec> fwp_backward(const ModelConfig& mc, ParamSet& p, const FwpParamIdx& idx,
                              const FwpCache& cache, const std::vector<Vec>& dys) {
    const LayerConfig lc = mc.mixer_layer_config();
    const int H = lc.heads, hk = lc.head_key(), ho = lc.head_out();
    const int T = static_cast<int>(dys.size());
    const Mat& Wq = p.values[idx.Wq];
    const Mat& Wk = p.values[idx.Wk];
    const Mat& Wv = p.values[idx.Wv];
    std::vector<Vec> dxs(T, Vec(lc.d_in));

    // per-step full-width gradients, filled per head below
    std::vector<Vec> dq_full(T, Vec(lc.d_key)), dk_full(T, Vec(lc.d_key)),
        dv_full(T, Vec(lc.d_out)), da_full(T, Vec(lc.d_out));
    std::vector<Vec> dbeta(T, Vec(H)), dlamr(T, Vec(H));

    for (int h = 0; h < H; ++h) {
        Mat dW(ho, hk);  // gradient w.r.t. W_t carried backward
        UpdateRule rule = lc.rule;
        if (rule.kind == RuleKind::RetNet) rule.retnet_lambda = lc.retnet_lambda(h);
        for (int t = T - 1; t >= 0; --t) {
            const FwpHeadStep& st = cache.steps[h][t];
            const Mat& Wt = cache.W[h][t + 1];
            const Mat& Wp = cache.W[h][t];  // pre-update state
            const Vec dy = slice(dys[t], h * ho, ho);

            // y = W_t q_feat
            Mat G = dW;
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < hk; ++j) G(i, j) += dy[i] * st.q_feat[j];
            Vec dq_feat = matvec_transposed(Wt, dy);

            Vec dk_feat(hk), dv_used(ho), da(ho);
            double deta = 0.0, dlam = 0.0;
            const Vec Gk = matvec(G, st.k_feat);
            const Vec Gtv = matvec_transposed(G, st.v_used);

            switch (rule.kind) {
                case RuleKind::Additive:
                    dW = G;
                    dv_used = Gk;
                    dk_feat = Gtv;
                    break;
                case RuleKind::Delta: {
                    // W_t = W (I - eta k k^T) + eta v (x) k
                    dW = G;
                    for (int i = 0; i < ho; ++i)
                        for (int j = 0; j < hk; ++j) dW(i, j) -= st.eta * Gk[i] * st.k_feat[j];
                    dv_used = scale(Gk, st.eta);
                    const Vec Wk_vec = matvec(Wp, st.k_feat);
                    const Vec t1 = matvec_transposed(Wp, Gk);
                    const Vec t2 = matvec_transposed(G, Wk_vec);
                    dk_feat = scale(sub(Gtv, add(t1, t2)), st.eta);
                    deta = dot(Gk, sub(st.v_used, Wk_vec));
                    break;
                }
                case RuleKind::Oja: {
                    // W_t = W + eta v (x) (k - W^T v)
                    const Vec Wtv = matvec_transposed(Wp, st.v_used);
                    dW = G;
                    for (int i = 0; i < ho; ++i)
                        for (int j = 0; j < hk; ++j) dW(i, j) -= st.eta * st.v_used[i] * Gtv[j];
                    dk_feat = scale(Gtv, st.eta);
                    const Vec m = sub(st.k_feat, Wtv);
                    const Vec Gm = matvec(G, m);
                    deta = dot(st.v_used, Gm);
                    dv_used = scale(sub(Gk, add(matvec(G, Wtv), matvec(Wp, Gtv))), st.eta);
                    break;
                }
                case RuleKind::RetNet:
                    dW = scale(G, rule.retnet_lambda);
                    dv_used = Gk;
                    dk_feat = Gtv;
                    break;
                case RuleKind::Mamba2: {
                    dW = scale(G, st.lam);
                    dv_used = Gk;
                    dk_feat = Gtv;
                    double gw = 0.0;
                    for (size_t i = 0; i < G.a.size(); ++i) gw += G.a[i] * Wp.a[i];
                    dlam = gw;
                    break;
                }
                case RuleKind::GatedRFA: {
                    dW = scale(G, st.lam);
                    dv_used = scale(Gk, 1.0 - st.lam);
                    dk_feat = scale(Gtv, 1.0 - st.lam);
                    double gw = 0.0;
                    for (size_t i = 0; i < G.a.size(); ++i) gw += G.a[i] * Wp.a[i];
                    dlam = gw - dot(st.v_used, Gk);
                    break;
                }
                case RuleKind::MLSTM: {
                    dW = scale(G, st.lam);
                    dv_used = scale(Gk, st.eta);
                    dk_feat = scale(Gtv, st.eta);
                    double gw = 0.0;
                    for (size_t i = 0; i < G.a.size(); ++i) gw += G.a[i] * Wp.a[i];
                    dlam = gw;
                    deta = dot(st.v_used, Gk);
                    break;
                }
                case RuleKind::GLA: {
                    dW = G;
                    for (int i = 0; i < ho; ++i) {
                        double row = 0.0;
                        for (int j = 0; j < hk; ++j) {
                            row += G(i, j) * Wp(i, j);
                            dW(i, j) = st.a[i] * G(i, j);
                        }
                        da[i] = row;
                    }
                    dv_used = Gk;
                    dk_feat = Gtv;
                    break;
                }
                case RuleKind::GatedDelta: {
                    // W_t = lam W (I - eta k k^T) + eta v (x) k
                    Mat dD = G;  // gradient w.r.t. D = lam * W
                    for (int i = 0; i < ho; ++i)
                        for (int j = 0; j < hk; ++j) dD(i, j) -= st.eta * Gk[i] * st.k_feat[j];
                    dW = scale(dD, st.lam);
                    double gw = 0.0;
                    for (size_t i = 0; i < dD.a.size(); ++i) gw += dD.a[i] * Wp.a[i];
                    dlam = gw;
                    dv_used = scale(Gk, st.eta);
                    const Mat D = scale(Wp, st.lam);
                    const Vec Dk = matvec(D, st.k_feat);
                    const Vec t1 = matvec_transposed(D, Gk);
                    const Vec t2 = matvec_transposed(G, Dk);
                    dk_feat = scale(sub(Gtv, add(t1, t2)), st.eta);
                    deta = dot(Gk, sub(st.v_used, Dk));
                    break;
                }
                case RuleKind::DeltaProduct:
                    throw ConfigError("fwp_backward: delta_product is not a layer rule");
            }

            // phi and bounded mappings
            const Vec dq = phi_backward(lc.phi, st.q, dq_feat);
            const Vec dk = phi_backward(lc.phi, st.k, dk_feat);
            const Vec dv = lc.value_activation ? phi_backward(lc.phi, st.v, dv_used) : dv_used;
            scatter_add(dq_full[t], dq, h * hk);
            scatter_add(dk_full[t], dk, h * hk);
            scatter_add(dv_full[t], dv, h * ho);
            if (idx.wb >= 0) {
                const double sg = sig(st.beta_raw);
                dbeta[t][h] = deta * lc.psi_scale * sg * (1.0 - sg);
            }
            if (idx.wlam >= 0) {
                const double sg = sig(st.lam_raw);
                dlamr[t][h] = dlam * sg * (1.0 - sg);
            }
            if (idx.Wa >= 0) {
                for (int i = 0; i < ho; ++i) {
                    const double sg = sig(st.a_raw[i]);
                    da_full[t][h * ho + i] += da[i] * sg * (1.0 - sg);
                }
            }
        }
    }

    // projection parameter grads and input grads, serial over time
    for (int t = 0; t < T; ++t) {
        const Vec& x = cache.x[t];
        auto accum = [&](int pidx, const Vec& dout) {
            Mat& g = p.grads[pidx];
            const Mat& W = p.values[pidx];
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) g(i, j) += dout[i] * x[j];
            const Vec dx = matvec_transposed(W, dout);
            for (int i = 0; i < dx.dim(); ++i) dxs[t][i] += dx[i];
        };
        accum(idx.Wq, dq_full[t]);
        accum(idx.Wk, dk_full[t]);
        accum(idx.Wv, dv_full[t]);
        if (idx.wb >= 0) accum(idx.wb, dbeta[t]);
        if (idx.wlam >= 0) accum(idx.wlam, dlamr[t]);
        if (idx.Wa >= 0) accum(idx.Wa, da_full[t]);
    }
    return dxs;
}

// --- causal softmax attention mixer ---

struct AttnCache {
    std::vector<Vec> x;
    // per head per step: raw slices and attention weights over steps <= t
    std::vector<std::vector<Vec>> q, k, v, alpha;
};

std::vector<Vec> attn_forward(const ModelConfig& mc, const ParamSet& p, const FwpParamIdx& idx,
                              const std::vector<Vec>& xs, AttnCache& cache) {
    const int H = mc.heads, d = mc.d_model, hd = d / H;
    const int T = static_cast<int>(xs.size());
    cache.x = xs;
    cache.q.assign(H, {});
    cache.k.assign(H, {});
    cache.v.assign(H, {});
    cache.alpha.assign(H, {});
    std::vector<Vec> ys(T, Vec(d));
    for (int t = 0; t < T; ++t) {
        const Vec q_full = matvec(p.values[idx.Wq], xs[t]);
        const Vec k_full = matvec(p.values[idx.Wk], xs[t]);
        const Vec v_full = matvec(p.values[idx.Wv], xs[t]);
        for (int h = 0; h < H; ++h) {
            cache.q[h].push_back(slice(q_full, h * hd, hd));
            cache.k[h].push_back(slice(k_full, h * hd, hd));
            cache.v[h].push_back(slice(v_full, h * hd, hd));
            Vec scores(t + 1);
            for (int tau = 0; tau <= t; ++tau)
                scores[tau] = dot(cache.k[h][tau], cache.q[h][t]);
            const Vec alpha = softmax(scores);
            Vec y_head(hd);
            for (int tau = 0; tau <= t; ++tau)
                for (int i = 0; i < hd; ++i) y_head[i] += alpha[tau] * cache.v[h][tau][i];
            for (int i = 0; i < hd; ++i) ys[t][h * hd + i] = y_head[i];
            cache.alpha[h].push_back(alpha);
        }
    }
    return ys;
}

std::vector<Vec> attn_backward(const ModelConfig& mc, ParamSet& p, const FwpParamIdx& idx,
                               const AttnCache& cache, const std::vector<Vec>& dys) {
    const int H = mc.heads, d = mc.d_model, hd = d / H;
    const int T = static_cast<int>(dys.size());
    std::vector<Vec> dq_full(T, Vec(d)), dk_full(T, Vec(d)), dv_full(T, Vec(d));
    for (int h = 0; h < H; ++h) {
        for (int t = 0; t < T; ++t) {
            const Vec dy = slice(dys[t], h * hd, hd);
            const Vec& alpha = cache.alpha[h][t];
            Vec dalpha(t + 1);
            for (int tau = 0; tau <= t; ++tau) {
                dalpha[tau] = dot(cache.v[h][tau], dy);
                for (int i = 0; i < hd; ++i) dv_full[tau][h * hd + i] += alpha[tau] * dy[i];
            }
            const double inner = dot(alpha, dalpha);
            for (int tau = 0; tau <= t; ++tau) {
                const double dscore = alpha[tau] * (dalpha[tau] - inner);
                for (int i = 0; i < hd; ++i) {
                    dq_full[t][h * hd + i] += dscore * cache.k[h][tau][i];
                    dk_full[tau][h * hd + i] += dscore * cache.q[h][t][i];
                }
            }
        }
    }
    std::vector<Vec> dxs(T, Vec(d));
    for (int t = 0; t < T; ++t) {
        auto accum = [&](int pidx, const Vec& dout) {
            Mat& g = p.grads[pidx];
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) g(i, j) += dout[i] * cache.x[t][j];
            const Vec dx = matvec_transposed(p.values[pidx], dout);
            for (int i = 0; i < dx.dim(); ++i) dxs[t][i] += dx[i];
        };
        accum(idx.Wq, dq_full[t]);
        accum(idx.Wk, dk_full[t]);
        accum(idx.Wv, dv_full[t]);
    }
    return dxs;
}

// --- tanh RNN mixer ---

struct RnnCache {
    std::vector<Vec> x;
    std::vector<Vec> s;  // s[0] = 0, s[t+1] = state after step t
};

std::vector<Vec> rnn_mixer_forward(const ModelConfig& mc, const ParamSet& p, int Wr, int Wi,
                                   const std::vector<Vec>& xs, RnnCache& cache) {
    const int d = mc.d_model;
    cache.x = xs;
    cache.s = {Vec(d)};
    std::vector<Vec> ys;
    for (const Vec& x : xs) {
        Vec pre = add(matvec(p.values[Wr], cache.s.back()), matvec(p.values[Wi], x));
        for (double& v : pre.a) v = std::tanh(v);
        cache.s.push_back(pre);
        ys.push_back(pre);
    }
    return ys;
}

std::vector<Vec> rnn_mixer_backward(const ModelConfig& mc, ParamSet& p, int Wr, int Wi,
                                    const RnnCache& cache, const std::vector<Vec>& dys) {
    const int d = mc.d_model;
    const int T = static_cast<int>(dys.size());
    std::vector<Vec> dxs(T, Vec(d));
    Vec ds(d);
    for (int t = T - 1; t >= 0; --t) {
        Vec total = add(dys[t], ds);
        Vec dpre(d);
        for (int i = 0; i < d; ++i) {
            const double s = cache.s[t + 1][i];
            dpre[i] = total[i] * (1.0 - s * s);
        }
        Mat& gWr = p.grads[Wr];
        Mat& gWi = p.grads[Wi];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                gWr(i, j) += dpre[i] * cache.s[t][j];
                gWi(i, j) += dpre[i] * cache.x[t][j];
            }
        ds = matvec_transposed(p.values[Wr], dpre);
        dxs[t] = matvec_transposed(p.values[Wi], dpre);
    }
    return dxs;
}

// --- element-wise SSM cell mixer (sigmoid-gated, gates from x only) ---

struct SsmCache {
    std::vector<Vec> x;
    std::vector<Vec> r, gate_i;  // post-sigmoid gates
    std::vector<Vec> s;          // s[0] = 0
};

std::vector<Vec> ssm_mixer_forward(const ModelConfig& mc, const ParamSet& p, int Wr, int Wi,
                                   const std::vector<Vec>& xs, SsmCache& cache) {
    const int d = mc.d_model;
    cache.x = xs;
    cache.s = {Vec(d)};
    std::vector<Vec> ys;
    for (const Vec& x : xs) {
        Vec r = matvec(p.values[Wr], x);
        Vec gi = matvec(p.values[Wi], x);
        for (double& v : r.a) v = sig(v);
        for (double& v : gi.a) v = sig(v);
        Vec s(d);
        for (int i = 0; i < d; ++i) s[i] = r[i] * cache.s.back()[i] + gi[i] * x[i];
        cache.r.push_back(r);
        cache.gate_i.push_back(gi);
        cache.s.push_back(s);
        ys.push_back(s);
    }
    return ys;
}

std::vector<Vec> ssm_mixer_backward(const ModelConfig& mc, ParamSet& p, int Wr, int Wi,
                                    const SsmCache& cache, const std::vector<Vec>& dys) {
    const int d = mc.d_model;
    const int T = static_cast<int>(dys.size());
    std::vector<Vec> dxs(T, Vec(d));
    Vec ds(d);
    for (int t = T - 1; t >= 0; --t) {
        Vec total = add(dys[t], ds);
        Vec dr(d), dgi(d);
        for (int i = 0; i < d; ++i) {
            dr[i] = total[i] * cache.s[t][i];
            dgi[i] = total[i] * cache.x[t][i];
            dxs[t][i] += total[i] * cache.gate_i[t][i];
        }
        Vec dr_pre(d), dgi_pre(d);
        for (int i = 0; i < d; ++i) {
            dr_pre[i] = dr[i] * cache.r[t][i] * (1.0 - cache.r[t][i]);
            dgi_pre[i] = dgi[i] * cache.gate_i[t][i] * (1.0 - cache.gate_i[t][i]);
        }
        Mat& gWr = p.grads[Wr];
        Mat& gWi = p.grads[Wi];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                gWr(i, j) += dr_pre[i] * cache.x[t][j];
                gWi(i, j) += dgi_pre[i] * cache.x[t][j];
            }
        const Vec back_r = matvec_transposed(p.values[Wr], dr_pre);
        const Vec back_i = matvec_transposed(p.values[Wi], dgi_pre);
        Vec next_ds(d);
        for (int i = 0; i < d; ++i) {
            dxs[t][i] += back_r[i] + back_i[i];
            next_ds[i] = total[i] * cache.r[t][i];
        }
        ds = next_ds;
    }
    return dxs;
}

// --- model assembly ---

struct MixerIdx {
    FwpParamIdx fwp;  // also reused for attention (Wq/Wk/Wv)
    int Wr = -1, Wi = -1;
};

struct ModelIdx {
    int emb = -1, readout = -1;
    struct BlockIdx {
        int ln1 = -1, ln2 = -1, W1 = -1, W2 = -1;
        MixerIdx mix;
    };
    std::vector<BlockIdx> blocks;
    MixerIdx bare;  // n_blocks == 0
};

MixerIdx register_mixer(const ModelConfig& cfg, ParamSet& p, const std::string& prefix,
                        std::mt19937_64& rng) {
    const int d = cfg.d_model;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto fill = [&](int r, int c) {
        Mat m(r, c);
        for (double& v : m.a) v = dist(rng);
        return m;
    };
    MixerIdx idx;
    switch (cfg.mixer) {
        case MixerKind::Fwp:
            idx.fwp.Wq = p.add(prefix + "Wq", fill(d, d));
            idx.fwp.Wk = p.add(prefix + "Wk", fill(d, d));
            idx.fwp.Wv = p.add(prefix + "Wv", fill(d, d));
            if (rule_uses_eta(cfg.rule.kind)) idx.fwp.wb = p.add(prefix + "wb", fill(cfg.heads, d));
            if (rule_uses_lambda(cfg.rule.kind))
                idx.fwp.wlam = p.add(prefix + "wlam", fill(cfg.heads, d));
            if (rule_uses_row_decay(cfg.rule.kind)) idx.fwp.Wa = p.add(prefix + "Wa", fill(d, d));
            break;
        case MixerKind::SoftmaxAttention:
            idx.fwp.Wq = p.add(prefix + "Wq", fill(d, d));
            idx.fwp.Wk = p.add(prefix + "Wk", fill(d, d));
            idx.fwp.Wv = p.add(prefix + "Wv", fill(d, d));
            break;
        case MixerKind::Rnn:
        case MixerKind::SsmCell:
            idx.Wr = p.add(prefix + "Wr", fill(d, d));
            idx.Wi = p.add(prefix + "Wi", fill(d, d));
            break;
    }
    return idx;
}

ModelIdx build_index(const ModelConfig& cfg, ParamSet& p, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double bound_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_in));
    const double bound_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    auto fill = [&](int r, int c, double bound) {
        Mat m(r, c);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : m.a) v = dist(rng);
        return m;
    };
    ModelIdx idx;
    idx.emb = p.add("emb", fill(cfg.d_model, cfg.d_in, bound_in));
    if (cfg.n_blocks == 0) {
        idx.bare = register_mixer(cfg, p, "mix.", rng);
    } else {
        for (int b = 0; b < cfg.n_blocks; ++b) {
            const std::string pre = "b" + std::to_string(b) + ".";
            ModelIdx::BlockIdx bi;
            Mat ones(1, cfg.d_model);
            for (double& v : ones.a) v = 1.0;
            bi.ln1 = p.add(pre + "ln1.g", ones);
            bi.mix = register_mixer(cfg, p, pre + "mix.", rng);
            bi.ln2 = p.add(pre + "ln2.g", ones);
            bi.W1 = p.add(pre + "ffn.W1", fill(4 * cfg.d_model, cfg.d_model, bound_d));
            bi.W2 = p.add(pre + "ffn.W2",
                          fill(cfg.d_model, 4 * cfg.d_model,
                               1.0 / std::sqrt(4.0 * cfg.d_model)));
            idx.blocks.push_back(std::move(bi));
        }
    }
    idx.readout = p.add("readout", fill(cfg.n_out, cfg.d_model, bound_d));
    return idx;
}

struct MixerCacheAny {
    FwpCache fwp;
    AttnCache attn;
    RnnCache rnn;
    SsmCache ssm;
};

std::vector<Vec> mixer_forward(const ModelConfig& cfg, const ParamSet& p, const MixerIdx& idx,
                               const std::vector<Vec>& xs, MixerCacheAny& cache) {
    switch (cfg.mixer) {
        case MixerKind::Fwp: return fwp_forward(cfg, p, idx.fwp, xs, cache.fwp);
        case MixerKind::SoftmaxAttention: return attn_forward(cfg, p, idx.fwp, xs, cache.attn);
        case MixerKind::Rnn: return rnn_mixer_forward(cfg, p, idx.Wr, idx.Wi, xs, cache.rnn);
        case MixerKind::SsmCell: return ssm_mixer_forward(cfg, p, idx.Wr, idx.Wi, xs, cache.ssm);
    }
    throw ConfigError("mixer_forward: unknown mixer");
}

std::vector<Vec> mixer_backward(const ModelConfig& cfg, ParamSet& p, const MixerIdx& idx,
                                MixerCacheAny& cache, const std::vector<Vec>& dys) {
    switch (cfg.mixer) {
        case MixerKind::Fwp: return fwp_backward(cfg, p, idx.fwp, cache.fwp, dys);
        case MixerKind::SoftmaxAttention: return attn_backward(cfg, p, idx.fwp, cache.attn, dys);
        case MixerKind::Rnn: return rnn_mixer_backward(cfg, p, idx.Wr, idx.Wi, cache.rnn, dys);
        case MixerKind::SsmCell: return ssm_mixer_backward(cfg, p, idx.Wr, idx.Wi, cache.ssm, dys);
    }
    throw ConfigError("mixer_backward: unknown mixer");
}

struct BlockCache {
    LnCache ln1, ln2;
    FfnCache ffn;
    MixerCacheAny mix;
};

struct ForwardCache {
    std::vector<Vec> embedded;
    std::vector<BlockCache> blocks;
    MixerCacheAny bare;
    std::vector<Vec> hidden;  // final pre-readout states
};

std::vector<Vec> full_forward(const Model& m, const ModelIdx& idx, const std::vector<Vec>& xs,
                              ForwardCache& cache) {
    const ParamSet& p = m.params;
    std::vector<Vec> h;
    h.reserve(xs.size());
    for (const Vec& x : xs) h.push_back(matvec(p.values[idx.emb], x));
    cache.embedded = h;

    if (m.cfg.n_blocks == 0) {
        h = mixer_forward(m.cfg, p, idx.bare, h, cache.bare);
    } else {
        cache.blocks.resize(idx.blocks.size());
        for (size_t b = 0; b < idx.blocks.size(); ++b) {
            const auto& bi = idx.blocks[b];
            BlockCache& bc = cache.blocks[b];
            const std::vector<Vec> u1 =
                ln_forward(p.values[bi.ln1], h, m.cfg.ln_eps, bc.ln1);
            const std::vector<Vec> mixed = mixer_forward(m.cfg, p, bi.mix, u1, bc.mix);
            for (size_t t = 0; t < h.size(); ++t) h[t] = add(h[t], mixed[t]);
            const std::vector<Vec> u2 =
                ln_forward(p.values[bi.ln2], h, m.cfg.ln_eps, bc.ln2);
            const std::vector<Vec> f =
                ffn_forward(p.values[bi.W1], p.values[bi.W2], u2, bc.ffn);
            for (size_t t = 0; t < h.size(); ++t) h[t] = add(h[t], f[t]);
        }
    }
    cache.hidden = h;
    std::vector<Vec> logits;
    logits.reserve(h.size());
    for (const Vec& v : h) logits.push_back(matvec(p.values[idx.readout], v));
    return logits;
}

void full_backward(Model& m, const ModelIdx& idx, ForwardCache& cache,
                   const std::vector<Vec>& dlogits) {
    ParamSet& p = m.params;
    const int T = static_cast<int>(dlogits.size());
    std::vector<Vec> dh(static_cast<size_t>(T), Vec(m.cfg.d_model));
    Mat& g_ro = p.grads[idx.readout];
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < g_ro.rows; ++i)
            for (int j = 0; j < g_ro.cols; ++j) g_ro(i, j) += dlogits[t][i] * cache.hidden[t][j];
        dh[t] = matvec_transposed(p.values[idx.readout], dlogits[t]);
    }

    if (m.cfg.n_blocks == 0) {
        dh = mixer_backward(m.cfg, p, idx.bare, cache.bare, dh);
    } else {
        for (int b = static_cast<int>(idx.blocks.size()) - 1; b >= 0; --b) {
            const auto& bi = idx.blocks[b];
            BlockCache& bc = cache.blocks[b];
            // out = h + ffn(ln2(h))
            std::vector<Vec> du2 =
                ffn_backward(p.values[bi.W1], p.values[bi.W2], p.grads[bi.W1], p.grads[bi.W2],
                             bc.ffn, dh);
            std::vector<Vec> dmid = ln_backward(p.values[bi.ln2], p.grads[bi.ln2], bc.ln2, du2);
            for (int t = 0; t < T; ++t) dmid[t] = add(dmid[t], dh[t]);
            // mid = x + mixer(ln1(x))
            std::vector<Vec> du1 = mixer_backward(m.cfg, p, bi.mix, bc.mix, dmid);
            std::vector<Vec> dx = ln_backward(p.values[bi.ln1], p.grads[bi.ln1], bc.ln1, du1);
            for (int t = 0; t < T; ++t) dx[t] = add(dx[t], dmid[t]);
            dh = std::move(dx);
        }
    }

    // hand the embedded-stream grads back through the cache; the caller pairs
    // them with the raw inputs to finish the embedding gradient
    cache.embedded = std::move(dh);
}

double loss_and_dlogits(const LossSpec& loss, const std::vector<Vec>& logits,
                        std::vector<Vec>& dlogits) {
    dlogits.assign(logits.size(), Vec());
    for (size_t t = 0; t < logits.size(); ++t) dlogits[t] = Vec(logits[t].dim());
    if (loss.positions.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(loss.positions.size());
    double total = 0.0;
    for (size_t i = 0; i < loss.positions.size(); ++i) {
        const int t = loss.positions[i];
        require(t >= 0 && t < static_cast<int>(logits.size()), "loss: position out of range");
        if (loss.kind == LossSpec::Kind::CrossEntropy) {
            const int label = loss.labels[i];
            const Vec probs = softmax(logits[static_cast<size_t>(t)]);
            total += -std::log(std::max(probs[label], 1e-300)) * inv_n;
            for (int c = 0; c < probs.dim(); ++c)
                dlogits[static_cast<size_t>(t)][c] +=
                    (probs[c] - (c == label ? 1.0 : 0.0)) * inv_n;
        } else {
            const Vec& target = loss.targets[i];
            const Vec diff = sub(logits[static_cast<size_t>(t)], target);
            total += 0.5 * dot(diff, diff) * inv_n;
            for (int c = 0; c < diff.dim(); ++c)
                dlogits[static_cast<size_t>(t)][c] += diff[c] * inv_n;
        }
    }
    return total;
}

}  // namespace

LossSpec final_step_label(int seq_len, int label) {
    LossSpec spec;
    spec.kind = LossSpec::Kind::CrossEntropy;
    spec.positions = {seq_len - 1};
    spec.labels = {label};
    return spec;
}

Model build_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    ParamSet p;
    build_index(cfg, p, seed);
    m.params = std::move(p);
    return m;
}

std::vector<Vec> model_forward(const Model& m, const std::vector<Vec>& xs) {
    ParamSet tmp;
    const ModelIdx idx = build_index(m.cfg, tmp, 0);
    ForwardCache cache;
    return full_forward(m, idx, xs, cache);
}

double model_forward_backward(Model& m, const std::vector<Vec>& xs, const LossSpec& loss,
                              std::vector<Vec>* logits_out) {
    ParamSet tmp;
    const ModelIdx idx = build_index(m.cfg, tmp, 0);
    ForwardCache cache;
    const std::vector<Vec> raw_inputs = xs;
    const std::vector<Vec> logits = full_forward(m, idx, xs, cache);
    if (logits_out) *logits_out = logits;
    std::vector<Vec> dlogits;
    const double total = loss_and_dlogits(loss, logits, dlogits);
    full_backward(m, idx, cache, dlogits);
    // embedding grads from the returned input-stream grads
    const std::vector<Vec>& d_emb_out = cache.embedded;
    Mat& g_emb = m.params.grads[idx.emb];
    const Mat& emb = m.params.values[idx.emb];
    (void)emb;
    for (size_t t = 0; t < raw_inputs.size(); ++t)
        for (int i = 0; i < g_emb.rows; ++i)
            for (int j = 0; j < g_emb.cols; ++j)
                g_emb(i, j) += d_emb_out[t][i] * raw_inputs[t][j];
    return total;
}

double model_loss(const Model& m, const std::vector<Vec>& xs, const LossSpec& loss) {
    ParamSet tmp;
    const ModelIdx idx = build_index(m.cfg, tmp, 0);
    ForwardCache cache;
    const std::vector<Vec> logits = full_forward(m, idx, xs, cache);
    std::vector<Vec> dlogits;
    return loss_and_dlogits(loss, logits, dlogits);
}

double finite_diff_check(Model& m, const std::vector<Vec>& xs, const LossSpec& loss,
                         double eps) {
    if (eps <= 0.0) throw ConfigError("finite_diff_check: eps must be positive");
    m.params.zero_grads();
    model_forward_backward(m, xs, loss);
    // Normwise relative error: worst entry deviation over the gradient's own
    // scale. A componentwise ratio would be dominated by rounding noise on
    // entries whose true gradient happens to sit near zero.
    double max_dev = 0.0, scale = 0.0;
    for (size_t pi = 0; pi < m.params.values.size(); ++pi) {
        Mat& W = m.params.values[pi];
        const Mat& G = m.params.grads[pi];
        for (size_t e = 0; e < W.a.size(); ++e) {
            const double w0 = W.a[e];
            W.a[e] = w0 + eps;
            const double lp = model_loss(m, xs, loss);
            W.a[e] = w0 - eps;
            const double lm = model_loss(m, xs, loss);
            W.a[e] = w0;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double mag = std::fabs(G.a[e]) + std::fabs(numeric);
            if (mag <= 1e-12) continue;
            max_dev = std::max(max_dev, std::fabs(G.a[e] - numeric));
            scale = std::max(scale, mag);
        }
    }
    return scale > 0.0 ? max_dev / scale : 0.0;
}

AdamState make_adam(const ParamSet& params, double lr) {
    AdamState st;
    st.lr = lr;
    for (const Mat& v : params.values) {
        st.m1.emplace_back(v.rows, v.cols);
        st.m2.emplace_back(v.rows, v.cols);
    }
    return st;
}

void adam_step(ParamSet& params, AdamState& state) {
    require(state.m1.size() == params.values.size(), "adam_step: moment/param count mismatch");
    ++state.step;
    double scale_grad = 1.0;
    if (state.clip_norm > 0.0) {
        double sq = 0.0;
        for (const Mat& g : params.grads)
            for (double v : g.a) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > state.clip_norm) scale_grad = state.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.values.size(); ++pi) {
        Mat& w = params.values[pi];
        const Mat& g = params.grads[pi];
        Mat& m1 = state.m1[pi];
        Mat& m2 = state.m2[pi];
        for (size_t e = 0; e < w.a.size(); ++e) {
            const double grad = g.a[e] * scale_grad;
            m1.a[e] = state.beta1 * m1.a[e] + (1.0 - state.beta1) * grad;
            m2.a[e] = state.beta2 * m2.a[e] + (1.0 - state.beta2) * grad * grad;
            const double mhat = m1.a[e] / bc1;
            const double vhat = m2.a[e] / bc2;
            w.a[e] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace fwplab
