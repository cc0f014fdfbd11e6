#include "fwplab/chunkwise.hpp"

#include <cmath>

#ifdef FWPLAB_OPENMP
#include <omp.h>
#endif

namespace fwplab {

std::pair<Mat, Mat> chunk_forward_additive(const Mat& Q, const Mat& K, const Mat& V,
                                           const Mat& W_in) {
    require(Q.rows == K.rows, "chunk_forward_additive: key dims differ");
    require(Q.cols == K.cols && K.cols == V.cols, "chunk_forward_additive: chunk widths differ");
    require(W_in.rows == V.rows && W_in.cols == K.rows, "chunk_forward_additive: W_in shape");
    const int s = Q.cols;

    Mat scores = matmul(transpose(K), Q);  // s x s
    for (int tau = 0; tau < s; ++tau)
        for (int j = 0; j < tau; ++j) scores(tau, j) = 0.0;  // strictly future pairs

    const Mat inter = matmul(W_in, Q);
    const Mat intra = matmul(V, scores);
    const Mat Y = add(inter, intra);
    const Mat W_out = add(W_in, matmul(V, transpose(K)));
    return {Y, W_out};
}

std::pair<Mat, Mat> chunk_forward_decay(const Mat& Q, const Mat& K, const Mat& V,
                                        const std::vector<Vec>& row_decay,
                                        const std::vector<double>& out_scale,
                                        const Mat& W_in) {
    require(Q.rows == K.rows, "chunk_forward_decay: key dims differ");
    require(Q.cols == K.cols && K.cols == V.cols, "chunk_forward_decay: chunk widths differ");
    require(W_in.rows == V.rows && W_in.cols == K.rows, "chunk_forward_decay: W_in shape");
    const int s = Q.cols;
    const int d_out = V.rows;
    const int d_key = K.rows;
    require(static_cast<int>(row_decay.size()) == s && static_cast<int>(out_scale.size()) == s,
            "chunk_forward_decay: per-step decay lists must match chunk width");

    double min_decay = 1.0;
    for (const Vec& d : row_decay) {
        require(d.dim() == d_out, "chunk_forward_decay: row decay dim");
        for (double x : d.a) min_decay = std::min(min_decay, x);
    }
    if (min_decay <= 0.0) throw NumericError("chunk_forward_decay: non-positive decay");
    const bool log_space = min_decay < 1e-6;

    // cum[i][j] = product (or log-sum) of decays at steps 0..j for row i
    Mat cum(d_out, s);
    for (int i = 0; i < d_out; ++i) {
        double acc = log_space ? 0.0 : 1.0;
        for (int j = 0; j < s; ++j) {
            const double d = row_decay[static_cast<size_t>(j)][i];
            acc = log_space ? acc + std::log(d) : acc * d;
            cum(i, j) = acc;
        }
    }
    auto ratio = [&](int i, int from, int to) {
        // product of decays over steps (from, to]
        const double a = cum(i, to), b = cum(i, from);
        return log_space ? std::exp(a - b) : a / b;
    };
    auto prefix = [&](int i, int to) {
        // product of decays over steps [0, to]
        return log_space ? std::exp(cum(i, to)) : cum(i, to);
    };

    const Mat scores = matmul(transpose(K), Q);  // s x s, scores(tau, j) = k_tau . q_j
    const Mat inter = matmul(W_in, Q);

    Mat Y(d_out, s);
#ifdef FWPLAB_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < d_out; ++i) {
        for (int j = 0; j < s; ++j) {
            double y = prefix(i, j) * inter(i, j);
            for (int tau = 0; tau <= j; ++tau)
                y += ratio(i, tau, j) * out_scale[static_cast<size_t>(tau)] * V(i, tau) *
                     scores(tau, j);
            Y(i, j) = y;
        }
    }

    Mat W_out(d_out, d_key);
#ifdef FWPLAB_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < d_out; ++i) {
        for (int c = 0; c < d_key; ++c) {
            double w = prefix(i, s - 1) * W_in(i, c);
            for (int tau = 0; tau < s; ++tau)
                w += ratio(i, tau, s - 1) * out_scale[static_cast<size_t>(tau)] * V(i, tau) *
                     K(c, tau);
            W_out(i, c) = w;
        }
    }
    return {Y, W_out};
}

bool rule_supports_chunkwise(RuleKind kind) {
    switch (kind) {
        case RuleKind::Additive:
        case RuleKind::RetNet:
        case RuleKind::Mamba2:
        case RuleKind::GatedRFA:
        case RuleKind::MLSTM:
        case RuleKind::GLA:
            return true;
        default:
            return false;
    }
}

std::vector<Vec> chunkwise_layer_forward(const LayerConfig& cfg, const SlowWeights& slow,
                                         const std::vector<Vec>& xs, int chunk_size) {
    cfg.validate();
    if (!rule_supports_chunkwise(cfg.rule.kind))
        throw ConfigError("chunkwise: rule '" + rule_name(cfg.rule.kind) +
                          "' is recurrent-only");
    const int T = static_cast<int>(xs.size());
    const ChunkPlan plan(chunk_size, T);
    const int H = cfg.heads;
    const int hk = cfg.head_key();
    const int ho = cfg.head_out();

    // Per-head phi-mapped streams.
    std::vector<std::vector<MappedStep>> mapped(static_cast<size_t>(H));
    for (auto& m : mapped) m.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        const auto proj = project(slow, cfg, xs[static_cast<size_t>(t)]);
        for (int h = 0; h < H; ++h)
            mapped[static_cast<size_t>(h)].push_back(map_head_inputs(cfg, proj[static_cast<size_t>(h)]));
    }

    std::vector<Vec> ys(static_cast<size_t>(T), Vec(cfg.d_out));
    for (int h = 0; h < H; ++h) {
        const auto& ms = mapped[static_cast<size_t>(h)];
        Mat W(ho, hk);
        for (int c = 0; c < plan.num_chunks(); ++c) {
            const int begin = c * plan.S;
            const int s = std::min(plan.S, T - begin);
            Mat Q(hk, s), K(hk, s), V(ho, s);
            std::vector<Vec> row_decay;
            std::vector<double> out_scale;
            row_decay.reserve(static_cast<size_t>(s));
            out_scale.reserve(static_cast<size_t>(s));
            for (int j = 0; j < s; ++j) {
                const MappedStep& m = ms[static_cast<size_t>(begin + j)];
                for (int i = 0; i < hk; ++i) {
                    Q(i, j) = m.q_feat[i];
                    K(i, j) = m.s.k_feat[i];
                }
                for (int i = 0; i < ho; ++i) V(i, j) = m.s.v[i];
                double decay = 1.0, u = 1.0;
                switch (cfg.rule.kind) {
                    case RuleKind::Additive: break;
                    case RuleKind::RetNet: decay = cfg.retnet_lambda(h); break;
                    case RuleKind::Mamba2: decay = m.s.lam; break;
                    case RuleKind::GatedRFA: decay = m.s.lam; u = 1.0 - m.s.lam; break;
                    case RuleKind::MLSTM: decay = m.s.lam; u = m.s.eta; break;
                    case RuleKind::GLA: break;
                    default: throw ConfigError("chunkwise: unsupported rule");
                }
                if (cfg.rule.kind == RuleKind::GLA) {
                    row_decay.push_back(m.s.a);
                } else {
                    Vec d(ho);
                    for (int i = 0; i < ho; ++i) d[i] = decay;
                    row_decay.push_back(std::move(d));
                }
                out_scale.push_back(u);
            }
            auto [Yc, W_out] = cfg.rule.kind == RuleKind::Additive
                                   ? chunk_forward_additive(Q, K, V, W)
                                   : chunk_forward_decay(Q, K, V, row_decay, out_scale, W);
            W = std::move(W_out);
            for (int j = 0; j < s; ++j)
                for (int i = 0; i < ho; ++i) ys[static_cast<size_t>(begin + j)][h * ho + i] = Yc(i, j);
        }
    }
    return ys;
}

}  // namespace fwplab
