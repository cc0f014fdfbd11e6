#include "fwplab/attention.hpp"

#include <cmath>

#ifdef FWPLAB_OPENMP
#include <omp.h>
#endif

namespace fwplab {

namespace {

Vec column(const Mat& m, int j) {
    Vec out(m.rows);
    for (int i = 0; i < m.rows; ++i) out[i] = m(i, j);
    return out;
}

}  // namespace

void KvCache::append(const Vec& k, const Vec& v) {
    require(k.dim() == K.rows, "KvCache: key dim mismatch");
    require(v.dim() == V.rows, "KvCache: value dim mismatch");
    Mat K2(K.rows, K.cols + 1);
    Mat V2(V.rows, V.cols + 1);
    for (int i = 0; i < K.rows; ++i) {
        for (int j = 0; j < K.cols; ++j) K2(i, j) = K(i, j);
        K2(i, K.cols) = k[i];
    }
    for (int i = 0; i < V.rows; ++i) {
        for (int j = 0; j < V.cols; ++j) V2(i, j) = V(i, j);
        V2(i, V.cols) = v[i];
    }
    K = std::move(K2);
    V = std::move(V2);
}

Vec softmax_attention_step(KvCache& cache, const Vec& q, const Vec& k, const Vec& v) {
    cache.append(k, v);
    const Vec scores = matvec_transposed(cache.K, q);  // K_t^T q, dim t
    const Vec alpha = softmax(scores);
    return matvec(cache.V, alpha);
}

Mat softmax_attention_parallel(const Mat& Q, const Mat& K, const Mat& V) {
    require(Q.rows == K.rows, "softmax_attention_parallel: key dims differ");
    require(Q.cols == K.cols && K.cols == V.cols, "softmax_attention_parallel: lengths differ");
    const int T = Q.cols;
    Mat Y(V.rows, T);
    // Independent over query positions; each column is computed serially so the
    // result does not depend on thread count.
#ifdef FWPLAB_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int t = 0; t < T; ++t) {
        Vec scores(T);
        for (int tau = 0; tau < T; ++tau) {
            double s = 0.0;
            for (int i = 0; i < K.rows; ++i) s += K(i, tau) * Q(i, t);
            scores[tau] = (tau <= t) ? s : kMaskNegInf;
        }
        const Vec alpha = softmax(scores);
        for (int i = 0; i < V.rows; ++i) {
            double y = 0.0;
            for (int tau = 0; tau <= t; ++tau) y += V(i, tau) * alpha[tau];
            Y(i, t) = y;
        }
    }
    return Y;
}

Mat nosoftmax_attention(const Mat& Q, const Mat& K, const Mat& V) {
    require(Q.rows == K.rows, "nosoftmax_attention: key dims differ");
    require(Q.cols == K.cols && K.cols == V.cols, "nosoftmax_attention: lengths differ");
    const int T = Q.cols;
    Mat Y(V.rows, T);
#ifdef FWPLAB_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int t = 0; t < T; ++t) {
        Vec scores(T);
        for (int tau = 0; tau <= t; ++tau) {
            double s = 0.0;
            for (int i = 0; i < K.rows; ++i) s += K(i, tau) * Q(i, t);
            scores[tau] = s;
        }
        for (int i = 0; i < V.rows; ++i) {
            double y = 0.0;
            for (int tau = 0; tau <= t; ++tau) y += V(i, tau) * scores[tau];
            Y(i, t) = y;
        }
    }
    return Y;
}

Mat linearized_attention(const Mat& Q, const Mat& K, const Mat& V,
                         const std::function<Vec(const Vec&)>& phi) {
    require(Q.rows == K.rows, "linearized_attention: key dims differ");
    require(Q.cols == K.cols && K.cols == V.cols, "linearized_attention: lengths differ");
    const int T = Q.cols;
    Mat Y(V.rows, T);
    std::vector<Vec> pk(T);
    for (int t = 0; t < T; ++t) pk[t] = phi(column(K, t));
    for (int t = 0; t < T; ++t) {
        const Vec pq = phi(column(Q, t));
        Vec weights(t + 1);
        double denom = 0.0;
        for (int tau = 0; tau <= t; ++tau) {
            weights[tau] = dot(pk[tau], pq);
            denom += weights[tau];
        }
        if (denom == 0.0)
            throw NumericError("linearized_attention: zero denominator at step " +
                               std::to_string(t + 1));
        for (int i = 0; i < V.rows; ++i) {
            double y = 0.0;
            for (int tau = 0; tau <= t; ++tau) y += V(i, tau) * (weights[tau] / denom);
            Y(i, t) = y;
        }
    }
    return Y;
}

}  // namespace fwplab
