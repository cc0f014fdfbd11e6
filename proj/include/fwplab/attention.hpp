#pragma once

#include <functional>
#include <utility>

#include "fwplab/tensor.hpp"

namespace fwplab {

// Growing key/value memory; columns are time steps, initially empty.
struct KvCache {
    Mat K;  // d_key x t
    Mat V;  // d_out x t

    KvCache(int d_key, int d_out) : K(d_key, 0), V(d_out, 0) {}
    int steps() const { return K.cols; }
    void append(const Vec& k, const Vec& v);
};

// Causal mask for the softmax path: 0 on/below the diagonal (in time order),
// a large negative sentinel where position i attends to the future.
inline constexpr double kMaskNegInf = -1e30;

// Appends (k, v), returns y = V softmax(K^T q).
Vec softmax_attention_step(KvCache& cache, const Vec& q, const Vec& k, const Vec& v);

// Masked parallel form; Q, K are d_key x T, V is d_out x T.
Mat softmax_attention_parallel(const Mat& Q, const Mat& K, const Mat& V);

// Quadratic attention form with the softmax removed (causal).
Mat nosoftmax_attention(const Mat& Q, const Mat& K, const Mat& V);

// Normalized linearized attention; phi must have a positive co-domain on the
// inputs used, columns of Q/K are mapped through it here.
Mat linearized_attention(const Mat& Q, const Mat& K, const Mat& V,
                         const std::function<Vec(const Vec&)>& phi);

}  // namespace fwplab
