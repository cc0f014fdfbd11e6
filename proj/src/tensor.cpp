#include "fwplab/tensor.hpp"

#include <algorithm>

#ifdef FWPLAB_OPENMP
#include <omp.h>
#endif

namespace fwplab {

Mat::Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
    require(a.size() == static_cast<size_t>(r) * c, "Mat: data length != rows*cols");
}

Mat zeros(int rows, int cols) { return Mat(rows, cols); }

Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat matmul_serial(const Mat& x, const Mat& y) {
    require(x.cols == y.rows, "matmul: inner dimensions differ");
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
        }
    }
    return out;
}

// Parallel over output rows: each row is accumulated by one thread in the
// same order as the serial kernel, so results are bit-identical.
Mat matmul(const Mat& x, const Mat& y) {
    require(x.cols == y.rows, "matmul: inner dimensions differ");
    Mat out(x.rows, y.cols);
#ifdef FWPLAB_OPENMP
    const long long work = 1LL * x.rows * x.cols * y.cols;
    if (work > 1 << 16) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < x.rows; ++i) {
            for (int k = 0; k < x.cols; ++k) {
                const double xv = x(i, k);
                if (xv == 0.0) continue;
                for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
            }
        }
        return out;
    }
#endif
    for (int i = 0; i < x.rows; ++i) {
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
        }
    }
    return out;
}

Mat outer(const Vec& u, const Vec& v) {
    Mat out(u.dim(), v.dim());
    for (int i = 0; i < u.dim(); ++i)
        for (int j = 0; j < v.dim(); ++j) out(i, j) = u[i] * v[j];
    return out;
}

Mat transpose(const Mat& x) {
    Mat out(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    return out;
}

Mat add(const Mat& x, const Mat& y) {
    require(x.same_shape(y), "add: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.a[i];
    return out;
}

Mat sub(const Mat& x, const Mat& y) {
    require(x.same_shape(y), "sub: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] -= y.a[i];
    return out;
}

Mat scale(const Mat& x, double s) {
    Mat out = x;
    for (double& v : out.a) v *= s;
    return out;
}

Mat hadamard(const Mat& x, const Mat& y) {
    require(x.same_shape(y), "hadamard: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= y.a[i];
    return out;
}

Vec matvec(const Mat& x, const Vec& v) {
    require(x.cols == v.dim(), "matvec: dimension mismatch");
    Vec out(x.rows);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += x(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

Vec matvec_transposed(const Mat& x, const Vec& v) {
    require(x.rows == v.dim(), "matvec_transposed: dimension mismatch");
    Vec out(x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        for (int j = 0; j < x.cols; ++j) out[j] += x(i, j) * vi;
    }
    return out;
}

Vec add(const Vec& u, const Vec& v) {
    require(u.dim() == v.dim(), "add(vec): dimension mismatch");
    Vec out = u;
    for (int i = 0; i < v.dim(); ++i) out[i] += v[i];
    return out;
}

Vec sub(const Vec& u, const Vec& v) {
    require(u.dim() == v.dim(), "sub(vec): dimension mismatch");
    Vec out = u;
    for (int i = 0; i < v.dim(); ++i) out[i] -= v[i];
    return out;
}

Vec scale(const Vec& u, double s) {
    Vec out = u;
    for (double& v : out.a) v *= s;
    return out;
}

Vec hadamard(const Vec& u, const Vec& v) {
    require(u.dim() == v.dim(), "hadamard(vec): dimension mismatch");
    Vec out = u;
    for (int i = 0; i < v.dim(); ++i) out[i] *= v[i];
    return out;
}

double dot(const Vec& u, const Vec& v) {
    require(u.dim() == v.dim(), "dot: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < u.dim(); ++i) s += u[i] * v[i];
    return s;
}

Vec softmax(const Vec& v) {
    Vec out(v.dim());
    if (v.dim() == 0) return out;
    double mx = v[0];
    for (int i = 1; i < v.dim(); ++i) mx = std::max(mx, v[i]);
    double sum = 0.0;
    for (int i = 0; i < v.dim(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < v.dim(); ++i) out[i] /= sum;
    return out;
}

Vec l2_normalize(const Vec& v) {
    const double n = l2_norm(v);
    if (n == 0.0) return v;
    return scale(v, 1.0 / n);
}

double max_abs_diff(const Mat& x, const Mat& y) {
    require(x.same_shape(y), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < x.a.size(); ++i) m = std::max(m, std::fabs(x.a[i] - y.a[i]));
    return m;
}

double max_abs_diff(const Vec& u, const Vec& v) {
    require(u.dim() == v.dim(), "max_abs_diff: dimension mismatch");
    double m = 0.0;
    for (int i = 0; i < u.dim(); ++i) m = std::max(m, std::fabs(u[i] - v[i]));
    return m;
}

double frobenius_norm(const Mat& x) {
    double s = 0.0;
    for (double v : x.a) s += v * v;
    return std::sqrt(s);
}

double l2_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v.a) s += x * x;
    return std::sqrt(s);
}

bool all_finite(const Mat& x) {
    for (double v : x.a)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const Vec& v) {
    for (double x : v.a)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace fwplab
