#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fwplab {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major matrix, double precision. Rank <= 2 is all we ever need.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> data);

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

struct Vec {
    std::vector<double> a;

    Vec() = default;
    explicit Vec(int n) : a(static_cast<size_t>(n), 0.0) {}
    Vec(std::initializer_list<double> init) : a(init) {}
    explicit Vec(std::vector<double> data) : a(std::move(data)) {}

    int dim() const { return static_cast<int>(a.size()); }
    double& operator[](int i) { return a[static_cast<size_t>(i)]; }
    double operator[](int i) const { return a[static_cast<size_t>(i)]; }
};

// --- construction helpers ---
Mat zeros(int rows, int cols);
Mat identity(int n);

// --- matrix/vector algebra, deterministic left-to-right accumulation ---
Mat matmul(const Mat& x, const Mat& y);
Mat matmul_serial(const Mat& x, const Mat& y);  // reference kernel, never parallel
Mat outer(const Vec& u, const Vec& v);
Mat transpose(const Mat& x);
Mat add(const Mat& x, const Mat& y);
Mat sub(const Mat& x, const Mat& y);
Mat scale(const Mat& x, double s);
Mat hadamard(const Mat& x, const Mat& y);
Vec matvec(const Mat& x, const Vec& v);
Vec matvec_transposed(const Mat& x, const Vec& v);  // x^T v without forming x^T

Vec add(const Vec& u, const Vec& v);
Vec sub(const Vec& u, const Vec& v);
Vec scale(const Vec& u, double s);
Vec hadamard(const Vec& u, const Vec& v);
double dot(const Vec& u, const Vec& v);

Vec softmax(const Vec& v);
Vec l2_normalize(const Vec& v);  // zero vector maps to zero vector

double max_abs_diff(const Mat& x, const Mat& y);
double max_abs_diff(const Vec& u, const Vec& v);
double frobenius_norm(const Mat& x);
double l2_norm(const Vec& v);

bool all_finite(const Mat& x);
bool all_finite(const Vec& v);

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ShapeError(what);
}

}  // namespace fwplab
