#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "fwplab/tensor.hpp"

using namespace fwplab;

namespace {

Mat random_mat(int r, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Mat m(r, c);
    for (double& v : m.a) v = dist(rng);
    return m;
}

// Independent triple-loop product, no blocking or reordering.
Mat matmul_oracle(const Mat& x, const Mat& y) {
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < y.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < x.cols; ++k) acc += x(i, k) * y(k, j);
            out(i, j) = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const Mat a = random_mat(7, 11, seed);
        const Mat b = random_mat(11, 4, seed + 100);
        CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) == 0.0);
    }
}

TEST_CASE("parallel matmul is bit-identical to the serial reference") {
    // large enough to cross the parallel threshold
    const Mat a = random_mat(96, 96, 1);
    const Mat b = random_mat(96, 96, 2);
    const Mat p = matmul(a, b);
    const Mat s = matmul_serial(a, b);
    REQUIRE(p.same_shape(s));
    for (size_t i = 0; i < p.a.size(); ++i) CHECK(p.a[i] == s.a[i]);
}

TEST_CASE("matmul associativity holds to rounding") {
    const Mat a = random_mat(6, 5, 3), b = random_mat(5, 7, 4), c = random_mat(7, 3, 5);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Mat(2, 3), Mat(4, 2)), ShapeError);
    CHECK_THROWS_AS(matvec(Mat(2, 3), Vec(2)), ShapeError);
}

TEST_CASE("softmax closed form") {
    const Vec y = softmax(Vec{0.0, std::log(3.0)});
    CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-14));

    SUBCASE("invariant to constant shift") {
        const Vec a = softmax(Vec{1.0, -2.0, 0.5});
        const Vec b = softmax(Vec{1.0 + 100.0, -2.0 + 100.0, 0.5 + 100.0});
        CHECK(max_abs_diff(a, b) < 1e-15);
    }
    SUBCASE("sums to one") {
        const Vec a = softmax(Vec{3.0, -1.0, 0.0, 7.0});
        double s = 0.0;
        for (int i = 0; i < a.dim(); ++i) s += a[i];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("outer, transpose, matvec_transposed agree with definitions") {
    const Vec u{1.0, 2.0};
    const Vec v{3.0, -4.0, 5.0};
    const Mat o = outer(u, v);
    CHECK(o.rows == 2);
    CHECK(o.cols == 3);
    CHECK(o(1, 2) == 10.0);
    const Mat t = transpose(o);
    CHECK(t(2, 1) == 10.0);
    const Vec w{1.0, 0.0};
    CHECK(max_abs_diff(matvec_transposed(o, w), matvec(t, w)) == 0.0);
}

TEST_CASE("l2_normalize maps zero to zero and unit-norms everything else") {
    CHECK(l2_norm(l2_normalize(Vec(4))) == 0.0);
    const Vec n = l2_normalize(Vec{3.0, 4.0});
    CHECK(l2_norm(n) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("identity and zeros") {
    const Mat I = identity(3);
    CHECK(I(1, 1) == 1.0);
    CHECK(I(0, 1) == 0.0);
    const Mat a = random_mat(3, 3, 9);
    CHECK(max_abs_diff(matmul(I, a), a) == 0.0);
    CHECK(frobenius_norm(zeros(5, 2)) == 0.0);
}

TEST_CASE("all_finite flags inf and nan") {
    Mat m(2, 2);
    CHECK(all_finite(m));
    m(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(m));
    Vec v(3);
    v[2] = std::nan("");
    CHECK_FALSE(all_finite(v));
}
