#include <gtest/gtest.h>

#include <cmath>

#include "loom/harness.hpp"
#include "loom/numerics.hpp"

using namespace loom;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.unit() * 4.0 - 2.0;
    return m;
}

void expect_row_stochastic(const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            EXPECT_GE(m(r, c), 0.0);
            EXPECT_LE(m(r, c), 1.0);
            s += m(r, c);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

}  // namespace

TEST(Relu, ClampsNegatives) {
    Matrix m{{-1.0, 0.0, 2.0}};
    EXPECT_EQ(relu(m), (Matrix{{0.0, 0.0, 2.0}}));
}

TEST(Relu, ZeroAndNonnegativeAreFixedPoints) {
    Matrix z(3, 4);
    EXPECT_EQ(relu(z), z);
    Matrix p{{0.5, 1.0}, {3.0, 0.0}};
    EXPECT_EQ(relu(p), p);
}

TEST(Relu, Idempotent) {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        Matrix m = random_matrix(rng, 4, 5);
        EXPECT_EQ(relu(relu(m)), relu(m));
    }
}

TEST(Hardmax, UniqueArgmax) { EXPECT_EQ(hardmax_rows(Matrix{{1.0, 3.0, 2.0}}), (Matrix{{0.0, 1.0, 0.0}})); }

TEST(Hardmax, TiesAreAveraged) { EXPECT_EQ(hardmax_rows(Matrix{{2.0, 2.0, 1.0}}), (Matrix{{0.5, 0.5, 0.0}})); }

TEST(Hardmax, SingleColumn) { EXPECT_EQ(hardmax_rows(Matrix{{5.0}}), (Matrix{{1.0}})); }

TEST(Hardmax, RowStochasticAndShiftScaleInvariant) {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        Matrix m = random_matrix(rng, 3, 6);
        Matrix h = hardmax_rows(m);
        expect_row_stochastic(h);
        Matrix shifted = m, scaled = m;
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) {
                shifted(r, c) += 3.0;
                scaled(r, c) *= 2.5;
            }
        EXPECT_EQ(hardmax_rows(shifted), h);
        EXPECT_EQ(hardmax_rows(scaled), h);
    }
}

TEST(Softmax, Symmetric) { EXPECT_EQ(softmax_rows(Matrix{{0.0, 0.0}}), (Matrix{{0.5, 0.5}})); }

TEST(Softmax, LargeGap) {
    Matrix s = softmax_rows(Matrix{{0.0, 40.0}});
    EXPECT_NEAR(s(0, 0), std::exp(-40.0) / (1.0 + std::exp(-40.0)), 1e-30);
    EXPECT_NEAR(s(0, 1), 1.0, 1e-15);
}

TEST(Softmax, RowStochastic) {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) expect_row_stochastic(softmax_rows(random_matrix(rng, 4, 7)));
}

TEST(Softmax, ApproachesHardmaxAtLowTemperature) {
    Rng rng(4);
    const double T = 1e-7;
    int checked = 0;
    while (checked < 200) {
        Matrix m = random_matrix(rng, 1, 6);
        std::vector<double> v(m.row(0), m.row(0) + 6);
        std::sort(v.begin(), v.end());
        if (v[5] - v[4] < 1e-3) continue;
        Matrix scaled = m;
        for (std::size_t c = 0; c < 6; ++c) scaled(0, c) /= T;
        Matrix s = softmax_rows(scaled), h = hardmax_rows(m);
        for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(s(0, c), h(0, c), 1e-9);
        ++checked;
    }
}

TEST(Matmul, Associative) {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        Matrix a = random_matrix(rng, 5, 5), b = random_matrix(rng, 5, 5), c = random_matrix(rng, 5, 5);
        Matrix l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
        for (std::size_t x = 0; x < 5; ++x)
            for (std::size_t y = 0; y < 5; ++y) EXPECT_NEAR(l(x, y), r(x, y), 1e-10);
    }
}

TEST(Matmul, ShapeMismatchThrows) { EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError); }

TEST(ExactSum, CorrectlyRounded) {
    ExactSum s;
    s.add(1e100);
    s.add(1.0);
    s.add(-1e100);
    EXPECT_EQ(s.value(), 1.0);
    ExactSum p;
    const double a = 1.0 + 0x1p-30;
    p.add_product(a, a);
    p.add(-1.0);
    EXPECT_EQ(p.value(), 0x1p-29 + 0x1p-60);
}

TEST(ExactSum, OrderIndependent) {
    Rng rng(6);
    std::vector<double> v;
    for (int i = 0; i < 50; ++i) v.push_back((rng.unit() - 0.5) * std::pow(10.0, static_cast<double>(rng.range(-8, 8))));
    ExactSum a, b;
    for (double x : v) a.add(x);
    for (auto it = v.rbegin(); it != v.rend(); ++it) b.add(*it);
    EXPECT_EQ(a.value(), b.value());
}
