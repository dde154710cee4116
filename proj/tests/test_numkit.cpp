#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"

using namespace crovca;
using crovca::testing::random_matrix;
using crovca::testing::random_spd;

TEST(DenseMatrix, MatmulSmallExample) {
    const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
    const auto b = DenseMatrix::from_rows({{5, 6}, {7, 8}});
    EXPECT_EQ(matmul(a, b), DenseMatrix::from_rows({{19, 22}, {43, 50}}));
}

TEST(DenseMatrix, MatmulRejectsShapeMismatch) {
    EXPECT_THROW(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ShapeError);
}

TEST(DenseMatrix, TransposedProductsAgreeWithExplicitTranspose) {
    Rng rng(3);
    const auto a = random_matrix(5, 3, rng);
    const auto b = random_matrix(5, 4, rng);
    const auto c = random_matrix(4, 3, rng);
    EXPECT_EQ(matmul_tn(a, b), matmul(transpose(a), b));
    const auto nt = matmul_nt(a, c);
    const auto ref = matmul(a, transpose(c));
    for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.values()[i], ref.values()[i], 1e-12);
}

TEST(DenseMatrix, MatmulRowDoesNotDependOnBatch) {
    Rng rng(8);
    const auto x = random_matrix(9, 7, rng);
    const auto w = random_matrix(7, 5, rng);
    const auto full = matmul(x, w);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        DenseMatrix one(1, x.cols());
        std::copy(x.row(r).begin(), x.row(r).end(), one.row(0).begin());
        const auto single = matmul(one, w);
        for (std::size_t j = 0; j < w.cols(); ++j) EXPECT_EQ(single(0, j), full(r, j));
    }
}

TEST(Cholesky, LogdetMatchesEigenOracle) {
    Rng rng(11);
    for (std::size_t n : {1u, 2u, 5u, 16u, 33u, 64u}) {
        const auto m = random_spd(n, rng);
        EXPECT_NEAR(logdet_posdef(m), crovca::testing::logdet_by_eigen(m), 1e-8) << "n=" << n;
    }
}

TEST(Cholesky, InverseTimesMatrixIsIdentity) {
    Rng rng(12);
    const auto m = random_spd(12, rng);
    const auto p = matmul(spd_inverse(m), m);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(p(i, j), i == j ? 1.0 : 0.0, 1e-10);
}

TEST(Cholesky, RejectsIndefinite) {
    EXPECT_THROW(cholesky(DenseMatrix::from_rows({{1, 2}, {2, 1}})), NumericalError);
    EXPECT_THROW(cholesky(DenseMatrix(2, 3)), ShapeError);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 10000; ++i) {
        const auto x = a.next_u64();
        ASSERT_EQ(x, b.next_u64());
        differs = differs || x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, NormalMomentsAreRoughlyStandard) {
    Rng rng(5);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.03);
    EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Rng, UniformAndBelowStayInRange) {
    Rng rng(6);
    for (int i = 0; i < 5000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.below(7), 7u);
    }
}

TEST(Rng, ShuffleIsAPermutation) {
    Rng rng(9);
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(FiniteDiff, QuadraticIsExact) {
    const ScalarFunction f = [](std::span<const double> x) { return 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1]; };
    const std::vector<double> x{1.5, -0.5};
    const auto g = finite_diff_grad(f, x, 1e-3);
    EXPECT_NEAR(g[0], 6.0 * 1.5 - 0.5, 1e-9);
    EXPECT_NEAR(g[1], 1.5 - 2.0, 1e-9);
}

TEST(FiniteDiff, BadStepAndNonFiniteValues) {
    const ScalarFunction f = [](std::span<const double> x) { return x[0]; };
    const std::vector<double> x{1.0};
    EXPECT_THROW(finite_diff_grad(f, x, 0.0), ConfigError);
    const ScalarFunction g = [](std::span<const double> x) { return std::log(x[0]); };
    const std::vector<double> z{0.0};
    EXPECT_THROW(finite_diff_grad(g, z, 1e-3), NumericalError);
}
