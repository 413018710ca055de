#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "limuon/linalg.hpp"
#include "test_oracles.hpp"

using namespace limuon;
using limuon::testing::orthonormality_defect;
using limuon::testing::reconstruction_error;

namespace {

Matrix random_matrix(std::size_t m, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    return gaussian_matrix(m, n, rng);
}

}  // namespace

TEST(Matrix, RejectsBadShapesAndValues)
{
    EXPECT_THROW(Matrix(0, 3), dimension_error);
    EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), dimension_error);
    EXPECT_THROW(Matrix(1, 1, {std::nan("")}), std::invalid_argument);
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), dimension_error);
    EXPECT_THROW(Matrix(2, 2) + Matrix(2, 3), dimension_error);
}

TEST(Matrix, NormsAndProducts)
{
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::from_rows({{3, 4}})), 5.0);
    const Matrix a = random_matrix(4, 4, 9);
    EXPECT_EQ(matmul(Matrix::identity(4), a), a);

    // ⟨A,B⟩ as trace(AᵀB) against the entrywise sum.
    const Matrix b = random_matrix(4, 4, 10);
    const Matrix atb = matmul(a.transpose(), b);
    double trace = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        trace += atb(i, i);
    }
    EXPECT_NEAR(inner(a, b), trace, 1e-12);
    EXPECT_NEAR(frobenius_norm(matmul_tn(a, b) - atb), 0.0, 1e-12);
}

TEST(Gaussian, DeterministicAndShaped)
{
    Rng r1(42);
    Rng r2(42);
    EXPECT_EQ(gaussian_matrix(2, 2, r1), gaussian_matrix(2, 2, r2));

    Rng r3(7);
    const Matrix g = gaussian_matrix(3, 5, r3);
    EXPECT_EQ(g.rows(), 3u);
    EXPECT_EQ(g.cols(), 5u);
    EXPECT_TRUE(g.all_finite());
}

TEST(Gaussian, MomentsMatchStandardNormal)
{
    Rng rng(2024);
    const Matrix g = gaussian_matrix(1000, 1, rng);
    const auto d = g.data();
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 1000.0;
    double var = 0.0;
    for (double x : d) {
        var += (x - mean) * (x - mean);
    }
    var /= 999.0;
    EXPECT_GE(mean, -0.15);
    EXPECT_LE(mean, 0.15);
    EXPECT_GE(var, 0.8);
    EXPECT_LE(var, 1.2);
}

TEST(Qr, IdentityAndSingleColumn)
{
    const auto qi = qr_decompose(Matrix::identity(3));
    EXPECT_EQ(qi.q, Matrix::identity(3));
    EXPECT_EQ(qi.r, Matrix::identity(3));

    const auto qc = qr_decompose(Matrix::from_rows({{3}, {4}}));
    EXPECT_NEAR(qc.q(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(qc.q(1, 0), 0.8, 1e-15);
    EXPECT_NEAR(qc.r(0, 0), 5.0, 1e-15);
}

TEST(Qr, RandomReconstruction)
{
    const Matrix y = random_matrix(20, 5, 11);
    const auto qr = qr_decompose(y);
    EXPECT_LE(frobenius_norm(matmul(qr.q, qr.r) - y), 1e-8 * frobenius_norm(y));
    EXPECT_LE(orthonormality_defect(qr.q), 1e-10 * 5);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_GE(qr.r(i, i), 0.0);
        for (std::size_t j = 0; j < i; ++j) {
            EXPECT_EQ(qr.r(i, j), 0.0);
        }
    }
}

TEST(Qr, RankDeficientStillOrthonormal)
{
    Matrix y = random_matrix(6, 3, 12);
    for (std::size_t i = 0; i < 6; ++i) {
        y(i, 2) = y(i, 0);  // dependent column
    }
    const auto qr = qr_decompose(y);
    EXPECT_LE(orthonormality_defect(qr.q), 1e-10 * 3);
    EXPECT_LE(frobenius_norm(matmul(qr.q, qr.r) - y), 1e-12 * frobenius_norm(y));
}

TEST(Qr, RejectsWideInput) { EXPECT_THROW(qr_decompose(Matrix(2, 3)), dimension_error); }

TEST(Svd, DiagonalAndPermuted)
{
    const auto d = svd(Matrix::diagonal({3, 2}));
    EXPECT_DOUBLE_EQ(d.sigma[0], 3.0);
    EXPECT_DOUBLE_EQ(d.sigma[1], 2.0);
    EXPECT_NEAR(frobenius_norm(d.u - Matrix::identity(2)), 0.0, 1e-15);
    EXPECT_NEAR(frobenius_norm(d.v - Matrix::identity(2)), 0.0, 1e-15);

    const auto p = svd(Matrix::from_rows({{0, 2}, {1, 0}}));
    EXPECT_NEAR(p.sigma[0], 2.0, 1e-15);
    EXPECT_NEAR(p.sigma[1], 1.0, 1e-15);
}

TEST(Svd, MatchesGramEigenOracle)
{
    const Matrix a = random_matrix(8, 5, 13);
    const auto s = svd(a);
    EXPECT_LE(reconstruction_error(s.u, s.sigma, s.v, a), 1e-8);
    const auto expected = limuon::testing::singular_values_via_gram(a);
    ASSERT_EQ(expected.size(), s.sigma.size());
    for (std::size_t k = 0; k < expected.size(); ++k) {
        EXPECT_NEAR(s.sigma[k], expected[k], 1e-7);
    }
}

TEST(Svd, ZeroMatrix)
{
    const auto s = svd(Matrix(4, 3));
    for (double x : s.sigma) {
        EXPECT_EQ(x, 0.0);
    }
    EXPECT_LE(orthonormality_defect(s.u), 1e-12);
    EXPECT_LE(orthonormality_defect(s.v), 1e-12);
}

TEST(Svd, SignConventionAndDeterminism)
{
    const Matrix a = random_matrix(5, 7, 14);
    const auto s1 = svd(a);
    const auto s2 = svd(a);
    EXPECT_EQ(s1.u, s2.u);
    EXPECT_EQ(s1.v, s2.v);
    for (std::size_t j = 0; j < s1.u.cols(); ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < s1.u.rows(); ++i) {
            if (std::abs(s1.u(i, j)) > std::abs(best)) {
                best = s1.u(i, j);
            }
        }
        EXPECT_GT(best, 0.0);
    }
}

// Property sweep: ≥1000 seeded shapes up to 16×16, including rank-deficient ones.
TEST(Svd, PropertyReconstructionAndOrthonormality)
{
    Rng shapes(99);
    for (int trial = 0; trial < 1200; ++trial) {
        const std::size_t m = 1 + shapes.index(16);
        const std::size_t n = 1 + shapes.index(16);
        Matrix a = gaussian_matrix(m, n, shapes);
        if (trial % 5 == 0 && std::min(m, n) > 1) {
            // Force rank ≤ min(m,n)−1 by copying a column/row.
            if (n > 1) {
                for (std::size_t i = 0; i < m; ++i) {
                    a(i, n - 1) = 2.0 * a(i, 0);
                }
            }
        }
        const auto s = svd(a);
        const std::size_t k = std::min(m, n);
        ASSERT_EQ(s.sigma.size(), k);
        for (std::size_t j = 0; j < k; ++j) {
            ASSERT_GE(s.sigma[j], 0.0);
            if (j > 0) {
                ASSERT_LE(s.sigma[j], s.sigma[j - 1]);
            }
        }
        ASSERT_LE(orthonormality_defect(s.u), 1e-10 * static_cast<double>(k)) << m << "x" << n;
        ASSERT_LE(orthonormality_defect(s.v), 1e-10 * static_cast<double>(k)) << m << "x" << n;
        ASSERT_LE(reconstruction_error(s.u, s.sigma, s.v, a), 1e-8 * std::max(1.0, frobenius_norm(a)));
    }
}

TEST(OrthogonalFactor, SimpleCases)
{
    EXPECT_NEAR(frobenius_norm(orthogonal_factor(Matrix::diagonal({3, 2})) - Matrix::identity(2)), 0.0, 1e-15);
    const Matrix o = orthogonal_factor(Matrix::from_rows({{3}, {4}}));
    EXPECT_NEAR(o(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(o(1, 0), 0.8, 1e-15);
    EXPECT_EQ(orthogonal_factor(Matrix(3, 2)), Matrix(3, 2));
}

TEST(OrthogonalFactor, NuclearIdentityOnRandom)
{
    const Matrix a = random_matrix(6, 4, 15);
    const Matrix o = orthogonal_factor(a);
    EXPECT_LE(orthonormality_defect(o), 1e-8);
    const auto s = svd(a);
    const double nuc = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
    EXPECT_NEAR(inner(a, o), nuc, 1e-8);
}

TEST(OrthogonalFactor, WideInputGivesOrthonormalRows)
{
    const Matrix a = random_matrix(3, 7, 16);
    const Matrix o = orthogonal_factor(a);
    EXPECT_LE(orthonormality_defect(o.transpose()), 1e-8);
}

// ‖O‖_F² equals the numerical rank; ⟨A, O⟩ equals the nuclear norm.
TEST(OrthogonalFactor, PropertyRankAndNuclearIdentity)
{
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + rng.index(10);
        const std::size_t n = 1 + rng.index(10);
        const std::size_t rank = 1 + rng.index(std::min(m, n));
        std::vector<double> sv(rank);
        for (auto& x : sv) {
            x = 0.1 + 3.0 * rng.uniform();
        }
        const Matrix a = limuon::testing::with_singular_values(m, n, sv, rng);
        const Matrix o = orthogonal_factor(a);
        const double fro = frobenius_norm(o);
        const auto sigma = svd(a).sigma;
        EXPECT_NEAR(fro * fro, static_cast<double>(numerical_rank(sigma)), 1e-6);
        EXPECT_EQ(numerical_rank(sigma), rank);
        const double nuc = nuclear_norm(a);
        EXPECT_NEAR(inner(a, o), nuc, 1e-8 * (1.0 + nuc));
    }
}

// ⟨A, O⟩ ≤ ‖A‖_* for any orthogonal O of the right shape.
TEST(OrthogonalFactor, PropertyDualityBound)
{
    Rng rng(18);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 2 + rng.index(6);
        const std::size_t n = 2 + rng.index(6);
        const Matrix a = gaussian_matrix(m, n, rng);
        const double nuc = nuclear_norm(a);
        for (int k = 0; k < 100; ++k) {
            Matrix o = m >= n ? limuon::testing::random_orthonormal(m, n, rng)
                              : limuon::testing::random_orthonormal(n, m, rng).transpose();
            EXPECT_LE(inner(a, o), nuc + 1e-8);
        }
    }
}

TEST(NuclearNorm, Examples)
{
    EXPECT_DOUBLE_EQ(nuclear_norm(Matrix::diagonal({3, 2})), 5.0);
    EXPECT_EQ(nuclear_norm(Matrix(3, 3)), 0.0);

    const Matrix a = random_matrix(5, 3, 19);
    const double nuc = nuclear_norm(a);
    const auto s = svd(a);
    EXPECT_NEAR(nuc, std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0), 1e-14);
    EXPECT_GE(nuc, frobenius_norm(a));
    EXPECT_LE(nuc, std::sqrt(3.0) * frobenius_norm(a));
}

TEST(NewtonSchulz, ScalarRecursion)
{
    const Matrix x = newton_schulz_iterate(Matrix::from_rows({{0.5}}), 1);
    EXPECT_DOUBLE_EQ(x(0, 0), 0.6875);
}

TEST(NewtonSchulz, OrthogonalInputConverges)
{
    const Matrix x = newton_schulz(Matrix::identity(3), 30);
    EXPECT_LE(frobenius_norm(x - Matrix::identity(3)), 1e-6);
}

TEST(NewtonSchulz, MatchesExactPolarFactor)
{
    Rng rng(20);
    std::vector<double> sv(8);
    for (std::size_t k = 0; k < 8; ++k) {
        sv[k] = 10.0 - static_cast<double>(k) * (9.0 / 7.0);  // condition number 10
    }
    const Matrix a = limuon::testing::with_singular_values(8, 8, sv, rng);
    EXPECT_LE(frobenius_norm(newton_schulz(a, 30) - orthogonal_factor(a)), 1e-5);
}

TEST(NewtonSchulz, ErrorNonIncreasingInIterations)
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 2 + rng.index(7);
        const std::size_t n = 2 + rng.index(7);
        const std::size_t k = std::min(m, n);
        std::vector<double> sv(k);
        for (auto& x : sv) {
            x = 0.1 + 0.9 * rng.uniform();  // σ_min/σ_max ≥ 0.1
        }
        sv.front() = 1.0;
        const Matrix a = limuon::testing::with_singular_values(m, n, sv, rng);
        const Matrix exact = orthogonal_factor(a);
        double previous = frobenius_norm(newton_schulz(a, 1) - exact);
        for (int iters = 2; iters <= 40; ++iters) {
            const double err = frobenius_norm(newton_schulz(a, iters) - exact);
            EXPECT_LE(err, previous + 1e-13);
            previous = err;
        }
    }
}

TEST(NewtonSchulz, RejectsZero)
{
    EXPECT_THROW(newton_schulz(Matrix(2, 2), 5), std::invalid_argument);
    EXPECT_THROW(newton_schulz(Matrix::identity(2), 0), std::invalid_argument);
}
