#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "limuon/estimator.hpp"
#include "limuon/metrics.hpp"
#include "limuon/optimizer.hpp"
#include "test_oracles.hpp"

using namespace limuon;

namespace {

SamplePair random_pair(std::size_t m, std::size_t n, Rng& rng)
{
    return SamplePair{gaussian_matrix(m, n, rng), gaussian_matrix(m, n, rng)};
}

}  // namespace

TEST(InitStorm, StoresGradient)
{
    const MomentumState zero = init_storm(Matrix(3, 2));
    EXPECT_EQ(dense_momentum(zero), Matrix(3, 2));

    Rng rng(1);
    const Matrix g = gaussian_matrix(5, 4, rng);
    const MomentumState s = init_storm(g);
    EXPECT_EQ(std::get<StormDenseState>(s).momentum, g);
    EXPECT_EQ(element_count(s), 20u);
}

TEST(ClassicMuon, MemorylessWhenMomentumZero)
{
    Rng rng(2);
    const Matrix g = gaussian_matrix(3, 3, rng);
    MomentumState s = init_classic_muon(3, 3, 0.0);
    s = classic_muon_update(s, gaussian_matrix(3, 3, rng));
    s = classic_muon_update(s, g);
    EXPECT_EQ(std::get<ClassicMuonState>(s).buffer, g);
}

TEST(ClassicMuon, GeometricSeries)
{
    Rng rng(3);
    const Matrix g = gaussian_matrix(4, 2, rng);
    MomentumState s = init_classic_muon(4, 2, 0.9);
    for (int k = 1; k <= 50; ++k) {
        s = classic_muon_update(s, g);
        const Matrix expected = g * ((1.0 - std::pow(0.9, k)) / 0.1);
        EXPECT_LE(frobenius_norm(std::get<ClassicMuonState>(s).buffer - expected), 1e-12 * frobenius_norm(expected));
    }
}

TEST(ClassicMuon, DomainAndShapeChecks)
{
    EXPECT_THROW(init_classic_muon(2, 2, 1.0), std::invalid_argument);
    EXPECT_THROW(init_classic_muon(2, 2, -0.1), std::invalid_argument);
    EXPECT_THROW(classic_muon_update(init_classic_muon(2, 2, 0.5), Matrix(2, 3)), dimension_error);
    EXPECT_THROW(classic_muon_update(init_storm(Matrix(2, 2)), Matrix(2, 2)), std::invalid_argument);
}

TEST(Storm, BetaOneReturnsNewGradient)
{
    Rng rng(4);
    const SamplePair pair = random_pair(3, 4, rng);
    const MomentumState s = storm_update(init_storm(gaussian_matrix(3, 4, rng)), pair, 1.0);
    EXPECT_EQ(std::get<StormDenseState>(s).momentum, pair.grad_new);
}

TEST(Storm, ExactGradientIsAFixedPoint)
{
    Rng rng(5);
    auto oracle = noisy_quadratic(4, 3, 1, 0.0, rng);
    const Matrix w0 = gaussian_matrix(4, 3, rng);
    const Matrix w1 = w0 + gaussian_matrix(4, 3, rng) * 0.1;
    const MomentumState s = init_storm(oracle.full_grad(w0));
    const auto next = storm_update(s, make_sample_pair(oracle, w1, w0, SampleId{0}), 0.3);
    EXPECT_LE(frobenius_norm(std::get<StormDenseState>(next).momentum - oracle.full_grad(w1)), 1e-14);
}

TEST(Storm, MatchesElementwiseFormula)
{
    Rng rng(6);
    const Matrix m = gaussian_matrix(5, 5, rng);
    const SamplePair pair = random_pair(5, 5, rng);
    const Matrix out = std::get<StormDenseState>(storm_update(init_storm(m), pair, 0.5)).momentum;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const double expected = pair.grad_new(i, j) + 0.5 * (m(i, j) - pair.grad_old(i, j));
            EXPECT_NEAR(out(i, j), expected, 1e-15);
        }
    }
}

TEST(Storm, PropertyBetaOneIgnoresPriorState)
{
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const SamplePair pair = random_pair(3, 2, rng);
        const auto a = storm_update(init_storm(gaussian_matrix(3, 2, rng)), pair, 1.0);
        const auto b = storm_update(init_storm(gaussian_matrix(3, 2, rng) * 100.0), pair, 1.0);
        EXPECT_EQ(dense_momentum(a), dense_momentum(b));
    }
}

TEST(Storm, PropertyLinearInInputs)
{
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix m = gaussian_matrix(4, 3, rng);
        const SamplePair pair = random_pair(4, 3, rng);
        const double beta = 0.01 + 0.98 * rng.uniform();
        const Matrix base = dense_momentum(storm_update(init_storm(m), pair, beta));
        for (double c : {-1.0, 2.0}) {
            const SamplePair scaled{pair.grad_new * c, pair.grad_old * c};
            const Matrix out = dense_momentum(storm_update(init_storm(m * c), scaled, beta));
            EXPECT_EQ(out, base * c);
        }
    }
}

TEST(Storm, RejectsBadInputs)
{
    const SamplePair pair{Matrix(2, 2), Matrix(2, 2)};
    EXPECT_THROW(storm_update(init_storm(Matrix(2, 3)), pair, 0.5), dimension_error);
    EXPECT_THROW(storm_update(init_storm(Matrix(2, 2)), pair, 0.0), std::invalid_argument);
    EXPECT_THROW(storm_update(init_storm(Matrix(2, 2)), pair, 1.5), std::invalid_argument);
    EXPECT_THROW(storm_update(init_classic_muon(2, 2, 0.5), pair, 0.5), std::invalid_argument);
}

TEST(CompressedStorm, BetaOneGivesNewGradientAndBoundedCompression)
{
    Rng build(9);
    const Matrix start = gaussian_matrix(12, 10, build);
    const SamplePair pair = random_pair(12, 10, build);
    const RsvdParams params{3, 3};
    const auto sigma = svd(pair.grad_new).sigma;
    const double bound = rsvd_error_bound(sigma, params.rank, params.oversampling);

    const int seeds = 200;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(500 + static_cast<std::uint64_t>(s));
        auto [state, dense] = compressed_storm_update(init_storm_compressed(start, params), pair, 1.0, rng);
        ASSERT_EQ(dense, pair.grad_new);
        const double err = frobenius_norm(dense_momentum(state) - dense);
        sum += err;
        sum_sq += err * err;
    }
    const double mean = sum / seeds;
    const double sd = std::sqrt((sum_sq - seeds * mean * mean) / (seeds - 1));
    EXPECT_LE(mean, bound + 3.0 * sd / std::sqrt(static_cast<double>(seeds)));
}

TEST(CompressedStorm, LowRankIsLosslessAndStateStaysFactored)
{
    Rng rng(10);
    const std::size_t m = 9;
    const std::size_t n = 7;
    const RsvdParams params{3, 2};
    const Matrix u = limuon::testing::random_orthonormal(m, 2, rng);
    const Matrix v = limuon::testing::random_orthonormal(n, 2, rng);
    auto low_rank = [&] { return matmul(matmul(u, gaussian_matrix(2, 2, rng)), v.transpose()); };

    MomentumState state = init_storm_compressed(low_rank(), params);
    EXPECT_EQ(element_count(state), m * n);
    for (int step = 0; step < 20; ++step) {
        const SamplePair pair{low_rank(), low_rank()};
        auto [next, dense] = compressed_storm_update(std::move(state), pair, 0.2, rng);
        state = std::move(next);
        EXPECT_LE(frobenius_norm(dense_momentum(state) - dense), 1e-8 * std::max(1.0, frobenius_norm(dense)));
        EXPECT_EQ(element_count(state), (m + n + 1) * params.rank);
        EXPECT_TRUE(std::holds_alternative<FactoredMomentum>(std::get<StormCompressedState>(state).store));
    }
}

TEST(CompressedStorm, RejectsBadInputs)
{
    Rng rng(11);
    EXPECT_THROW(init_storm_compressed(Matrix(4, 4), RsvdParams{3, 2}), std::invalid_argument);
    const SamplePair pair{Matrix(6, 6), Matrix(6, 5)};
    EXPECT_THROW(compressed_storm_update(init_storm_compressed(Matrix(6, 6), RsvdParams{2, 2}), pair, 0.5, rng),
                 dimension_error);
    EXPECT_THROW(compressed_storm_update(init_storm(Matrix(6, 6)), SamplePair{Matrix(6, 6), Matrix(6, 6)}, 0.5, rng),
                 std::invalid_argument);
}

TEST(EstimatorError, ZeroWhenExact)
{
    Rng rng(12);
    const Matrix g = gaussian_matrix(3, 3, rng);
    EXPECT_EQ(estimator_error(init_storm(g), g), 0.0);
}

TEST(EstimatorError, ZeroVarianceOracleStaysExact)
{
    Rng rng(13);
    const auto oracle = noisy_quadratic(6, 4, 1, 0.0, rng);
    OptimizerConfig c;
    c.variant = LiMuonOpt1{};
    c.schedule = Schedule::constant;
    c.eta0 = 0.01;
    c.beta0 = 0.05;
    c.horizon = 1000;
    const auto records = limuon_run(c, oracle, Matrix(6, 4));
    for (const auto& r : records) {
        ASSERT_LE(r.estimator_error, 1e-12);
    }
}

// Mean ‖M_t − ∇f(W_t)‖ over 20 seeds stays under the dense-STORM envelope.
TEST(EstimatorError, NoisyQuadraticBelowStormEnvelope)
{
    Rng rng(14);
    const std::size_t m = 8;
    const std::size_t n = 4;
    const auto oracle = noisy_quadratic(m, n, 32, 0.1 / std::sqrt(static_cast<double>(m * n)), rng);
    const double sigma = *oracle.constants().sigma;
    ASSERT_NEAR(sigma, 0.1, 0.03);

    OptimizerConfig c;
    c.variant = LiMuonOpt1{};
    c.schedule = Schedule::constant;
    c.eta0 = 0.01;
    c.beta0 = 0.05;
    c.horizon = 1001;
    std::vector<double> mean_error(c.horizon, 0.0);
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        c.seed = static_cast<std::uint64_t>(s);
        const auto records = limuon_run(c, oracle, Matrix(m, n));
        for (const auto& r : records) {
            mean_error[r.t] += r.estimator_error / seeds;
        }
    }
    const double rank = static_cast<double>(std::min(m, n));
    for (std::size_t t = 100; t <= 1000; ++t) {
        EXPECT_LE(mean_error[t], lemma1_envelope(c.beta0, c.eta0, sigma, 1.0, rank, static_cast<double>(t))) << t;
    }
}
