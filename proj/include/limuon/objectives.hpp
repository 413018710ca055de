#pragma once

// Finite-sum synthetic objectives with exact gradients and known constants.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "limuon/linalg.hpp"
#include "limuon/matrix.hpp"

namespace limuon {

/// Names one member of a finite sum. The same id must be used for both
/// gradient evaluations of a variance-reduced update.
struct SampleId {
    std::size_t index = 0;

    friend bool operator==(SampleId, SampleId) = default;
};

enum class LossKind {
    quadratic,  ///< f(W; i) = ½‖W − A_i‖_F²
    quartic,    ///< f(W; i) = ¼‖W − A_i‖_F⁴
};

/// Constants certified for an oracle instance.
struct OracleConstants {
    /// Global Frobenius Lipschitz constant of the gradient, when one exists.
    std::optional<double> lipschitz;
    /// Generalized smoothness ‖∇²f(W)‖ ≤ l0 + l1·‖∇f(W)‖_F.
    std::optional<double> l0;
    std::optional<double> l1;
    /// Gradient noise level, when uniform in W.
    std::optional<double> sigma;
    /// A value f* with f(W) ≥ f* everywhere.
    double loss_lower_bound = 0.0;
    std::optional<Matrix> minimizer;
};

/// f(W) = (1/N) Σ_i f(W; i) over fixed targets A_i. Immutable after
/// construction; all evaluation methods are const and thread-safe.
class StochasticOracle {
public:
    StochasticOracle(LossKind kind, std::vector<Matrix> targets) : kind_(kind), targets_(std::move(targets)), mean_(1, 1)
    {
        if (targets_.empty()) {
            throw std::invalid_argument("StochasticOracle: need at least one target");
        }
        for (const auto& t : targets_) {
            if (!t.same_shape(targets_.front())) {
                throw dimension_error("StochasticOracle: targets differ in shape");
            }
        }
        mean_ = Matrix(rows(), cols());
        for (const auto& t : targets_) {
            mean_ += t;
        }
        mean_ *= 1.0 / static_cast<double>(targets_.size());
        constants_ = kind_ == LossKind::quadratic ? quadratic_constants() : quartic_constants();
    }

    [[nodiscard]] LossKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t rows() const noexcept { return targets_.front().rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return targets_.front().cols(); }
    [[nodiscard]] std::size_t sample_count() const noexcept { return targets_.size(); }
    [[nodiscard]] const std::vector<Matrix>& targets() const noexcept { return targets_; }
    [[nodiscard]] const Matrix& target_mean() const noexcept { return mean_; }
    [[nodiscard]] const OracleConstants& constants() const noexcept { return constants_; }

    SampleId sample(Rng& rng) const { return SampleId{rng.index(targets_.size())}; }

    [[nodiscard]] double sample_loss(const Matrix& w, SampleId id) const
    {
        const double d2 = squared_distance(w, target(id));
        return kind_ == LossKind::quadratic ? 0.5 * d2 : 0.25 * d2 * d2;
    }

    [[nodiscard]] Matrix stochastic_grad(const Matrix& w, SampleId id) const
    {
        Matrix diff = w - target(id);
        if (kind_ == LossKind::quartic) {
            const double d = frobenius_norm(diff);
            diff *= d * d;
        }
        return diff;
    }

    [[nodiscard]] double loss(const Matrix& w) const
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            acc += sample_loss(w, SampleId{i});
        }
        return acc / static_cast<double>(targets_.size());
    }

    [[nodiscard]] Matrix full_grad(const Matrix& w) const
    {
        if (kind_ == LossKind::quadratic) {
            return w - mean_;
        }
        Matrix g(rows(), cols());
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            g += stochastic_grad(w, SampleId{i});
        }
        g *= 1.0 / static_cast<double>(targets_.size());
        return g;
    }

    /// Exact (1/N) Σ_i ‖∇f(W; i) − ∇f(W)‖_F².
    [[nodiscard]] double gradient_variance(const Matrix& w) const
    {
        const Matrix g = full_grad(w);
        double acc = 0.0;
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            const double d = frobenius_norm(stochastic_grad(w, SampleId{i}) - g);
            acc += d * d;
        }
        return acc / static_cast<double>(targets_.size());
    }

private:
    const Matrix& target(SampleId id) const
    {
        if (id.index >= targets_.size()) {
            throw std::out_of_range("StochasticOracle: sample index out of range");
        }
        return targets_[id.index];
    }

    static double squared_distance(const Matrix& a, const Matrix& b)
    {
        const double d = frobenius_norm(a - b);
        return d * d;
    }

    // Spread of the targets around their mean.
    double mean_squared_spread() const
    {
        double acc = 0.0;
        for (const auto& t : targets_) {
            acc += squared_distance(t, mean_);
        }
        return acc / static_cast<double>(targets_.size());
    }

    OracleConstants quadratic_constants() const
    {
        OracleConstants c;
        c.lipschitz = 1.0;
        c.sigma = std::sqrt(mean_squared_spread());
        c.minimizer = mean_;
        c.loss_lower_bound = 0.5 * mean_squared_spread();
        return c;
    }

    // With X = W − Ā and e_i = A_i − Ā:
    //   ‖∇²f‖ ≤ 3(‖X‖ + Δ)²,  Δ = max_i ‖e_i‖
    //   ‖∇f‖ ≥ ‖X‖³ − c3,     c3 = ‖mean_i ‖e_i‖² e_i‖
    // so l1 = 1 and l0 = c3 + max_{d≥0} (3(d + Δ)² − d³), attained at
    // d = 1 + √(1 + 2Δ). Noise-free instances give l0 = 4.
    OracleConstants quartic_constants() const
    {
        double delta = 0.0;
        Matrix third(rows(), cols());
        for (const auto& t : targets_) {
            Matrix e = t - mean_;
            const double ne = frobenius_norm(e);
            delta = std::max(delta, ne);
            third += e * (ne * ne);
        }
        third *= 1.0 / static_cast<double>(targets_.size());
        const double c3 = frobenius_norm(third);
        const double d = 1.0 + std::sqrt(1.0 + 2.0 * delta);

        OracleConstants c;
        c.l1 = 1.0;
        c.l0 = c3 + 3.0 * (d + delta) * (d + delta) - d * d * d;
        c.loss_lower_bound = 0.0;
        if (delta == 0.0) {
            c.minimizer = mean_;
        }
        return c;
    }

    LossKind kind_;
    std::vector<Matrix> targets_;
    Matrix mean_;
    OracleConstants constants_;
};

/// ½‖W − A_i‖² with A_i = A + noise_scale·E_i; A and E_i standard Gaussian.
inline StochasticOracle noisy_quadratic(std::size_t m, std::size_t n, std::size_t samples, double noise_scale, Rng& rng)
{
    if (samples < 1) {
        throw std::invalid_argument("noisy_quadratic: need at least one sample");
    }
    const Matrix center = gaussian_matrix(m, n, rng);
    std::vector<Matrix> targets;
    targets.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        targets.push_back(center + gaussian_matrix(m, n, rng) * noise_scale);
    }
    return StochasticOracle(LossKind::quadratic, std::move(targets));
}

/// ¼‖W − A_i‖⁴ with A_i = a + noise_scale·E_i. Generalized smooth with
/// l1 = 1 but with no global Lipschitz gradient.
inline StochasticOracle quartic_oracle(const Matrix& a, std::size_t samples, double noise_scale, Rng& rng)
{
    if (samples < 1) {
        throw std::invalid_argument("quartic_oracle: need at least one sample");
    }
    std::vector<Matrix> targets;
    targets.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        targets.push_back(a + gaussian_matrix(a.rows(), a.cols(), rng) * noise_scale);
    }
    return StochasticOracle(LossKind::quartic, std::move(targets));
}

/// Quadratic whose targets all live in one rank-`true_rank` subspace:
/// A_i = U₀ (C + noise_scale·E_i) V₀ᵀ with U₀ (m×k), V₀ (n×k) orthonormal and
/// C, E_i Gaussian k×k scaled by √(mn)/k. Starting from W = 0 every gradient
/// and every STORM momentum stays inside that subspace, so their rank is at
/// most `true_rank`.
inline StochasticOracle lowrank_target_oracle(std::size_t m, std::size_t n, std::size_t true_rank, std::size_t samples,
                                              double noise_scale, Rng& rng)
{
    if (true_rank < 1 || true_rank > std::min(m, n)) {
        throw std::invalid_argument("lowrank_target_oracle: true_rank must be in [1, min(m, n)]");
    }
    if (samples < 1) {
        throw std::invalid_argument("lowrank_target_oracle: need at least one sample");
    }
    const Matrix u0 = qr_decompose(gaussian_matrix(m, true_rank, rng)).q;
    const Matrix v0 = qr_decompose(gaussian_matrix(n, true_rank, rng)).q;
    const double core_scale = std::sqrt(static_cast<double>(m * n)) / static_cast<double>(true_rank);
    const Matrix core = gaussian_matrix(true_rank, true_rank, rng) * core_scale;

    std::vector<Matrix> targets;
    targets.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const Matrix c = core + gaussian_matrix(true_rank, true_rank, rng) * (noise_scale * core_scale);
        targets.push_back(matmul(matmul(u0, c), v0.transpose()));
    }
    return StochasticOracle(LossKind::quadratic, std::move(targets));
}

/// Central differences of the full loss, entry by entry.
inline Matrix finite_diff_grad(const StochasticOracle& oracle, const Matrix& w, double h)
{
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: step must be positive");
    }
    Matrix g(w.rows(), w.cols());
    Matrix probe = w;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double saved = probe(i, j);
            probe(i, j) = saved + h;
            const double up = oracle.loss(probe);
            probe(i, j) = saved - h;
            const double down = oracle.loss(probe);
            probe(i, j) = saved;
            g(i, j) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

inline constexpr std::string_view to_string(LossKind kind) noexcept
{
    return kind == LossKind::quadratic ? "quadratic" : "quartic";
}

}  // namespace limuon
