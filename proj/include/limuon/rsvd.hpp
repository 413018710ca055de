#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "limuon/linalg.hpp"
#include "limuon/matrix.hpp"

namespace limuon {

/// Target rank and oversampling for the randomized SVD sketch.
struct RsvdParams {
    std::size_t rank = 1;
    std::size_t oversampling = 2;

    /// Throws unless rank >= 1, oversampling >= 2 and rank + oversampling
    /// fits inside an m×n matrix.
    void validate(std::size_t m, std::size_t n) const
    {
        if (rank < 1) {
            throw std::invalid_argument("RsvdParams: rank must be at least 1");
        }
        if (oversampling < 2) {
            throw std::invalid_argument("RsvdParams: oversampling must be at least 2");
        }
        if (rank + oversampling > std::min(m, n)) {
            throw std::invalid_argument("RsvdParams: rank + oversampling exceeds min(m, n)");
        }
    }
};

/// Rank-r̂ factored matrix Û·diag(ŝ)·V̂ᵀ. The diagonal is kept as a vector.
struct FactoredMomentum {
    Matrix u_hat;
    std::vector<double> s_hat;
    Matrix v_hat;

    [[nodiscard]] std::size_t rank() const noexcept { return s_hat.size(); }
    [[nodiscard]] std::size_t rows() const noexcept { return u_hat.rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return v_hat.rows(); }

    /// Stored doubles: (m + n + 1)·r̂.
    [[nodiscard]] std::size_t element_count() const noexcept
    {
        return u_hat.size() + v_hat.size() + s_hat.size();
    }
};

inline Matrix reconstruct(const FactoredMomentum& f)
{
    const std::size_t m = f.rows();
    const std::size_t n = f.cols();
    Matrix out(m, n);
    for (std::size_t k = 0; k < f.rank(); ++k) {
        for (std::size_t i = 0; i < m; ++i) {
            const double us = f.u_hat(i, k) * f.s_hat[k];
            for (std::size_t j = 0; j < n; ++j) {
                out(i, j) += us * f.v_hat(j, k);
            }
        }
    }
    return out;
}

/// Randomized SVD with a Gaussian sketch of width l = r̂ + s:
///   Y = AΩ, Y = QR, B = QᵀA, B = ŨΣVᵀ, U = QŨ,
/// truncated to the leading r̂ singular triples. Ω is drawn from `rng`.
inline FactoredMomentum rsvd(const Matrix& a, const RsvdParams& params, Rng& rng)
{
    params.validate(a.rows(), a.cols());
    const std::size_t l = params.rank + params.oversampling;

    const Matrix omega = gaussian_matrix(a.cols(), l, rng);
    const Matrix y = matmul(a, omega);
    const QrResult qr = qr_decompose(y);
    const Matrix b = matmul_tn(qr.q, a);
    const SvdResult small = svd(b);
    const Matrix u = matmul(qr.q, small.u);

    return FactoredMomentum{
        u.left_columns(params.rank),
        std::vector<double>(small.sigma.begin(), small.sigma.begin() + static_cast<std::ptrdiff_t>(params.rank)),
        small.v.left_columns(params.rank),
    };
}

/// (Σ_{j>r̂} ν_j²)^{1/2}.
inline double tail_energy(std::span<const double> singular_values, std::size_t rank)
{
    double acc = 0.0;
    for (std::size_t j = rank; j < singular_values.size(); ++j) {
        acc += singular_values[j] * singular_values[j];
    }
    return std::sqrt(acc);
}

/// Expected-error bound for the rank-r̂ randomized approximation:
/// (1 + r̂/(s−1))^{1/2} · tail_energy(ν, r̂).
inline double rsvd_error_bound(std::span<const double> singular_values, std::size_t rank, std::size_t oversampling)
{
    if (oversampling < 2) {
        throw std::invalid_argument("rsvd_error_bound: oversampling must be at least 2");
    }
    if (rank < 1 || rank > singular_values.size()) {
        throw std::invalid_argument("rsvd_error_bound: rank out of range");
    }
    const double factor = 1.0 + static_cast<double>(rank) / static_cast<double>(oversampling - 1);
    return std::sqrt(factor) * tail_energy(singular_values, rank);
}

}  // namespace limuon
