#pragma once

// Householder QR, one-sided Jacobi SVD, polar factors and Newton-Schulz.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "limuon/matrix.hpp"

namespace limuon {

/// Thin QR: q is m×l with orthonormal columns, r is l×l upper triangular with
/// a non-negative diagonal.
struct QrResult {
    Matrix q;
    Matrix r;
};

/// Thin SVD with k = min(m, n): a = u·diag(sigma)·vᵀ, sigma non-increasing.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

/// Jacobi sweep controls.
inline constexpr double kJacobiGramTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 60;

/// Singular values at or below this fraction of the largest one are treated
/// as zero when forming polar factors and counting rank.
inline constexpr double kRankTolerance = 1e-10;

inline QrResult qr_decompose(const Matrix& y)
{
    const std::size_t m = y.rows();
    const std::size_t l = y.cols();
    if (m < l) {
        throw dimension_error("qr_decompose: requires rows >= cols");
    }

    Matrix work = y;
    // Householder vectors, stored as full-length columns (zero above the pivot).
    std::vector<std::vector<double>> reflectors(l);
    std::vector<double> betas(l, 0.0);

    for (std::size_t k = 0; k < l; ++k) {
        double alpha = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            alpha = std::hypot(alpha, work(i, k));
        }
        if (alpha == 0.0) {
            continue;  // zero column: H_k = I
        }
        const double x0 = work(k, k);
        const double sign = x0 < 0.0 ? -1.0 : 1.0;
        std::vector<double> v(m, 0.0);
        for (std::size_t i = k; i < m; ++i) {
            v[i] = work(i, k);
        }
        v[k] = x0 + sign * alpha;
        double vtv = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            vtv += v[i] * v[i];
        }
        const double beta = 2.0 / vtv;

        for (std::size_t j = k + 1; j < l; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) {
                dot += v[i] * work(i, j);
            }
            const double f = beta * dot;
            for (std::size_t i = k; i < m; ++i) {
                work(i, j) -= f * v[i];
            }
        }
        work(k, k) = -sign * alpha;
        for (std::size_t i = k + 1; i < m; ++i) {
            work(i, k) = 0.0;
        }
        reflectors[k] = std::move(v);
        betas[k] = beta;
    }

    // Q = H_0 H_1 ... H_{l-1} applied to the first l columns of I.
    Matrix q(m, l);
    for (std::size_t j = 0; j < l; ++j) {
        q(j, j) = 1.0;
    }
    for (std::size_t kk = l; kk-- > 0;) {
        if (betas[kk] == 0.0) {
            continue;
        }
        const auto& v = reflectors[kk];
        for (std::size_t j = 0; j < l; ++j) {
            double dot = 0.0;
            for (std::size_t i = kk; i < m; ++i) {
                dot += v[i] * q(i, j);
            }
            const double f = betas[kk] * dot;
            for (std::size_t i = kk; i < m; ++i) {
                q(i, j) -= f * v[i];
            }
        }
    }

    Matrix r(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i; j < l; ++j) {
            r(i, j) = work(i, j);
        }
    }
    for (std::size_t k = 0; k < l; ++k) {
        if (r(k, k) < 0.0) {
            for (std::size_t j = k; j < l; ++j) {
                r(k, j) = -r(k, j);
            }
            for (std::size_t i = 0; i < m; ++i) {
                q(i, k) = -q(i, k);
            }
        }
    }
    return {std::move(q), std::move(r)};
}

namespace detail {

inline double column_dot(const Matrix& a, std::size_t p, std::size_t q)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        acc += a(i, p) * a(i, q);
    }
    return acc;
}

inline void rotate_columns(Matrix& a, std::size_t p, std::size_t q, double c, double s)
{
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double ap = a(i, p);
        const double aq = a(i, q);
        a(i, p) = c * ap - s * aq;
        a(i, q) = s * ap + c * aq;
    }
}

/// Replaces the columns flagged in `null_cols` with unit vectors orthogonal
/// to every other column. Candidates are standard basis vectors; the one with
/// the largest residual after projection wins, which keeps the choice
/// deterministic.
inline void complete_orthonormal_columns(Matrix& u, const std::vector<bool>& null_cols)
{
    const std::size_t m = u.rows();
    const std::size_t k = u.cols();
    std::vector<bool> accepted(k);
    for (std::size_t j = 0; j < k; ++j) {
        accepted[j] = !null_cols[j];
    }

    auto project_out = [&](std::vector<double>& x) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < k; ++j) {
                if (!accepted[j]) {
                    continue;
                }
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    dot += u(i, j) * x[i];
                }
                for (std::size_t i = 0; i < m; ++i) {
                    x[i] -= dot * u(i, j);
                }
            }
        }
    };

    for (std::size_t j = 0; j < k; ++j) {
        if (accepted[j]) {
            continue;
        }
        std::vector<double> best;
        double best_norm = -1.0;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<double> x(m, 0.0);
            x[e] = 1.0;
            project_out(x);
            double nrm = 0.0;
            for (double xi : x) {
                nrm += xi * xi;
            }
            nrm = std::sqrt(nrm);
            if (nrm > best_norm + 1e-12) {
                best_norm = nrm;
                best = std::move(x);
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            u(i, j) = best[i] / best_norm;
        }
        accepted[j] = true;
    }
}

/// One-sided Jacobi on the columns of a tall (rows >= cols) matrix.
inline SvdResult jacobi_svd_tall(const Matrix& a)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);

    const double norm = frobenius_norm(a);
    const double eps = std::numeric_limits<double>::epsilon();
    // Columns below this squared norm are numerically zero and never rotated.
    const double floor = (eps * norm) * (eps * norm);

    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = column_dot(w, p, p);
                const double beta = column_dot(w, q, q);
                if (alpha <= floor || beta <= floor) {
                    continue;
                }
                const double gamma = column_dot(w, p, q);
                if (std::abs(gamma) <= kJacobiGramTolerance * std::sqrt(alpha) * std::sqrt(beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                rotate_columns(w, p, q, c, s);
                rotate_columns(v, p, q, c, s);
            }
        }
        if (!rotated) {
            break;
        }
    }

    std::vector<double> sigma(n);
    std::vector<bool> null_cols(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = std::sqrt(column_dot(w, j, j));
        if (sigma[j] <= eps * norm || sigma[j] == 0.0) {
            null_cols[j] = true;
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                w(i, j) /= sigma[j];
            }
        }
    }
    complete_orthonormal_columns(w, null_cols);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.sigma[jj] = sigma[j];
        for (std::size_t i = 0; i < m; ++i) {
            out.u(i, jj) = w(i, j);
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.v(i, jj) = v(i, j);
        }
    }
    return out;
}

/// Flip column pairs so the largest-magnitude entry of each u column is positive.
inline void normalize_signs(SvdResult& s)
{
    for (std::size_t j = 0; j < s.u.cols(); ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < s.u.rows(); ++i) {
            if (std::abs(s.u(i, j)) > std::abs(s.u(arg, j))) {
                arg = i;
            }
        }
        if (s.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < s.u.rows(); ++i) {
                s.u(i, j) = -s.u(i, j);
            }
            for (std::size_t i = 0; i < s.v.rows(); ++i) {
                s.v(i, j) = -s.v(i, j);
            }
        }
    }
}

}  // namespace detail

/// One-sided Jacobi SVD. Wide inputs are handled through their transpose so
/// the iterated side always has at least as many rows as columns.
inline SvdResult svd(const Matrix& a)
{
    SvdResult out = [&] {
        if (a.rows() >= a.cols()) {
            return detail::jacobi_svd_tall(a);
        }
        SvdResult t = detail::jacobi_svd_tall(a.transpose());
        return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }();
    detail::normalize_signs(out);
    return out;
}

inline std::size_t numerical_rank(const std::vector<double>& sigma, double rel_tol = kRankTolerance)
{
    if (sigma.empty() || sigma.front() == 0.0) {
        return 0;
    }
    const double cutoff = rel_tol * sigma.front();
    return static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > cutoff; }));
}

inline double nuclear_norm(const Matrix& a)
{
    const auto s = svd(a);
    return std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
}

/// Sum of u_i·v_iᵀ over the numerically nonzero singular triples.
///
/// For full-rank input this is the polar factor UVᵀ, satisfying OᵀO = I
/// (rows >= cols) or OOᵀ = I (rows < cols). Singular directions below
/// kRankTolerance·σ_max are dropped, so O is a partial isometry with
/// ‖O‖_F² = rank(a) and the zero matrix maps to zero. ⟨a, O⟩ equals the
/// nuclear norm of a in every case.
inline Matrix orthogonal_factor(const Matrix& a)
{
    const auto s = svd(a);
    const std::size_t rank = numerical_rank(s.sigma);
    Matrix o(a.rows(), a.cols());
    for (std::size_t k = 0; k < rank; ++k) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double uik = s.u(i, k);
            for (std::size_t j = 0; j < a.cols(); ++j) {
                o(i, j) += uik * s.v(j, k);
            }
        }
    }
    return o;
}

/// One cubic step X ← 1.5·X − 0.5·X·Xᵀ·X.
inline Matrix newton_schulz_step(const Matrix& x)
{
    // Form the smaller Gram matrix.
    Matrix cubic = x.rows() >= x.cols() ? matmul(x, matmul_tn(x, x)) : matmul(matmul(x, x.transpose()), x);
    Matrix next = x * 1.5;
    next -= cubic * 0.5;
    return next;
}

/// Runs the cubic iteration from x0 as given (no pre-scaling).
inline Matrix newton_schulz_iterate(Matrix x0, int iters)
{
    for (int k = 0; k < iters; ++k) {
        x0 = newton_schulz_step(x0);
    }
    return x0;
}

/// Newton-Schulz approximation of orthogonal_factor(a). The input is scaled
/// by its Frobenius norm first so every singular value lies in (0, 1].
inline Matrix newton_schulz(const Matrix& a, int iters)
{
    if (iters < 1) {
        throw std::invalid_argument("newton_schulz: iters must be positive");
    }
    const double norm = frobenius_norm(a);
    if (norm == 0.0) {
        throw std::invalid_argument("newton_schulz: zero matrix has no polar factor");
    }
    return newton_schulz_iterate(a * (1.0 / norm), iters);
}

}  // namespace limuon
