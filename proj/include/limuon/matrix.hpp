#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace limuon {

/// Thrown when operand shapes do not fit together.
class dimension_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Both dimensions are at least one.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(checked_size(rows, cols), 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != checked_size(rows, cols)) {
            throw dimension_error("Matrix: data length does not equal rows*cols");
        }
        for (double x : data_) {
            if (!std::isfinite(x)) {
                throw std::invalid_argument("Matrix: non-finite entry");
            }
        }
    }

    /// Builds from nested row lists, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows)
    {
        if (rows.size() == 0 || rows.begin()->size() == 0) {
            throw dimension_error("Matrix::from_rows: empty input");
        }
        const std::size_t cols = rows.begin()->size();
        std::vector<double> data;
        data.reserve(rows.size() * cols);
        for (const auto& row : rows) {
            if (row.size() != cols) {
                throw dimension_error("Matrix::from_rows: ragged rows");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Matrix(rows.size(), cols, std::move(data));
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix diagonal(std::span<const double> values)
    {
        Matrix m(values.size(), values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            m(i, i) = values[i];
        }
        return m;
    }

    static Matrix diagonal(std::initializer_list<double> values)
    {
        return diagonal(std::span<const double>(values.begin(), values.size()));
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const Matrix& other) const noexcept
    {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    [[nodiscard]] bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
    }

    [[nodiscard]] Matrix transpose() const
    {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    /// Leading `count` columns.
    [[nodiscard]] Matrix left_columns(std::size_t count) const
    {
        if (count == 0 || count > cols_) {
            throw dimension_error("Matrix::left_columns: count out of range");
        }
        Matrix out(rows_, count);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < count; ++j) {
                out(i, j) = (*this)(i, j);
            }
        }
        return out;
    }

    Matrix& operator+=(const Matrix& rhs)
    {
        require_same_shape(rhs, "operator+=");
        for (std::size_t k = 0; k < data_.size(); ++k) {
            data_[k] += rhs.data_[k];
        }
        return *this;
    }

    Matrix& operator-=(const Matrix& rhs)
    {
        require_same_shape(rhs, "operator-=");
        for (std::size_t k = 0; k < data_.size(); ++k) {
            data_[k] -= rhs.data_[k];
        }
        return *this;
    }

    Matrix& operator*=(double c) noexcept
    {
        for (double& x : data_) {
            x *= c;
        }
        return *this;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    static std::size_t checked_size(std::size_t rows, std::size_t cols)
    {
        if (rows == 0 || cols == 0) {
            throw dimension_error("Matrix: dimensions must be positive");
        }
        return rows * cols;
    }

    void require_same_shape(const Matrix& rhs, const char* what) const
    {
        if (!same_shape(rhs)) {
            throw dimension_error(std::string("Matrix::") + what + ": shape mismatch");
        }
    }

    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
inline Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
inline Matrix operator*(Matrix lhs, double c) { return lhs *= c; }
inline Matrix operator*(double c, Matrix rhs) { return rhs *= c; }

inline Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
inline Matrix sub(const Matrix& a, const Matrix& b) { return a - b; }
inline Matrix scale(const Matrix& a, double c) { return a * c; }

inline Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw dimension_error("matmul: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

/// aᵀ·b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows()) {
        throw dimension_error("matmul_tn: row counts differ");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aki * b(k, j);
            }
        }
    }
    return c;
}

/// Frobenius inner product ⟨a, b⟩ = trace(aᵀb).
inline double inner(const Matrix& a, const Matrix& b)
{
    if (!a.same_shape(b)) {
        throw dimension_error("inner: shape mismatch");
    }
    double acc = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t k = 0; k < x.size(); ++k) {
        acc += x[k] * y[k];
    }
    return acc;
}

inline double frobenius_norm(const Matrix& a)
{
    // Scaled accumulation avoids overflow for huge entries.
    double scale_ = 0.0;
    double ssq = 1.0;
    for (double x : a.data()) {
        if (x == 0.0) {
            continue;
        }
        const double ax = std::abs(x);
        if (scale_ < ax) {
            ssq = 1.0 + ssq * (scale_ / ax) * (scale_ / ax);
            scale_ = ax;
        } else {
            ssq += (ax / scale_) * (ax / scale_);
        }
    }
    return scale_ * std::sqrt(ssq);
}

/// Deterministic 64-bit generator. The stream is fixed by the seed on every
/// platform: mt19937_64 output is specified by the standard and the normal
/// draws use our own Box-Muller rather than std::normal_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in (0, 1).
    double uniform()
    {
        // 53 random bits, offset by half an ulp so 0 is never returned.
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n)
    {
        if (n == 0) {
            throw std::invalid_argument("Rng::index: empty range");
        }
        // Rejection sampling removes modulo bias.
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return static_cast<std::size_t>(x % bound);
    }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// splitmix64 finalizer; used to derive independent stream seeds from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// i.i.d. standard normal entries, filled row by row.
inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng)
{
    Matrix g(rows, cols);
    for (double& x : g.data()) {
        x = rng.normal();
    }
    return g;
}

}  // namespace limuon
