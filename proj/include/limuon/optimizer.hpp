#pragma once

// Muon and LiMuon step loops.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "limuon/estimator.hpp"
#include "limuon/linalg.hpp"
#include "limuon/matrix.hpp"
#include "limuon/objectives.hpp"
#include "limuon/rsvd.hpp"

namespace limuon {

/// Classic Muon with heavy-ball momentum μ ∈ [0, 1).
struct Muon {
    double momentum = 0.9;
};
/// LiMuon with a dense STORM estimate.
struct LiMuonOpt1 {};
/// LiMuon with the STORM estimate stored as randomized-SVD factors.
struct LiMuonOpt2 {
    RsvdParams rsvd;
};

using OptimizerVariant = std::variant<Muon, LiMuonOpt1, LiMuonOpt2>;

enum class Schedule {
    constant,          ///< η = eta0, β = beta0
    two_thirds_power,  ///< η = eta0·T^{-2/3}, β = beta0·T^{-2/3} (clamped)
};

struct ExactSvd {};
struct NewtonSchulz {
    int iters = 30;
};
using Orthogonalizer = std::variant<ExactSvd, NewtonSchulz>;

struct OptimizerConfig {
    OptimizerVariant variant = LiMuonOpt1{};
    double eta0 = 0.01;
    double beta0 = 1.0;
    std::size_t horizon = 100;
    Schedule schedule = Schedule::two_thirds_power;
    Orthogonalizer orthogonalizer = ExactSvd{};
    std::uint64_t seed = 0;
};

/// Defaults for an m×n parameter: eta0 = 0.05/√min(m, n), beta0 = 1.
inline OptimizerConfig default_config(std::size_t m, std::size_t n)
{
    OptimizerConfig c;
    c.eta0 = 0.05 / std::sqrt(static_cast<double>(std::min(m, n)));
    c.beta0 = 1.0;
    return c;
}

inline std::string_view variant_name(const OptimizerVariant& v)
{
    switch (v.index()) {
    case 0:
        return "muon";
    case 1:
        return "limuon_opt1";
    default:
        return "limuon_opt2";
    }
}

struct StepSizes {
    double eta;
    double beta;
};

inline constexpr double kBetaClamp = 1e-6;

inline StepSizes schedule(const OptimizerConfig& config, std::size_t horizon)
{
    if (horizon < 1) {
        throw std::invalid_argument("schedule: horizon must be at least 1");
    }
    if (config.schedule == Schedule::constant) {
        return {config.eta0, config.beta0};
    }
    const double decay = std::pow(static_cast<double>(horizon), -2.0 / 3.0);
    return {config.eta0 * decay, std::clamp(config.beta0 * decay, kBetaClamp, 1.0 - kBetaClamp)};
}

/// Persistent state size: m·n for Muon and Option #1, (m + n + 1)·r̂ for
/// Option #2.
inline std::size_t state_memory(const OptimizerConfig& config, std::size_t m, std::size_t n)
{
    if (const auto* opt2 = std::get_if<LiMuonOpt2>(&config.variant)) {
        return (m + n + 1) * opt2->rsvd.rank;
    }
    return m * n;
}

/// Momentum norms at or below this are treated as zero and skip the update.
inline constexpr double kZeroMomentum = 1e-14;

/// Orthogonal factor of m, or nullopt when m is numerically zero.
inline std::optional<Matrix> orthogonalize(const Matrix& m, const Orthogonalizer& how)
{
    if (frobenius_norm(m) <= kZeroMomentum) {
        return std::nullopt;
    }
    if (const auto* ns = std::get_if<NewtonSchulz>(&how)) {
        return newton_schulz(m, ns->iters);
    }
    return orthogonal_factor(m);
}

/// B ← μB + G; W' = W − η·orth(B).
inline std::pair<Matrix, MomentumState> muon_step(Matrix w, MomentumState state, const Matrix& grad, double eta,
                                                  const Orthogonalizer& how = ExactSvd{})
{
    if (!w.same_shape(grad)) {
        throw dimension_error("muon_step: gradient shape mismatch");
    }
    state = classic_muon_update(std::move(state), grad);
    if (auto o = orthogonalize(std::get<ClassicMuonState>(state).buffer, how)) {
        w -= *o * eta;
    }
    return {std::move(w), std::move(state)};
}

struct StepRecord {
    std::size_t t = 0;
    double loss = 0.0;
    double grad_frobenius = 0.0;
    double grad_nuclear = 0.0;
    double estimator_error = 0.0;
    std::size_t state_elements = 0;
    double wall_ms = 0.0;
};

struct RunOptions {
    /// Keep the singular values of the estimate used at every step.
    bool record_spectra = false;
};

struct RunOutcome {
    std::vector<StepRecord> records;
    Matrix final_weights;
    /// Step at which a non-finite loss or gradient appeared.
    std::optional<std::size_t> diverged_at;
    std::vector<std::vector<double>> spectra;
};

class divergence_error : public std::runtime_error {
public:
    explicit divergence_error(std::size_t step)
        : std::runtime_error("run diverged at step " + std::to_string(step)), step_(step)
    {
    }
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

namespace detail {

inline void validate_config(const OptimizerConfig& config, std::size_t m, std::size_t n)
{
    if (!(config.eta0 > 0.0) || !std::isfinite(config.eta0)) {
        throw std::invalid_argument("OptimizerConfig: eta0 must be positive");
    }
    if (std::holds_alternative<Muon>(config.variant)) {
        const double mu = std::get<Muon>(config.variant).momentum;
        if (!(mu >= 0.0 && mu < 1.0)) {
            throw std::invalid_argument("OptimizerConfig: momentum must lie in [0, 1)");
        }
    } else if (!(config.beta0 > 0.0) || (config.schedule == Schedule::constant && config.beta0 > 1.0)) {
        throw std::invalid_argument("OptimizerConfig: beta0 must lie in (0, 1] for a constant schedule, > 0 otherwise");
    }
    if (const auto* opt2 = std::get_if<LiMuonOpt2>(&config.variant)) {
        opt2->rsvd.validate(m, n);
    }
    if (const auto* ns = std::get_if<NewtonSchulz>(&config.orthogonalizer); ns != nullptr && ns->iters < 1) {
        throw std::invalid_argument("OptimizerConfig: Newton-Schulz iterations must be positive");
    }
}

class StepClock {
public:
    StepClock() : start_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] double elapsed_ms() const
    {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Runs `config.horizon` steps from w0 and records metrics at every iterate
/// W_0, …, W_{T−1}. Samples come from a stream seeded with `config.seed`;
/// sketches for Option #2 use a separate stream derived from the same seed,
/// so Option #1 and Option #2 see identical samples. A non-finite loss or
/// gradient stops the run and sets `diverged_at`.
inline RunOutcome run_optimizer(const OptimizerConfig& config, const StochasticOracle& oracle, const Matrix& w0,
                                const RunOptions& options = {})
{
    if (w0.rows() != oracle.rows() || w0.cols() != oracle.cols()) {
        throw dimension_error("run_optimizer: initial point does not match oracle shape");
    }
    detail::validate_config(config, w0.rows(), w0.cols());

    RunOutcome out{{}, w0, std::nullopt, {}};
    const std::size_t horizon = config.horizon;
    if (horizon == 0) {
        return out;
    }
    const StepSizes step = schedule(config, horizon);
    Rng sample_rng(config.seed);
    Rng sketch_rng(mix_seed(config.seed));
    Matrix& w = out.final_weights;
    out.records.reserve(horizon);

    auto measure = [&](std::size_t t, const Matrix& estimate) -> std::optional<StepRecord> {
        StepRecord rec;
        rec.t = t;
        rec.loss = oracle.loss(w);
        const Matrix g = oracle.full_grad(w);
        if (!std::isfinite(rec.loss) || !g.all_finite() || !estimate.all_finite()) {
            out.diverged_at = t;
            return std::nullopt;
        }
        rec.grad_frobenius = frobenius_norm(g);
        rec.grad_nuclear = nuclear_norm(g);
        rec.estimator_error = frobenius_norm(estimate - g);
        if (options.record_spectra) {
            out.spectra.push_back(svd(estimate).sigma);
        }
        return rec;
    };

    if (const auto* muon = std::get_if<Muon>(&config.variant)) {
        MomentumState state = init_classic_muon(w.rows(), w.cols(), muon->momentum);
        for (std::size_t t = 0; t < horizon; ++t) {
            detail::StepClock clock;
            const SampleId id = oracle.sample(sample_rng);
            state = classic_muon_update(std::move(state), oracle.stochastic_grad(w, id));
            const Matrix& buffer = std::get<ClassicMuonState>(state).buffer;
            auto rec = measure(t, buffer);
            if (!rec) {
                break;
            }
            if (auto o = orthogonalize(buffer, config.orthogonalizer)) {
                w -= *o * step.eta;
            }
            rec->state_elements = element_count(state);
            rec->wall_ms = clock.elapsed_ms();
            out.records.push_back(*rec);
        }
        return out;
    }

    const bool compressed = std::holds_alternative<LiMuonOpt2>(config.variant);
    Matrix current = oracle.stochastic_grad(w, oracle.sample(sample_rng));
    MomentumState state = compressed ? init_storm_compressed(current, std::get<LiMuonOpt2>(config.variant).rsvd)
                                     : init_storm(current);

    for (std::size_t t = 0; t < horizon; ++t) {
        detail::StepClock clock;
        auto rec = measure(t, current);
        if (!rec) {
            break;
        }
        Matrix w_next = w;
        if (auto o = orthogonalize(current, config.orthogonalizer)) {
            w_next -= *o * step.eta;
        }
        const SampleId id = oracle.sample(sample_rng);
        const SamplePair pair = make_sample_pair(oracle, w_next, w, id);
        if (compressed) {
            auto [next_state, dense] = compressed_storm_update(std::move(state), pair, step.beta, sketch_rng);
            state = std::move(next_state);
            current = std::move(dense);
        } else {
            state = storm_update(std::move(state), pair, step.beta);
            current = std::get<StormDenseState>(state).momentum;
        }
        w = std::move(w_next);
        rec->state_elements = element_count(state);
        rec->wall_ms = clock.elapsed_ms();
        out.records.push_back(*rec);
    }
    return out;
}

/// Record-only form of run_optimizer; throws divergence_error on blow-up.
inline std::vector<StepRecord> limuon_run(const OptimizerConfig& config, const StochasticOracle& oracle, const Matrix& w0)
{
    RunOutcome outcome = run_optimizer(config, oracle, w0);
    if (outcome.diverged_at) {
        throw divergence_error(*outcome.diverged_at);
    }
    return std::move(outcome.records);
}

}  // namespace limuon
