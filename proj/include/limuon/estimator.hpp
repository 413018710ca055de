#pragma once

// Momentum / gradient-estimator state machines.
//
// All updates take the state by value and return the next state; nothing is
// shared between instances.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "limuon/matrix.hpp"
#include "limuon/objectives.hpp"
#include "limuon/rsvd.hpp"

namespace limuon {

/// Heavy-ball buffer B ← μB + G.
struct ClassicMuonState {
    Matrix buffer;
    double momentum = 0.0;
};

/// Dense STORM estimate M.
struct StormDenseState {
    Matrix momentum;
};

/// STORM estimate kept as rank-r̂ factors between steps. Holds the dense
/// initial estimate until the first compression.
struct StormCompressedState {
    std::variant<Matrix, FactoredMomentum> store;
    RsvdParams params;
};

using MomentumState = std::variant<ClassicMuonState, StormDenseState, StormCompressedState>;

/// Two gradients evaluated on the same sample: at the new and the old iterate.
struct SamplePair {
    Matrix grad_new;
    Matrix grad_old;
};

inline SamplePair make_sample_pair(const StochasticOracle& oracle, const Matrix& w_new, const Matrix& w_old, SampleId id)
{
    return SamplePair{oracle.stochastic_grad(w_new, id), oracle.stochastic_grad(w_old, id)};
}

inline MomentumState init_classic_muon(std::size_t rows, std::size_t cols, double momentum)
{
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("init_classic_muon: momentum must lie in [0, 1)");
    }
    return ClassicMuonState{Matrix(rows, cols), momentum};
}

inline MomentumState init_storm(Matrix grad0) { return StormDenseState{std::move(grad0)}; }

inline MomentumState init_storm_compressed(Matrix grad0, const RsvdParams& params)
{
    params.validate(grad0.rows(), grad0.cols());
    return StormCompressedState{std::move(grad0), params};
}

/// Doubles persisted by the state between steps.
inline std::size_t element_count(const MomentumState& state)
{
    return std::visit(
        [](const auto& s) -> std::size_t {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ClassicMuonState>) {
                return s.buffer.size();
            } else if constexpr (std::is_same_v<S, StormDenseState>) {
                return s.momentum.size();
            } else {
                return std::visit(
                    [](const auto& store) -> std::size_t {
                        if constexpr (std::is_same_v<std::decay_t<decltype(store)>, Matrix>) {
                            return store.size();
                        } else {
                            return store.element_count();
                        }
                    },
                    s.store);
            }
        },
        state);
}

/// Dense view of the current estimate (B, M, or the reconstructed M̂).
inline Matrix dense_momentum(const MomentumState& state)
{
    return std::visit(
        [](const auto& s) -> Matrix {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ClassicMuonState>) {
                return s.buffer;
            } else if constexpr (std::is_same_v<S, StormDenseState>) {
                return s.momentum;
            } else {
                if (const auto* dense = std::get_if<Matrix>(&s.store)) {
                    return *dense;
                }
                return reconstruct(std::get<FactoredMomentum>(s.store));
            }
        },
        state);
}

inline MomentumState classic_muon_update(MomentumState state, const Matrix& grad)
{
    auto* s = std::get_if<ClassicMuonState>(&state);
    if (s == nullptr) {
        throw std::invalid_argument("classic_muon_update: state is not ClassicMuon");
    }
    if (!s->buffer.same_shape(grad)) {
        throw dimension_error("classic_muon_update: gradient shape mismatch");
    }
    s->buffer *= s->momentum;
    s->buffer += grad;
    return state;
}

namespace detail {

inline void check_pair(const Matrix& m, const SamplePair& pair, double beta, const char* who)
{
    if (!pair.grad_new.same_shape(pair.grad_old) || !pair.grad_new.same_shape(m)) {
        throw dimension_error(std::string(who) + ": shape mismatch");
    }
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw std::invalid_argument(std::string(who) + ": beta must lie in (0, 1]");
    }
}

// g_new + (1 − β)(m − g_old), entrywise.
inline Matrix storm_combine(const Matrix& m, const SamplePair& pair, double beta)
{
    Matrix out(m.rows(), m.cols());
    const auto mm = m.data();
    const auto gn = pair.grad_new.data();
    const auto go = pair.grad_old.data();
    auto o = out.data();
    const double keep = 1.0 - beta;
    for (std::size_t k = 0; k < o.size(); ++k) {
        o[k] = gn[k] + keep * (mm[k] - go[k]);
    }
    return out;
}

}  // namespace detail

/// M ← ∇f(W_{t+1}; ξ) + (1 − β)(M − ∇f(W_t; ξ)).
inline MomentumState storm_update(MomentumState state, const SamplePair& pair, double beta)
{
    auto* s = std::get_if<StormDenseState>(&state);
    if (s == nullptr) {
        throw std::invalid_argument("storm_update: state is not StormDense");
    }
    detail::check_pair(s->momentum, pair, beta, "storm_update");
    s->momentum = detail::storm_combine(s->momentum, pair, beta);
    return state;
}

/// Forms the dense M_{t+1} from the stored M̂_t and re-compresses it.
/// Returns the new (factored) state and the dense M_{t+1}.
inline std::pair<MomentumState, Matrix> compressed_storm_update(MomentumState state, const SamplePair& pair, double beta,
                                                                Rng& rng)
{
    auto* s = std::get_if<StormCompressedState>(&state);
    if (s == nullptr) {
        throw std::invalid_argument("compressed_storm_update: state is not StormCompressed");
    }
    const Matrix previous = dense_momentum(state);
    detail::check_pair(previous, pair, beta, "compressed_storm_update");
    Matrix next = detail::storm_combine(previous, pair, beta);
    s->store = rsvd(next, s->params, rng);
    return {std::move(state), std::move(next)};
}

/// ‖M − ∇f(W)‖_F for the state's dense estimate.
inline double estimator_error(const MomentumState& state, const Matrix& true_grad)
{
    return frobenius_norm(dense_momentum(state) - true_grad);
}

}  // namespace limuon
