#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "limuon/optimizer.hpp"
#include "limuon/rsvd.hpp"

namespace limuon {

struct RunSummary {
    double avg_nuclear = 0.0;
    double min_frobenius = 0.0;
    double final_loss = 0.0;
    std::optional<double> rho_hat;
};

struct RunRecord {
    OptimizerConfig config;
    std::vector<StepRecord> records;
    RunSummary derived;
};

inline RunSummary summarize(std::span<const StepRecord> records)
{
    if (records.empty()) {
        throw std::invalid_argument("summarize: no records");
    }
    RunSummary s;
    double total = 0.0;
    s.min_frobenius = records.front().grad_frobenius;
    for (const auto& r : records) {
        total += r.grad_nuclear;
        s.min_frobenius = std::min(s.min_frobenius, r.grad_frobenius);
    }
    s.avg_nuclear = total / static_cast<double>(records.size());
    s.final_loss = records.back().loss;
    return s;
}

inline RunRecord make_run_record(const OptimizerConfig& config, std::vector<StepRecord> records)
{
    RunSummary derived = summarize(records);
    return RunRecord{config, std::move(records), derived};
}

struct RatePoint {
    double horizon = 0.0;
    double avg_nuclear = 0.0;
    std::size_t runs = 0;
};

/// Least-squares line through (log T, log avg_nuclear).
struct RateFit {
    std::vector<RatePoint> points;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Fits log y = intercept + slope·log T. Needs three or more distinct
/// horizons with positive values.
inline RateFit fit_power_law(std::vector<RatePoint> points)
{
    std::sort(points.begin(), points.end(), [](const RatePoint& a, const RatePoint& b) { return a.horizon < b.horizon; });
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].horizon == points[i - 1].horizon) {
            throw std::invalid_argument("fit_power_law: duplicate horizon");
        }
    }
    if (points.size() < 3) {
        throw std::invalid_argument("fit_power_law: need at least three distinct horizons");
    }
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& p : points) {
        if (!(p.horizon > 0.0) || !(p.avg_nuclear > 0.0)) {
            throw std::invalid_argument("fit_power_law: horizons and values must be positive");
        }
        xs.push_back(std::log(p.horizon));
        ys.push_back(std::log(p.avg_nuclear));
    }
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateFit fit;
    fit.points = std::move(points);
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    // A flat series is fitted perfectly.
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

/// Groups runs by horizon, averages avg_nuclear over the runs at each
/// horizon and fits the log-log slope.
inline RateFit fit_rate(std::span<const RunRecord> runs)
{
    std::map<std::size_t, std::pair<double, std::size_t>> by_horizon;
    for (const auto& run : runs) {
        if (run.config.schedule != Schedule::two_thirds_power) {
            throw std::invalid_argument("fit_rate: runs must use the two-thirds-power schedule");
        }
        auto& [sum, count] = by_horizon[run.config.horizon];
        sum += run.derived.avg_nuclear;
        ++count;
    }
    std::vector<RatePoint> points;
    for (const auto& [horizon, acc] : by_horizon) {
        points.push_back({static_cast<double>(horizon), acc.first / static_cast<double>(acc.second), acc.second});
    }
    return fit_power_law(std::move(points));
}

/// Upper envelope on E‖M_t − ∇f(W_t)‖_F for the dense STORM estimate with
/// constant η, β under L-smoothness:
///   (1−β)^t σ + √(β/(2−β)) σ + √((1−β)²/((2−β)β)) L η r.
inline double lemma1_envelope(double beta, double eta, double sigma, double lipschitz, double rank, double t)
{
    if (!(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("lemma1_envelope: beta must lie in (0, 1)");
    }
    const double keep = 1.0 - beta;
    return std::pow(keep, t) * sigma + std::sqrt(beta / (2.0 - beta)) * sigma +
           std::sqrt(keep * keep / ((2.0 - beta) * beta)) * lipschitz * eta * rank;
}

/// Steps whose gradient norm is at or below this are skipped by rho_hat.
inline constexpr double kStationaryGradient = 1e-12;

/// max_t tail_energy(σ_t, r̂) / ‖∇f(W_t)‖_F over non-stationary steps; 0 when
/// every step is stationary.
inline double rho_hat(std::span<const std::vector<double>> spectra, std::span<const double> grad_norms, std::size_t rank)
{
    if (spectra.size() != grad_norms.size()) {
        throw std::invalid_argument("rho_hat: spectra and gradient norms differ in length");
    }
    double worst = 0.0;
    for (std::size_t t = 0; t < spectra.size(); ++t) {
        if (grad_norms[t] <= kStationaryGradient) {
            continue;
        }
        worst = std::max(worst, tail_energy(spectra[t], rank) / grad_norms[t]);
    }
    return worst;
}

}  // namespace limuon
