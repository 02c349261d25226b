#pragma once

// SGD and constant-rate GD loops over any gradient source, with trace capture
// and the random-iterate selection rule.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "gradients.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace dpd {

/// Any parameter magnitude above this (or a non-finite one) stops the run.
inline constexpr double kParameterBlowup = 1e8;

/// eta_t = eta0 * rate^floor(t / period).
struct StepDecay {
    double eta0 = 1.0;
    double rate = 0.7;
    std::size_t period = 25;
};

struct Constant {
    double omega = 0.1;
};

using Schedule = std::variant<StepDecay, Constant>;

inline void validate(const Schedule& schedule) {
    if (const auto* s = std::get_if<StepDecay>(&schedule)) {
        if (!(s->eta0 > 0.0)) throw ConfigError("eta0 must be positive");
        if (!(s->rate > 0.0 && s->rate < 1.0)) throw ConfigError("decay rate must lie in (0, 1)");
        if (s->period == 0) throw ConfigError("decay period must be >= 1");
    } else if (!(std::get<Constant>(schedule).omega >= 0.0)) {
        throw ConfigError("constant learning rate must be nonnegative");
    }
}

inline double learning_rate(const Schedule& schedule, std::size_t t) {
    if (const auto* s = std::get_if<StepDecay>(&schedule))
        return s->eta0 * std::pow(s->rate, static_cast<double>(t / s->period));
    return std::get<Constant>(schedule).omega;
}

/// T^{-1} sum_{t=1}^T eta_t: the constant rate matched to a schedule.
inline double mean_learning_rate(const Schedule& schedule, std::size_t T) {
    if (T == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 1; t <= T; ++t) sum += learning_rate(schedule, t);
    return sum / static_cast<double>(T);
}

struct TraceRecord {
    std::size_t t = 0;
    double eta = 0.0;
    ParamVector params;
    std::optional<double> objective_exact;
    std::optional<double> scale_c;
    std::optional<double> mse;
    std::size_t complexity = 0;
};

/// Per-iteration observers; each may be empty. Evaluated after the update at
/// iteration t and once at t = 0.
struct Monitors {
    std::function<std::optional<double>(const ParamVector&)> objective;
    std::function<std::optional<double>(const ParamVector&)> scale;
    std::function<std::optional<double>(const ParamVector&)> mse;
};

struct RunResult {
    std::vector<TraceRecord> trace;  // t = 0..T, shorter when diverged
    ParamVector final_params;
    std::optional<std::size_t> selected_tau;
    bool diverged = false;
};

namespace detail {

inline TraceRecord observe(std::size_t t, double eta, const ParamVector& params, std::size_t complexity,
                           const Monitors& monitors) {
    TraceRecord rec;
    rec.t = t;
    rec.eta = eta;
    rec.params = params;
    rec.complexity = complexity;
    if (monitors.objective) rec.objective_exact = monitors.objective(params);
    if (monitors.scale) rec.scale_c = monitors.scale(params);
    if (monitors.mse) rec.mse = monitors.mse(params);
    return rec;
}

inline bool blown_up(const ParamVector& p) {
    for (double v : p.values)
        if (!std::isfinite(v) || std::abs(v) > kParameterBlowup) return true;
    return false;
}

template <class Step>
RunResult descend(const ParamVector& theta0, std::size_t T, const Schedule& schedule, const Monitors& monitors,
                  Step&& step) {
    if (!theta0.all_finite()) throw InvalidParameter("initial parameters have non-finite entries");
    validate(schedule);
    RunResult result;
    result.trace.reserve(T + 1);
    ParamVector theta = theta0;
    std::size_t complexity = 0;
    result.trace.push_back(observe(0, 0.0, theta, 0, monitors));
    for (std::size_t t = 1; t <= T; ++t) {
        const double eta = learning_rate(schedule, t);
        const GradEstimate est = step(theta);
        if (est.g.size() != theta.size()) throw ConfigError("gradient source returned the wrong dimension");
        for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= eta * est.g[k];
        complexity += est.cost;
        if (est.diverged || blown_up(theta)) {
            TraceRecord rec;
            rec.t = t;
            rec.eta = eta;
            rec.params = theta;
            rec.complexity = complexity;
            result.trace.push_back(std::move(rec));
            result.diverged = true;
            break;
        }
        result.trace.push_back(observe(t, eta, theta, complexity, monitors));
    }
    result.final_params = theta;
    return result;
}

}  // namespace detail

/// theta_t = theta_{t-1} - eta_t g(theta_{t-1}; zeta_{t-1}), t = 1..T.
/// `source(theta, rng)` returns a GradEstimate.
template <class GradSource>
RunResult sgd_run(GradSource&& source, const ParamVector& theta0, const Schedule& schedule, std::size_t T,
                  RngStream& rng, const Monitors& monitors = {}) {
    return detail::descend(theta0, T, schedule, monitors,
                           [&](const ParamVector& theta) { return source(theta, rng); });
}

/// Constant-rate descent over a deterministic source `source(theta)`.
template <class GradSource>
RunResult gd_run(GradSource&& source, const ParamVector& theta0, double omega, std::size_t T,
                 const Monitors& monitors = {}) {
    return detail::descend(theta0, T, Constant{omega}, monitors,
                           [&](const ParamVector& theta) { return source(theta); });
}

/// P(tau = k) proportional to 2 eta_k - L eta_k^2, k = 1..T.
inline std::vector<double> tau_weights(const std::vector<double>& etas, double L) {
    if (etas.empty()) throw ConfigError("empty learning-rate sequence");
    if (!(L > 0.0)) throw ConfigError("Lipschitz constant L must be positive");
    std::vector<double> w(etas.size());
    double total = 0.0;
    for (std::size_t k = 0; k < etas.size(); ++k) {
        if (!(etas[k] > 0.0) || !(etas[k] < 2.0 / L))
            throw ConfigError("learning rate " + std::to_string(etas[k]) + " violates 0 < eta < 2/L");
        w[k] = 2.0 * etas[k] - L * etas[k] * etas[k];
        total += w[k];
    }
    for (auto& v : w) v /= total;
    return w;
}

/// Random iterate index tau in {1..T}.
inline std::size_t select_tau(const std::vector<double>& etas, double L, RngStream& rng) {
    const auto w = tau_weights(etas, L);
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u < acc) return k + 1;
    }
    return w.size();
}

}  // namespace dpd
