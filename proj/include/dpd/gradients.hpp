#pragma once

// Gradients of the empirical DPCE: exact (closed-form families), lattice
// quadrature, and the unbiased importance-sampled stochastic estimate. Also
// the augmented (theta, log c) stochastic gradient used to minimize the GCE
// through the unnormalized model c * p_theta.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <variant>
#include <vector>

#include "dataset.hpp"
#include "divergence.hpp"
#include "errors.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace dpd {

/// Gradient entries above this magnitude flag divergence instead of propagating.
inline constexpr double kGradientBlowup = 1e12;

/// Draw from the current model, so every importance weight is 1.
struct CurrentModel {};

/// Isotropic normal N(mean, sd^2 I); real-line / real-space supports only.
struct FixedNormal {
    std::vector<double> mean;
    double sd = 1.0;
};

using ProposalSpec = std::variant<CurrentModel, FixedNormal>;

struct GradEstimate {
    ParamVector g;
    std::size_t m_used = 0;     // proposal draws, or lattice nodes for quadrature gradients
    std::size_t cost = 0;       // observations plus samples/nodes touched (n + m or n + M)
    bool diverged = false;      // some |g_k| > kGradientBlowup or non-finite
    std::vector<double> draws;  // proposal draws, kept only on request
};

namespace detail {

inline void flag_blowup(GradEstimate& est) {
    for (double v : est.g.values)
        if (!std::isfinite(v) || std::abs(v) > kGradientBlowup) est.diverged = true;
}

// sum_i p(x_i)^power t(x_i) / n into `grad`, and (1/n) sum p^power returned.
inline double data_power_score(const Density& density, const Dataset& data, double power, std::vector<double>& grad) {
    if (data.empty()) throw ConfigError("dataset is empty");
    const std::size_t s = density.dim_param();
    grad.assign(s, 0.0);
    std::vector<double> t(s);
    double mass = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.point(i);
        const double pw = power_from_log(density.log_pdf(x), power);
        if (pw == 0.0) continue;  // 0 * t := 0, also covers points outside the support
        density.score(x, t);
        for (std::size_t k = 0; k < s; ++k) grad[k] += pw * t[k];
        mass += pw;
    }
    const double n = static_cast<double>(data.size());
    for (auto& v : grad) v /= n;
    return mass / n;
}

inline void check_proposal(const ModelSpec& model, const ProposalSpec& proposal) {
    if (const auto* fixed = std::get_if<FixedNormal>(&proposal)) {
        if (model.support() == Support::PositiveReals)
            throw ConfigError("a normal proposal does not share the positive support of " + family_name(model.family));
        if (fixed->mean.size() != model.dim)
            throw ConfigError("proposal mean has dimension " + std::to_string(fixed->mean.size()) + ", model has " +
                              std::to_string(model.dim));
        if (!(fixed->sd > 0.0)) throw ConfigError("proposal sd must be positive");
    }
}

struct ProposalTerm {
    std::vector<double> grad;  // (1/m) sum_j w(y_j) p(y_j)^power t(y_j)
    double mass = 0.0;         // (1/m) sum_j w(y_j) p(y_j)^power
};

// Draws m points from the proposal and forms the importance-weighted averages.
// The draw order is fixed so callers sharing a seed share the same draws.
inline ProposalTerm proposal_power_score(const Density& density, double power, std::size_t m,
                                         const ProposalSpec& proposal, RngStream& rng, std::vector<double>* keep) {
    if (m == 0) throw ConfigError("minibatch size m must be >= 1");
    const ModelSpec& model = density.model();
    check_proposal(model, proposal);
    const std::size_t s = density.dim_param();
    const std::size_t d = model.dim;
    const auto* fixed = std::get_if<FixedNormal>(&proposal);

    ProposalTerm term;
    term.grad.assign(s, 0.0);
    std::vector<double> y(d), t(s);
    for (std::size_t j = 0; j < m; ++j) {
        double weight = 1.0;
        double log_p;
        if (fixed) {
            double sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double z = rng.normal();
                y[k] = fixed->mean[k] + fixed->sd * z;
                sq += z * z;
            }
            const double log_q = -static_cast<double>(d) * (kLogSqrt2Pi + std::log(fixed->sd)) - 0.5 * sq;
            log_p = density.log_pdf(y);
            weight = (log_p == kNegInf) ? 0.0 : std::exp(log_p - log_q);  // 0/0 := 0
        } else {
            density.draw(rng, y);
            log_p = density.log_pdf(y);
        }
        if (keep) keep->insert(keep->end(), y.begin(), y.end());
        const double pw = weight * power_from_log(log_p, power);
        if (pw == 0.0) continue;
        density.score(y, t);
        for (std::size_t k = 0; k < s; ++k) term.grad[k] += pw * t[k];
        term.mass += pw;
    }
    const double md = static_cast<double>(m);
    for (auto& v : term.grad) v /= md;
    term.mass /= md;
    return term;
}

}  // namespace detail

/// Unbiased stochastic gradient of the empirical DPCE:
///   g = -(1/n) sum p^beta t(x_i) + (1/m) sum w(y_j) p^beta t(y_j),  y_j ~ proposal.
inline GradEstimate stochastic_grad_dpd(const ModelSpec& model, const ParamVector& theta, const Dataset& data,
                                        double beta, std::size_t m, const ProposalSpec& proposal, RngStream& rng,
                                        bool keep_draws = false) {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    const Density density(model, theta);
    std::vector<double> data_grad;
    detail::data_power_score(density, data, beta, data_grad);
    GradEstimate est;
    const auto term = detail::proposal_power_score(density, beta, m, proposal, rng, keep_draws ? &est.draws : nullptr);
    est.g.values.resize(data_grad.size());
    for (std::size_t k = 0; k < data_grad.size(); ++k) est.g[k] = -data_grad[k] + term.grad[k];
    est.m_used = m;
    est.cost = data.size() + m;
    detail::flag_blowup(est);
    return est;
}

/// Gradient with the integral term replaced by its lattice quadrature
/// (same nodes and weights as lattice_r).
inline GradEstimate lattice_grad_dpd(const ModelSpec& model, const ParamVector& theta, const Dataset& data,
                                     double beta, const Lattice& lattice) {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    const Density density(model, theta);
    std::vector<double> grad;
    detail::data_power_score(density, data, beta, grad);
    for (auto& v : grad) v = -v;
    const std::size_t s = grad.size();
    std::vector<double> t(s);
    for_each_lattice_node(model, lattice, [&](std::span<const double> z, double w) {
        const double pw = power_from_log(density.log_pdf(z), 1.0 + beta);
        if (pw == 0.0) return;
        density.score(z, t);
        for (std::size_t k = 0; k < s; ++k) grad[k] += w * pw * t[k];
    });
    GradEstimate est;
    est.g = ParamVector(std::move(grad));
    est.m_used = lattice_size(model, lattice);
    est.cost = data.size() + est.m_used;
    detail::flag_blowup(est);
    return est;
}

/// Exact gradient for families with a closed-form integral term.
inline GradEstimate exact_grad_dpd(const ModelSpec& model, const ParamVector& theta, const Dataset& data, double beta) {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (!model.has_closed_form_r())
        throw ConfigError("no closed-form gradient for family " + family_name(model.family));
    const Density density(model, theta);
    std::vector<double> grad;
    detail::data_power_score(density, data, beta, grad);
    for (auto& v : grad) v = -v;
    if (model.family == Family::Normal1D) {
        // r = C (sigma^2)^{-beta/2}, sigma^2 = a^2 + eps  =>  dr/da = -beta a r / sigma^2.
        const double var = theta[1] * theta[1] + kVarianceFloor;
        grad[1] += -beta * theta[1] * closed_form_r(model, theta, beta) / var;
    }
    // Iso-normal: r does not depend on the mean.
    GradEstimate est;
    est.g = ParamVector(std::move(grad));
    est.cost = data.size();
    detail::flag_blowup(est);
    return est;
}

/// Stochastic gradient of DPCE(Q_hat, c p_theta) in (theta, log c) at beta = gamma.
/// The last entry is the log-c component, c * dDPCE/dc.
inline GradEstimate stochastic_grad_gamma(const ModelSpec& model, const ParamVector& theta, double c,
                                          const Dataset& data, double gamma, std::size_t m,
                                          const ProposalSpec& proposal, RngStream& rng, bool keep_draws = false) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("scale c must be positive and finite");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    const Density density(model, theta);
    std::vector<double> data_grad;
    const double a = detail::data_power_score(density, data, gamma, data_grad);
    GradEstimate est;
    const auto term = detail::proposal_power_score(density, gamma, m, proposal, rng, keep_draws ? &est.draws : nullptr);
    const double c_g = std::pow(c, gamma);
    const double c_g1 = c_g * c;
    const std::size_t s = data_grad.size();
    est.g.values.resize(s + 1);
    for (std::size_t k = 0; k < s; ++k) est.g[k] = -c_g * data_grad[k] + c_g1 * term.grad[k];
    // d/dc = -c^{gamma-1} A + c^gamma B, times dc/dlog c = c.
    est.g[s] = -c_g * a + c_g1 * term.mass;
    est.m_used = m;
    est.cost = data.size() + m;
    detail::flag_blowup(est);
    return est;
}

}  // namespace dpd
