#pragma once

// Empirical density power cross entropy (DPCE) and gamma cross entropy (GCE),
// with closed-form and lattice backends for the integral term
//   r = (1 + beta)^{-1} * integral of p^{1 + beta}.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <variant>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "models.hpp"

namespace dpd {

struct ClosedForm {};

/// Riemann sum on M equally spaced nodes per axis with weight 2D/M per axis
/// (D/M on [0, D] for positive-support families).
struct Lattice {
    double extent = 2.0;             // D
    std::size_t nodes_per_axis = 0;  // M for 1-D models, m_side for iso-normal grids
};

struct NoIntegral {};

using IntegralBackend = std::variant<ClosedForm, Lattice, NoIntegral>;

struct ObjectiveValue {
    double value;
    double first_term;
    double r_term;
};

/// p^beta = exp(beta * log p), with p^beta = 0 when log p = -inf.
inline double power_from_log(double log_p, double beta) { return std::exp(beta * log_p); }

/// (1/n) sum_i p(x_i)^beta.
inline double power_mean(const Density& density, const Dataset& data, double beta) {
    if (data.empty()) throw ConfigError("dataset is empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) sum += power_from_log(density.log_pdf(data.point(i)), beta);
    return sum / static_cast<double>(data.size());
}

/// -(beta n)^{-1} sum_i p(x_i)^beta.
inline double empirical_power_term(const ModelSpec& model, const ParamVector& theta, const Dataset& data, double beta) {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    return -power_mean(Density(model, theta), data, beta) / beta;
}

inline double closed_form_r(const ModelSpec& model, const ParamVector& theta, double beta) {
    if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
    detail::check_size(model, theta);
    switch (model.family) {
        case Family::Normal1D: {
            const double var = theta[1] * theta[1] + kVarianceFloor;
            return std::pow(2.0 * std::numbers::pi * var, -beta / 2.0) * std::pow(1.0 + beta, -1.5);
        }
        case Family::IsoNormalD: {
            const double d = static_cast<double>(model.dim);
            return std::pow(2.0 * std::numbers::pi, -d * beta / 2.0) * std::pow(1.0 + beta, -d / 2.0 - 1.0);
        }
        default: throw ConfigError("no closed-form integral term for family " + family_name(model.family));
    }
}

/// Calls visit(node, weight) for every lattice node of the model's support.
template <class Visit>
void for_each_lattice_node(const ModelSpec& model, const Lattice& lattice, Visit&& visit) {
    const std::size_t m = lattice.nodes_per_axis;
    if (m < 2) throw ConfigError("lattice needs at least 2 nodes per axis");
    if (!(lattice.extent > 0.0)) throw ConfigError("lattice extent must be positive");
    const double big_d = lattice.extent;
    const double steps = static_cast<double>(m - 1);
    const double md = static_cast<double>(m);
    if (model.support() == Support::PositiveReals) {
        const double weight = big_d / md;
        for (std::size_t j = 0; j < m; ++j) {
            const double z = big_d * static_cast<double>(j) / steps;
            visit(std::span<const double>(&z, 1), weight);
        }
        return;
    }
    const std::size_t d = model.dim;
    const double weight = std::pow(2.0 * big_d / md, static_cast<double>(d));
    std::vector<std::size_t> index(d, 0);
    std::vector<double> node(d, -big_d);
    while (true) {
        visit(std::span<const double>(node), weight);
        std::size_t k = 0;
        for (; k < d; ++k) {
            if (++index[k] < m) {
                node[k] = -big_d + 2.0 * big_d * static_cast<double>(index[k]) / steps;
                break;
            }
            index[k] = 0;
            node[k] = -big_d;
        }
        if (k == d) break;
    }
}

/// Total node count of the lattice for this model (M, or m_side^d).
inline std::size_t lattice_size(const ModelSpec& model, const Lattice& lattice) {
    if (model.support() == Support::PositiveReals) return lattice.nodes_per_axis;
    std::size_t total = 1;
    for (std::size_t k = 0; k < model.dim; ++k) total *= lattice.nodes_per_axis;
    return total;
}

inline double lattice_r(const ModelSpec& model, const ParamVector& theta, double beta, const Lattice& lattice) {
    const Density density(model, theta);
    double sum = 0.0;
    for_each_lattice_node(model, lattice, [&](std::span<const double> z, double w) {
        sum += w * power_from_log(density.log_pdf(z), 1.0 + beta);
    });
    return sum / (1.0 + beta);
}

inline double integral_term(const ModelSpec& model, const ParamVector& theta, double beta,
                            const IntegralBackend& backend) {
    if (std::holds_alternative<ClosedForm>(backend)) return closed_form_r(model, theta, beta);
    if (const auto* lat = std::get_if<Lattice>(&backend)) return lattice_r(model, theta, beta, *lat);
    throw ConfigError("no integral backend selected");
}

inline ObjectiveValue empirical_dpce(const ModelSpec& model, const ParamVector& theta, const Dataset& data,
                                     double beta, const IntegralBackend& backend) {
    const double first = empirical_power_term(model, theta, data, beta);
    const double r = integral_term(model, theta, beta, backend);
    return {first + r, first, r};
}

/// DPCE of the unnormalized model c * p_theta:
///   -(c^beta / beta) (1/n) sum p^beta + c^{1+beta} r.
inline double scaled_dpce(const ModelSpec& model, const ParamVector& theta, double c, const Dataset& data,
                          double beta, const IntegralBackend& backend) {
    if (!(c > 0.0)) throw ConfigError("scale c must be positive");
    const double a = power_mean(Density(model, theta), data, beta);
    return -std::pow(c, beta) / beta * a + std::pow(c, 1.0 + beta) * integral_term(model, theta, beta, backend);
}

/// Empirical GCE. `log_scale` evaluates the unnormalized model exp(log_scale) * p;
/// the value does not depend on it.
inline double empirical_gce(const ModelSpec& model, const ParamVector& theta, const Dataset& data, double gamma,
                            const IntegralBackend& backend, double log_scale = 0.0) {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    const double mean_power = power_mean(Density(model, theta), data, gamma);
    if (!(mean_power > 0.0)) throw ObjectiveUndefined("model density vanishes at every data point");
    // integral of p^{1+gamma} = (1 + gamma) r
    const double integral = (1.0 + gamma) * integral_term(model, theta, gamma, backend);
    if (!(integral > 0.0)) throw ObjectiveUndefined("integral of the powered density is zero");
    const double log_first = gamma * log_scale + std::log(mean_power);
    const double log_second = (1.0 + gamma) * log_scale + std::log(integral);
    return -log_first / gamma + log_second / (1.0 + gamma);
}

}  // namespace dpd
