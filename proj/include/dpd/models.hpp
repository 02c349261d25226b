#pragma once

// Parametric density families, their scores with respect to unconstrained
// coordinates, samplers, and the unconstrained <-> natural parameter maps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace dpd {

/// Floor added to squared scale coordinates of normal and mixture variances.
inline constexpr double kVarianceFloor = 1e-6;

enum class Family { Normal1D, IsoNormalD, InverseNormal, Gompertz, NormalMixture2 };
enum class Support { RealLine, PositiveReals, RealSpace };

struct ModelSpec {
    Family family = Family::Normal1D;
    std::size_t dim = 1;  // dimension of an observation

    static ModelSpec normal() { return {Family::Normal1D, 1}; }
    static ModelSpec iso_normal(std::size_t d) {
        if (d == 0) throw ConfigError("iso-normal dimension must be >= 1");
        return {Family::IsoNormalD, d};
    }
    static ModelSpec inverse_normal() { return {Family::InverseNormal, 1}; }
    static ModelSpec gompertz() { return {Family::Gompertz, 1}; }
    static ModelSpec mixture() { return {Family::NormalMixture2, 1}; }

    std::size_t dim_param() const {
        switch (family) {
            case Family::Normal1D: return 2;
            case Family::IsoNormalD: return dim;
            case Family::InverseNormal: return 2;
            case Family::Gompertz: return 2;
            case Family::NormalMixture2: return 5;
        }
        return 0;
    }

    Support support() const {
        switch (family) {
            case Family::InverseNormal:
            case Family::Gompertz: return Support::PositiveReals;
            case Family::IsoNormalD: return Support::RealSpace;
            default: return Support::RealLine;
        }
    }

    bool has_closed_form_r() const { return family == Family::Normal1D || family == Family::IsoNormalD; }

    bool operator==(const ModelSpec&) const = default;
};

inline std::string family_name(Family f) {
    switch (f) {
        case Family::Normal1D: return "normal";
        case Family::IsoNormalD: return "iso-normal";
        case Family::InverseNormal: return "inverse-normal";
        case Family::Gompertz: return "gompertz";
        case Family::NormalMixture2: return "mixture";
    }
    return "?";
}

/// Point in the unconstrained optimization space R^s.
struct ParamVector {
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}
    ParamVector(std::initializer_list<double> v) : values(v) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    bool all_finite() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
    bool operator==(const ParamVector&) const = default;
};

struct NormalParams {
    double mu;
    double sigma;
};
struct IsoNormalParams {
    std::vector<double> mean;
};
struct InverseNormalParams {
    double mu;
    double lambda;
};
struct GompertzParams {
    double omega;
    double lambda;
};
struct MixtureParams {
    double mu1;
    double sigma1;
    double mu2;
    double sigma2;
    double alpha;  // weight of component 1
};

using NaturalParams =
    std::variant<NormalParams, IsoNormalParams, InverseNormalParams, GompertzParams, MixtureParams>;

/// Natural parameters flattened in their documented field order.
inline std::vector<double> flatten(const NaturalParams& p) {
    return std::visit(
        [](const auto& q) -> std::vector<double> {
            using T = std::decay_t<decltype(q)>;
            if constexpr (std::is_same_v<T, NormalParams>) return {q.mu, q.sigma};
            else if constexpr (std::is_same_v<T, IsoNormalParams>) return q.mean;
            else if constexpr (std::is_same_v<T, InverseNormalParams>) return {q.mu, q.lambda};
            else if constexpr (std::is_same_v<T, GompertzParams>) return {q.omega, q.lambda};
            else return {q.mu1, q.sigma1, q.mu2, q.sigma2, q.alpha};
        },
        p);
}

inline std::vector<std::string> natural_names(const ModelSpec& model) {
    switch (model.family) {
        case Family::Normal1D: return {"mu", "sigma"};
        case Family::InverseNormal: return {"mu", "lambda"};
        case Family::Gompertz: return {"omega", "lambda"};
        case Family::NormalMixture2: return {"mu1", "sigma1", "mu2", "sigma2", "alpha"};
        case Family::IsoNormalD: {
            std::vector<std::string> names;
            for (std::size_t i = 1; i <= model.dim; ++i) names.push_back("mean_" + std::to_string(i));
            return names;
        }
    }
    return {};
}

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline double logit(double a) { return std::log(a) - std::log1p(-a); }

inline double log_normal_pdf(double x, double mu, double var) {
    const double d = x - mu;
    return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

inline void check_size(const ModelSpec& model, const ParamVector& theta) {
    if (theta.size() != model.dim_param())
        throw InvalidParameter("parameter vector has " + std::to_string(theta.size()) + " entries, " +
                               family_name(model.family) + " expects " + std::to_string(model.dim_param()));
    if (!theta.all_finite()) throw InvalidParameter("parameter vector has non-finite entries");
}

}  // namespace detail

inline NaturalParams to_natural(const ModelSpec& model, const ParamVector& theta) {
    detail::check_size(model, theta);
    switch (model.family) {
        case Family::Normal1D:
            return NormalParams{theta[0], std::sqrt(theta[1] * theta[1] + kVarianceFloor)};
        case Family::IsoNormalD: return IsoNormalParams{theta.values};
        case Family::InverseNormal: return InverseNormalParams{std::exp(theta[0]), std::exp(theta[1])};
        case Family::Gompertz: return GompertzParams{std::exp(theta[0]), std::exp(theta[1])};
        case Family::NormalMixture2:
            return MixtureParams{theta[1], std::sqrt(theta[2] * theta[2] + kVarianceFloor), theta[3],
                                 std::sqrt(theta[4] * theta[4] + kVarianceFloor), detail::sigmoid(theta[0])};
    }
    throw ConfigError("unknown family");
}

namespace detail {

// Nonnegative root of a^2 + floor = sigma^2.
inline double scale_coordinate(double sigma, const char* name) {
    const double excess = sigma * sigma - kVarianceFloor;
    if (!(excess >= 0.0) || !std::isfinite(sigma))
        throw RangeError(std::string(name) + "^2 must be at least the variance floor 1e-6");
    return std::sqrt(excess);
}

inline double log_coordinate(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw RangeError(std::string(name) + " must be positive and finite");
    return std::log(v);
}

}  // namespace detail

inline ParamVector from_natural(const ModelSpec& model, const NaturalParams& natural) {
    auto wrong = [&] { return RangeError("natural parameters do not match family " + family_name(model.family)); };
    switch (model.family) {
        case Family::Normal1D: {
            const auto* p = std::get_if<NormalParams>(&natural);
            if (!p) throw wrong();
            if (!std::isfinite(p->mu)) throw RangeError("mu must be finite");
            return ParamVector{p->mu, detail::scale_coordinate(p->sigma, "sigma")};
        }
        case Family::IsoNormalD: {
            const auto* p = std::get_if<IsoNormalParams>(&natural);
            if (!p || p->mean.size() != model.dim) throw wrong();
            ParamVector out(p->mean);
            if (!out.all_finite()) throw RangeError("mean must be finite");
            return out;
        }
        case Family::InverseNormal: {
            const auto* p = std::get_if<InverseNormalParams>(&natural);
            if (!p) throw wrong();
            return ParamVector{detail::log_coordinate(p->mu, "mu"), detail::log_coordinate(p->lambda, "lambda")};
        }
        case Family::Gompertz: {
            const auto* p = std::get_if<GompertzParams>(&natural);
            if (!p) throw wrong();
            return ParamVector{detail::log_coordinate(p->omega, "omega"),
                               detail::log_coordinate(p->lambda, "lambda")};
        }
        case Family::NormalMixture2: {
            const auto* p = std::get_if<MixtureParams>(&natural);
            if (!p) throw wrong();
            if (!(p->alpha > 0.0 && p->alpha < 1.0)) throw RangeError("alpha must lie strictly inside (0, 1)");
            if (!std::isfinite(p->mu1) || !std::isfinite(p->mu2)) throw RangeError("means must be finite");
            return ParamVector{detail::logit(p->alpha), p->mu1, detail::scale_coordinate(p->sigma1, "sigma1"),
                               p->mu2, detail::scale_coordinate(p->sigma2, "sigma2")};
        }
    }
    throw ConfigError("unknown family");
}

/// A family bound to one parameter value. Caches natural parameters so
/// repeated evaluations over data or lattice nodes skip the maps.
class Density {
public:
    Density(const ModelSpec& model, const ParamVector& theta) : model_(model), theta_(theta) {
        detail::check_size(model, theta);
        switch (model.family) {
            case Family::Normal1D:
                a_ = theta[0];
                var1_ = theta[1] * theta[1] + kVarianceFloor;
                break;
            case Family::IsoNormalD: break;
            case Family::InverseNormal:
            case Family::Gompertz:
                a_ = std::exp(theta[0]);
                b_ = std::exp(theta[1]);
                break;
            case Family::NormalMixture2:
                alpha_ = detail::sigmoid(theta[0]);
                a_ = theta[1];
                var1_ = theta[2] * theta[2] + kVarianceFloor;
                b_ = theta[3];
                var2_ = theta[4] * theta[4] + kVarianceFloor;
                break;
        }
    }

    const ModelSpec& model() const { return model_; }
    const ParamVector& theta() const { return theta_; }
    std::size_t dim_param() const { return theta_.size(); }

    /// log p(x); -inf outside the support.
    double log_pdf(std::span<const double> x) const {
        switch (model_.family) {
            case Family::Normal1D: return detail::log_normal_pdf(x[0], a_, var1_);
            case Family::IsoNormalD: {
                double sq = 0.0;
                for (std::size_t k = 0; k < model_.dim; ++k) {
                    const double d = x[k] - theta_[k];
                    sq += d * d;
                }
                return -static_cast<double>(model_.dim) * detail::kLogSqrt2Pi - 0.5 * sq;
            }
            case Family::InverseNormal: {
                const double v = x[0];
                if (!(v > 0.0)) return detail::kNegInf;
                const double mu = a_, lambda = b_, d = v - mu;
                return 0.5 * (std::log(lambda) - std::log(2.0 * std::numbers::pi) - 3.0 * std::log(v)) -
                       lambda * d * d / (2.0 * mu * mu * v);
            }
            case Family::Gompertz: {
                const double v = x[0];
                if (!(v >= 0.0)) return detail::kNegInf;
                const double omega = a_, lambda = b_;
                return std::log(lambda) + omega * v - (lambda / omega) * std::expm1(omega * v);
            }
            case Family::NormalMixture2: {
                const double l1 = std::log(alpha_) + detail::log_normal_pdf(x[0], a_, var1_);
                const double l2 = std::log1p(-alpha_) + detail::log_normal_pdf(x[0], b_, var2_);
                const double hi = std::max(l1, l2);
                if (hi == detail::kNegInf) return hi;
                return hi + std::log(std::exp(l1 - hi) + std::exp(l2 - hi));
            }
        }
        return detail::kNegInf;
    }

    double log_pdf(double x) const { return log_pdf(std::span<const double>(&x, 1)); }

    bool in_support_interior(std::span<const double> x) const {
        if (model_.support() != Support::PositiveReals) return true;
        // x = 0 is accepted for Gompertz since p(0) = lambda is finite.
        return model_.family == Family::Gompertz ? x[0] >= 0.0 : x[0] > 0.0;
    }

    /// d log p(x) / d theta in unconstrained coordinates, written to `out`.
    void score(std::span<const double> x, std::span<double> out) const {
        if (!in_support_interior(x)) throw DomainError("score requested outside the support");
        switch (model_.family) {
            case Family::Normal1D: {
                const double d = x[0] - a_;
                out[0] = d / var1_;
                out[1] = 2.0 * theta_[1] * (d * d / var1_ - 1.0) / (2.0 * var1_);
                return;
            }
            case Family::IsoNormalD:
                for (std::size_t k = 0; k < model_.dim; ++k) out[k] = x[k] - theta_[k];
                return;
            case Family::InverseNormal: {
                const double v = x[0], mu = a_, lambda = b_, d = v - mu;
                const double d_mu = lambda * d / (mu * mu * mu);
                const double d_lambda = 1.0 / (2.0 * lambda) - d * d / (2.0 * mu * mu * v);
                out[0] = mu * d_mu;
                out[1] = lambda * d_lambda;
                return;
            }
            case Family::Gompertz: {
                const double v = x[0], omega = a_, lambda = b_;
                const double e = std::exp(omega * v);
                const double one_minus_e = -std::expm1(omega * v);
                const double d_omega = v - lambda * (one_minus_e / (omega * omega) + v * e / omega);
                const double d_lambda = 1.0 / lambda + one_minus_e / omega;
                out[0] = omega * d_omega;
                out[1] = lambda * d_lambda;
                return;
            }
            case Family::NormalMixture2: {
                const double l1 = std::log(alpha_) + detail::log_normal_pdf(x[0], a_, var1_);
                const double l2 = std::log1p(-alpha_) + detail::log_normal_pdf(x[0], b_, var2_);
                // Responsibility of component 1, computed stably.
                const double c1 = detail::sigmoid(l1 - l2);
                const double c2 = 1.0 - c1;
                const double d1 = x[0] - a_, d2 = x[0] - b_;
                out[0] = c1 - alpha_;
                out[1] = c1 * d1 / var1_;
                out[2] = c1 * theta_[2] * (d1 * d1 / var1_ - 1.0) / var1_;
                out[3] = c2 * d2 / var2_;
                out[4] = c2 * theta_[4] * (d2 * d2 / var2_ - 1.0) / var2_;
                return;
            }
        }
    }

    std::vector<double> score(std::span<const double> x) const {
        std::vector<double> out(dim_param());
        score(x, out);
        return out;
    }

    /// One draw written into `out` (length model().dim).
    void draw(RngStream& rng, std::span<double> out) const {
        switch (model_.family) {
            case Family::Normal1D: out[0] = a_ + std::sqrt(var1_) * rng.normal(); return;
            case Family::IsoNormalD:
                for (std::size_t k = 0; k < model_.dim; ++k) out[k] = theta_[k] + rng.normal();
                return;
            case Family::InverseNormal: {
                // Michael-Schucany-Haas transformation.
                const double mu = a_, lambda = b_;
                const double nu = rng.normal();
                const double y = nu * nu;
                const double mu_y = mu * y;
                const double root = std::sqrt(4.0 * mu_y * lambda + mu_y * mu_y);
                double v = mu + mu * mu_y / (2.0 * lambda) - mu / (2.0 * lambda) * root;
                // Cancellation guard for very large y: the smaller root is mu^2/(larger root).
                if (!(v > 0.0)) v = mu * mu / (mu + mu * mu_y / (2.0 * lambda) + mu / (2.0 * lambda) * root);
                const double u = rng.uniform();
                out[0] = (u <= mu / (mu + v)) ? v : mu * mu / v;
                return;
            }
            case Family::Gompertz: {
                const double omega = a_, lambda = b_;
                const double u = rng.uniform();
                out[0] = std::log1p(-(omega / lambda) * std::log1p(-u)) / omega;
                return;
            }
            case Family::NormalMixture2: {
                const bool first = rng.bernoulli(alpha_);
                out[0] = first ? a_ + std::sqrt(var1_) * rng.normal() : b_ + std::sqrt(var2_) * rng.normal();
                return;
            }
        }
    }

private:
    ModelSpec model_;
    ParamVector theta_;
    double a_ = 0.0, b_ = 0.0;  // family-specific cached natural parameters
    double var1_ = 1.0, var2_ = 1.0;
    double alpha_ = 0.5;
};

inline double log_pdf(const ModelSpec& model, const ParamVector& theta, std::span<const double> x) {
    return Density(model, theta).log_pdf(x);
}

inline double log_pdf(const ModelSpec& model, const ParamVector& theta, double x) {
    return Density(model, theta).log_pdf(x);
}

inline std::vector<double> score(const ModelSpec& model, const ParamVector& theta, std::span<const double> x) {
    return Density(model, theta).score(x);
}

inline std::vector<double> score(const ModelSpec& model, const ParamVector& theta, double x) {
    return Density(model, theta).score(std::span<const double>(&x, 1));
}

/// k i.i.d. draws, flattened row-major (k * model.dim values).
inline std::vector<double> sample(const ModelSpec& model, const ParamVector& theta, RngStream& rng, std::size_t k) {
    if (k == 0) throw ConfigError("sample count must be >= 1");
    const Density density(model, theta);
    std::vector<double> out(k * model.dim);
    for (std::size_t i = 0; i < k; ++i) density.draw(rng, std::span<double>(out).subspan(i * model.dim, model.dim));
    return out;
}

}  // namespace dpd
