#pragma once

// Maximum likelihood initializers, returned in unconstrained coordinates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace dpd {

struct NewtonConfig {
    std::size_t max_iter = 200;
    double tol = 1e-12;
    double lo = 1e-4;
    double hi = 20.0;
};

namespace detail {

inline std::vector<double> scalar_values(const Dataset& data, const char* who) {
    if (data.dim != 1) throw ConfigError(std::string(who) + " needs one-dimensional data");
    return data.values;
}

}  // namespace detail

inline ParamVector mle_normal(const Dataset& data) {
    const auto x = detail::scalar_values(data, "mle_normal");
    if (x.size() < 2) throw InitFailure("normal MLE needs at least 2 observations");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    if (!(var > 0.0)) throw InitFailure("sample variance is zero");
    if (var < kVarianceFloor) var = kVarianceFloor;
    return from_natural(ModelSpec::normal(), NormalParams{mean, std::sqrt(var)});
}

/// Coordinate-wise sample mean.
inline ParamVector mle_iso_normal(const Dataset& data) {
    if (data.empty()) throw InitFailure("iso-normal MLE needs at least 1 observation");
    std::vector<double> mean(data.dim, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.point(i);
        for (std::size_t k = 0; k < data.dim; ++k) mean[k] += x[k];
    }
    for (auto& v : mean) v /= static_cast<double>(data.size());
    return ParamVector(std::move(mean));
}

/// mu = mean, lambda = 1 / mean(1/x_i - 1/mu).
inline ParamVector mle_inverse_normal(const Dataset& data) {
    const auto x = detail::scalar_values(data, "mle_inverse_normal");
    if (x.empty()) throw InitFailure("inverse-normal MLE needs data");
    for (double v : x)
        if (!(v > 0.0)) throw InitFailure("inverse-normal data must be positive");
    const double n = static_cast<double>(x.size());
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= n;
    double denom = 0.0;
    for (double v : x) denom += 1.0 / v - 1.0 / mu;
    denom /= n;
    if (!(denom > 0.0)) throw InitFailure("degenerate sample: mean(1/x - 1/mean) is not positive");
    return from_natural(ModelSpec::inverse_normal(), InverseNormalParams{mu, 1.0 / denom});
}

namespace detail {

// Profile score equation for the Gompertz omega after substituting lambda(omega):
//   h(w) = sum x + sum{(1 - e^{w x})/w + x e^{w x}} / mean(1 - e^{w x}).
struct GompertzProfile {
    const std::vector<double>& x;
    double sum_x = 0.0;

    explicit GompertzProfile(const std::vector<double>& data) : x(data) {
        for (double v : x) sum_x += v;
    }

    // Returns h(w) and writes h'(w).
    double eval(double w, double& deriv) const {
        const double n = static_cast<double>(x.size());
        double a = 0.0, da = 0.0, b = 0.0, db = 0.0;
        for (double v : x) {
            const double e = std::exp(w * v);
            const double one_minus_e = -std::expm1(w * v);
            a += one_minus_e / w + v * e;
            da += -one_minus_e / (w * w) + v * v * e;
            b += one_minus_e;
            db += -v * e;
        }
        b /= n;
        db /= n;
        deriv = (da * b - a * db) / (b * b);
        return sum_x + a / b;
    }

    double eval(double w) const {
        double unused;
        return eval(w, unused);
    }

    double lambda(double w) const {
        double b = 0.0;
        for (double v : x) b += -std::expm1(w * v);
        return -w / (b / static_cast<double>(x.size()));
    }
};

}  // namespace detail

/// Safeguarded Newton-Raphson on the profile equation for omega, bisection
/// fallback inside the bracket; then lambda in closed form.
inline ParamVector mle_gompertz(const Dataset& data, const NewtonConfig& cfg = {}) {
    const auto x = detail::scalar_values(data, "mle_gompertz");
    if (x.empty()) throw InitFailure("Gompertz MLE needs data");
    bool any_positive = false;
    for (double v : x) {
        if (!(v >= 0.0)) throw InitFailure("Gompertz data must be nonnegative");
        any_positive |= v > 0.0;
    }
    if (!any_positive) throw InitFailure("Gompertz data are all zero");
    if (!(cfg.lo > 0.0 && cfg.lo < cfg.hi)) throw ConfigError("Newton bracket must satisfy 0 < lo < hi");

    const detail::GompertzProfile profile(x);
    double lo = cfg.lo, hi = cfg.hi;
    double f_lo = profile.eval(lo);
    double f_hi = profile.eval(hi);
    // Large brackets overflow e^{w x}; shrink the upper end until it evaluates.
    while (!std::isfinite(f_hi) && hi > lo * 1.0001) {
        hi = lo + 0.5 * (hi - lo);
        f_hi = profile.eval(hi);
    }
    if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || (f_lo > 0) == (f_hi > 0))
        throw InitFailure("Gompertz profile equation has no sign change in [" + std::to_string(cfg.lo) + ", " +
                          std::to_string(cfg.hi) + "]");

    double w = 0.5 * (lo + hi);
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        double deriv = 0.0;
        const double f = profile.eval(w, deriv);
        if (f == 0.0) break;
        if ((f > 0) == (f_lo > 0)) {
            lo = w;
            f_lo = f;
        } else {
            hi = w;
        }
        double next = w - f / deriv;
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        const double step = std::abs(next - w);
        w = next;
        if (step <= cfg.tol * std::max(1.0, std::abs(w)) || hi - lo <= cfg.tol * std::max(1.0, std::abs(w))) break;
    }
    const double lambda = profile.lambda(w);
    if (!(w > 0.0) || !(lambda > 0.0)) throw InitFailure("Gompertz MLE left the positive orthant");
    return from_natural(ModelSpec::gompertz(), GompertzParams{w, lambda});
}

struct MixtureFit {
    ParamVector params;
    double log_likelihood = -std::numeric_limits<double>::infinity();
    std::vector<double> log_likelihood_history;  // best restart, one entry per EM iteration
    std::size_t restarts_collapsed = 0;
};

struct EmConfig {
    std::size_t restarts = 5;
    std::size_t max_iter = 500;
    double tol = 1e-10;
    double min_weight = 1e-6;
};

namespace detail {

// One EM run from a split of the sorted sample at index `cut`.
inline std::optional<MixtureFit> em_from_split(const std::vector<double>& sorted, std::size_t cut, const EmConfig& cfg) {
    const std::size_t n = sorted.size();
    auto moments = [&](std::size_t b, std::size_t e) {
        double mean = 0.0;
        for (std::size_t i = b; i < e; ++i) mean += sorted[i];
        mean /= static_cast<double>(e - b);
        double var = 0.0;
        for (std::size_t i = b; i < e; ++i) var += (sorted[i] - mean) * (sorted[i] - mean);
        var /= static_cast<double>(e - b);
        return std::pair{mean, std::max(var, kVarianceFloor)};
    };
    auto [m1, v1] = moments(0, cut);
    auto [m2, v2] = moments(cut, n);
    double alpha = static_cast<double>(cut) / static_cast<double>(n);

    MixtureFit fit;
    std::vector<double> resp(n);
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        // E-step; the log-likelihood is that of the parameters entering this step.
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l1 = std::log(alpha) + log_normal_pdf(sorted[i], m1, v1);
            const double l2 = std::log1p(-alpha) + log_normal_pdf(sorted[i], m2, v2);
            const double hi = std::max(l1, l2);
            ll += hi + std::log(std::exp(l1 - hi) + std::exp(l2 - hi));
            resp[i] = sigmoid(l1 - l2);
        }
        fit.log_likelihood_history.push_back(ll);
        if (it > 0 && ll - prev <= cfg.tol * std::max(1.0, std::abs(ll))) break;
        prev = ll;
        // M-step with variance floor.
        double w1 = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w1 += resp[i];
            s1 += resp[i] * sorted[i];
            s2 += (1.0 - resp[i]) * sorted[i];
        }
        const double w2 = static_cast<double>(n) - w1;
        alpha = w1 / static_cast<double>(n);
        if (alpha < cfg.min_weight || alpha > 1.0 - cfg.min_weight) return std::nullopt;
        m1 = s1 / w1;
        m2 = s2 / w2;
        double q1 = 0.0, q2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            q1 += resp[i] * (sorted[i] - m1) * (sorted[i] - m1);
            q2 += (1.0 - resp[i]) * (sorted[i] - m2) * (sorted[i] - m2);
        }
        v1 = std::max(q1 / w1, kVarianceFloor);
        v2 = std::max(q2 / w2, kVarianceFloor);
    }
    const MixtureParams p{m1, std::sqrt(v1), m2, std::sqrt(v2), alpha};
    fit.params = from_natural(ModelSpec::mixture(), p);
    fit.log_likelihood = fit.log_likelihood_history.back();
    return fit;
}

}  // namespace detail

/// Best-of-k EM for the two-component normal mixture. Restart 0 splits the
/// sorted sample at the median, later restarts at random quantiles in [0.1, 0.9].
inline MixtureFit fit_mixture_em(const Dataset& data, RngStream& rng, const EmConfig& cfg = {}) {
    auto sorted = detail::scalar_values(data, "mle_mixture");
    if (sorted.size() < 10) throw InitFailure("mixture EM needs at least 10 observations");
    if (cfg.restarts == 0) throw ConfigError("EM needs at least one restart");
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    MixtureFit best;
    bool found = false;
    std::size_t collapsed = 0;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        const double q = r == 0 ? 0.5 : 0.1 + 0.8 * rng.uniform();
        const std::size_t cut = std::clamp<std::size_t>(static_cast<std::size_t>(q * static_cast<double>(n)), 1, n - 1);
        auto fit = detail::em_from_split(sorted, cut, cfg);
        if (!fit) {
            ++collapsed;
            continue;
        }
        if (!found || fit->log_likelihood > best.log_likelihood) {
            best = std::move(*fit);
            found = true;
        }
    }
    if (!found) throw InitFailure("every EM restart collapsed a component");
    best.restarts_collapsed = collapsed;
    return best;
}

inline ParamVector mle_mixture(const Dataset& data, std::size_t k_restarts, RngStream& rng) {
    EmConfig cfg;
    cfg.restarts = k_restarts;
    return fit_mixture_em(data, rng, cfg).params;
}

/// Family dispatch with default settings.
inline ParamVector maximum_likelihood(const ModelSpec& model, const Dataset& data, RngStream& rng) {
    if (data.dim != model.dim) throw ConfigError("data dimension does not match the model");
    switch (model.family) {
        case Family::Normal1D: return mle_normal(data);
        case Family::IsoNormalD: return mle_iso_normal(data);
        case Family::InverseNormal: return mle_inverse_normal(data);
        case Family::Gompertz: return mle_gompertz(data);
        case Family::NormalMixture2: return mle_mixture(data, EmConfig{}.restarts, rng);
    }
    throw ConfigError("unknown family");
}

}  // namespace dpd
