#pragma once

// Contaminated synthetic samples Q = (1 - xi) P_truth + xi R.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace dpd {

/// Outlier distribution R: isotropic normal N(mean, sd^2 I).
struct OutlierSpec {
    std::vector<double> mean{10.0};
    double sd = 1.0;
};

struct ContaminationSpec {
    ModelSpec model = ModelSpec::normal();
    NaturalParams truth = NormalParams{0.0, 1.0};
    OutlierSpec outlier;
    double xi = 0.1;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    bool fixed_outlier_count = false;  // exactly round(xi * n) outliers instead of Bernoulli mixing
};

inline void validate(const ContaminationSpec& spec) {
    if (!(spec.xi >= 0.0 && spec.xi < 1.0)) throw ConfigError("contamination ratio xi must lie in [0, 1)");
    if (spec.n == 0) throw ConfigError("sample size n must be >= 1");
    if (spec.outlier.mean.size() != spec.model.dim)
        throw ConfigError("outlier mean has dimension " + std::to_string(spec.outlier.mean.size()) +
                          ", model observations have " + std::to_string(spec.model.dim));
    if (!(spec.outlier.sd > 0.0)) throw ConfigError("outlier sd must be positive");
    from_natural(spec.model, spec.truth);
}

/// Each point independently comes from R with probability xi, else from the truth.
inline Dataset contaminated_sample(const ContaminationSpec& spec, RngStream& rng) {
    validate(spec);
    const std::size_t d = spec.model.dim;
    const Density truth(spec.model, from_natural(spec.model, spec.truth));

    std::vector<Origin> origin(spec.n, Origin::Inlier);
    if (spec.fixed_outlier_count) {
        const auto k = static_cast<std::size_t>(std::llround(spec.xi * static_cast<double>(spec.n)));
        std::vector<std::size_t> idx(spec.n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // Partial Fisher-Yates: the first k shuffled indices are outliers.
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(spec.n - i));
            std::swap(idx[i], idx[j]);
            origin[idx[i]] = Origin::Outlier;
        }
    } else {
        for (auto& o : origin) o = rng.bernoulli(spec.xi) ? Origin::Outlier : Origin::Inlier;
    }

    Dataset data;
    data.dim = d;
    data.values.resize(spec.n * d);
    data.origin = origin;
    for (std::size_t i = 0; i < spec.n; ++i) {
        std::span<double> x(data.values.data() + i * d, d);
        if (origin[i] == Origin::Outlier) {
            for (std::size_t k = 0; k < d; ++k) x[k] = spec.outlier.mean[k] + spec.outlier.sd * rng.normal();
        } else {
            truth.draw(rng, x);
        }
    }
    data.provenance = Provenance{spec.xi, spec.seed, spec.fixed_outlier_count, "synthetic"};
    return data;
}

inline Dataset contaminated_sample(const ContaminationSpec& spec) {
    RngStream rng(spec.seed);
    return contaminated_sample(spec, rng);
}

}  // namespace dpd
