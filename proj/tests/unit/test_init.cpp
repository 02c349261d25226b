#include <dpd/datagen.hpp>
#include <dpd/init.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace dpd;

namespace {

double log_likelihood(const ModelSpec& model, const ParamVector& th, const Dataset& data) {
    const Density density(model, th);
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += density.log_pdf(data.point(i));
    return s;
}

std::vector<double> mean_score(const ModelSpec& model, const ParamVector& th, const Dataset& data) {
    const Density density(model, th);
    std::vector<double> total(th.size(), 0.0), t(th.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        density.score(data.point(i), t);
        for (std::size_t k = 0; k < t.size(); ++k) total[k] += t[k];
    }
    for (auto& v : total) v /= static_cast<double>(data.size());
    return total;
}

Dataset draw(const ModelSpec& model, const NaturalParams& natural, std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    return Dataset(model.dim, sample(model, from_natural(model, natural), rng, n));
}

}  // namespace

TEST(NormalMleTest, SymmetricPair) {
    const auto nat = std::get<NormalParams>(to_natural(ModelSpec::normal(), mle_normal(Dataset{-1.0, 1.0})));
    EXPECT_NEAR(nat.mu, 0.0, 1e-15);
    EXPECT_NEAR(nat.sigma, 1.0, 1e-12);
}

TEST(NormalMleTest, Errors) {
    EXPECT_THROW(mle_normal(Dataset{2.0, 2.0, 2.0}), InitFailure);
    EXPECT_THROW(mle_normal(Dataset{2.0}), InitFailure);
}

TEST(NormalMleTest, ConsistentOnLargeSample) {
    const auto data = draw(ModelSpec::normal(), NormalParams{0, 1}, 10000, 1);
    const auto th = mle_normal(data);
    EXPECT_NEAR(th[0], 0.0, 0.05);
    const auto s = mean_score(ModelSpec::normal(), th, data);
    for (double v : s) EXPECT_NEAR(v, 0.0, 1e-8);
}

TEST(IsoNormalMleTest, SampleMean) {
    const Dataset data(2, {0.0, 1.0, 2.0, 3.0});
    EXPECT_EQ(mle_iso_normal(data).values, (std::vector<double>{1.0, 2.0}));
}

TEST(InverseNormalMleTest, HandValue) {
    const auto nat = std::get<InverseNormalParams>(to_natural(ModelSpec::inverse_normal(), mle_inverse_normal(Dataset{1, 2, 4})));
    EXPECT_NEAR(nat.mu, 7.0 / 3.0, 1e-12);
    EXPECT_NEAR(nat.lambda, 6.4615, 1e-3);
    // 1 / mean(1/x - 1/mu) = 1 / (7/12 - 3/7) = 84/13
    EXPECT_NEAR(nat.lambda, 84.0 / 13.0, 1e-12);
}

TEST(InverseNormalMleTest, Errors) {
    EXPECT_THROW(mle_inverse_normal(Dataset{3, 3, 3}), InitFailure);
    EXPECT_THROW(mle_inverse_normal(Dataset{1, -2, 4}), InitFailure);
}

TEST(InverseNormalMleTest, MaximizesLikelihood) {
    const auto model = ModelSpec::inverse_normal();
    const auto data = draw(model, InverseNormalParams{1.5, 2.0}, 500, 2);
    const auto th = mle_inverse_normal(data);
    const double best = log_likelihood(model, th, data);
    for (double f : {0.99, 1.01}) {
        auto nat = std::get<InverseNormalParams>(to_natural(model, th));
        nat.lambda *= f;
        EXPECT_LT(log_likelihood(model, from_natural(model, nat), data), best);
    }
    for (double v : mean_score(model, th, data)) EXPECT_NEAR(v, 0.0, 1e-8);
}

TEST(GompertzMleTest, ZeroesAverageScore) {
    const auto model = ModelSpec::gompertz();
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto data = draw(model, GompertzParams{1.0, 0.1}, 1000, seed);
        const auto th = mle_gompertz(data);
        for (double v : mean_score(model, th, data)) EXPECT_NEAR(v, 0.0, 1e-6);
        const auto nat = std::get<GompertzParams>(to_natural(model, th));
        EXPECT_GT(nat.omega, 0.0);
        EXPECT_GT(nat.lambda, 0.0);
    }
}

TEST(GompertzMleTest, ConsistentOnLargeSample) {
    const auto data = draw(ModelSpec::gompertz(), GompertzParams{1.0, 0.1}, 10000, 6);
    const auto nat = std::get<GompertzParams>(to_natural(ModelSpec::gompertz(), mle_gompertz(data)));
    EXPECT_GE(nat.omega, 0.9);
    EXPECT_LE(nat.omega, 1.1);
}

TEST(GompertzMleTest, Errors) {
    EXPECT_THROW(mle_gompertz(Dataset{0.0, 0.0}), InitFailure);
    EXPECT_THROW(mle_gompertz(Dataset{1.0, -1.0}), InitFailure);
    // A narrow bracket far from the root has no sign change.
    const auto data = draw(ModelSpec::gompertz(), GompertzParams{1.0, 0.1}, 1000, 7);
    EXPECT_THROW(mle_gompertz(data, NewtonConfig{200, 1e-12, 5.0, 6.0}), InitFailure);
    EXPECT_THROW(mle_gompertz(data, NewtonConfig{200, 1e-12, 2.0, 1.0}), ConfigError);
}

TEST(MixtureEmTest, RecoversSeparatedComponents) {
    const auto data = draw(ModelSpec::mixture(), MixtureParams{-5, 1, 0, 1, 0.6}, 10000, 8);
    RngStream rng(9);
    const auto nat = std::get<MixtureParams>(to_natural(ModelSpec::mixture(), mle_mixture(data, 5, rng)));
    const double lo = std::min(nat.mu1, nat.mu2), hi = std::max(nat.mu1, nat.mu2);
    EXPECT_NEAR(lo, -5.0, 0.2);
    EXPECT_NEAR(hi, 0.0, 0.2);
    EXPECT_GT(nat.alpha, 0.0);
    EXPECT_LT(nat.alpha, 1.0);
}

TEST(MixtureEmTest, LogLikelihoodIsMonotone) {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        const auto data = draw(ModelSpec::mixture(), MixtureParams{-2, 1, 1, 0.7, 0.4}, 2000, seed);
        RngStream rng(seed);
        const auto fit = fit_mixture_em(data, rng);
        ASSERT_GE(fit.log_likelihood_history.size(), 2u);
        for (std::size_t i = 1; i < fit.log_likelihood_history.size(); ++i)
            EXPECT_GE(fit.log_likelihood_history[i], fit.log_likelihood_history[i - 1] - 1e-9);
        EXPECT_NEAR(fit.log_likelihood, log_likelihood(ModelSpec::mixture(), fit.params, data), 1e-6);
    }
}

TEST(MixtureEmTest, TooFewObservations) {
    RngStream rng(1);
    EXPECT_THROW(mle_mixture(Dataset{1, 2, 3}, 5, rng), InitFailure);
}

TEST(MaximumLikelihoodTest, EveryFamilyMapsBack) {
    RngStream rng(13);
    const std::vector<std::pair<ModelSpec, NaturalParams>> cases = {
        {ModelSpec::normal(), NormalParams{1, 2}},
        {ModelSpec::iso_normal(3), IsoNormalParams{{0.5, 0.5, 0.5}}},
        {ModelSpec::inverse_normal(), InverseNormalParams{1, 3}},
        {ModelSpec::gompertz(), GompertzParams{1, 0.1}},
        {ModelSpec::mixture(), MixtureParams{-5, 1, 0, 1, 0.6}},
    };
    for (const auto& [model, natural] : cases) {
        const auto data = draw(model, natural, 500, 14);
        const auto th = maximum_likelihood(model, data, rng);
        EXPECT_EQ(th.size(), model.dim_param());
        EXPECT_NO_THROW(to_natural(model, th));
    }
    EXPECT_THROW(maximum_likelihood(ModelSpec::iso_normal(2), Dataset{1.0, 2.0}, rng), ConfigError);
}
