#pragma once

// Experiment harness behind the command-line tool: configuration with
// presets and key = value files, robust fits with traces, the SGD versus
// lattice-GD comparison table, and density curves for plotting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "datagen.hpp"
#include "dataset.hpp"
#include "divergence.hpp"
#include "errors.hpp"
#include "gradients.hpp"
#include "init.hpp"
#include "models.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace dpd {

enum class Experiment { Fit, Trace, TableCompare, DensityCurves };
enum class DivergenceKind { DPD, Gamma };
enum class InitKind { Mle, Truth };

struct ExperimentConfig {
    Experiment experiment = Experiment::Fit;
    ModelSpec model = ModelSpec::normal();
    std::optional<std::vector<double>> truth;  // natural parameters; family default when empty
    DivergenceKind divergence = DivergenceKind::DPD;
    std::vector<double> powers{0.5};        // beta or gamma values
    std::vector<std::size_t> m_values{10};  // SGD minibatch sizes
    std::vector<std::size_t> big_m_values;  // lattice nodes per axis (GD baseline)
    double grid_extent = 2.0;               // lattice D
    std::size_t T = 500;
    double eta0 = 1.0;
    double decay_rate = 0.7;
    std::size_t decay_period = 25;
    std::size_t n = 1000;
    double xi = 0.1;
    double outlier_mean = 10.0;  // per coordinate
    double outlier_sd = 1.0;
    std::uint64_t seed = 1;
    std::size_t replications = 1;
    bool fixed_outlier_count = false;
    std::string proposal = "current";  // current | fixed:<mean>:<sd>
    InitKind init = InitKind::Mle;
    double tau_lipschitz = 0.0;  // > 0 enables random-iterate selection
    std::string data_path;       // user CSV instead of synthetic data
    std::string out_dir = ".";
    std::string preset;
};

// ---------------------------------------------------------------- parsing

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    const auto parsed = parse_double(trim(v));
    if (!parsed) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return *parsed;
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d) || d > 1e15) throw ConfigError("'" + key + "' expects a nonnegative integer");
    return static_cast<std::size_t>(d);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
    if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list of numbers");
    return out;
}

inline std::vector<std::size_t> to_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v)) out.push_back(to_count(key, s));
    if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list of integers");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    const auto t = trim(v);
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    throw ConfigError("'" + key + "' expects true/false");
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) out += fmt(v[i]);
        else out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace detail

inline ModelSpec parse_model(const std::string& name, std::size_t dim) {
    if (name == "normal") return ModelSpec::normal();
    if (name == "iso-normal") return ModelSpec::iso_normal(dim);
    if (name == "inverse-normal") return ModelSpec::inverse_normal();
    if (name == "gompertz") return ModelSpec::gompertz();
    if (name == "mixture") return ModelSpec::mixture();
    throw ConfigError("unknown model '" + name + "' (normal, iso-normal, inverse-normal, gompertz, mixture)");
}

inline std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Fit: return "fit";
        case Experiment::Trace: return "trace";
        case Experiment::TableCompare: return "table-compare";
        case Experiment::DensityCurves: return "density-curves";
    }
    return "?";
}

/// Default true parameters used by the synthetic experiments.
inline std::vector<double> default_truth(const ModelSpec& model) {
    switch (model.family) {
        case Family::Normal1D: return {0.0, 1.0};
        case Family::IsoNormalD: return std::vector<double>(model.dim, 0.5);
        case Family::InverseNormal: return {1.0, 3.0};
        case Family::Gompertz: return {1.0, 0.1};
        case Family::NormalMixture2: return {-5.0, 1.0, 0.0, 1.0, 0.6};
    }
    return {};
}

inline NaturalParams natural_from_flat(const ModelSpec& model, const std::vector<double>& v) {
    if (v.size() != model.dim_param())
        throw ConfigError("truth needs " + std::to_string(model.dim_param()) + " values for " + family_name(model.family));
    switch (model.family) {
        case Family::Normal1D: return NormalParams{v[0], v[1]};
        case Family::IsoNormalD: return IsoNormalParams{v};
        case Family::InverseNormal: return InverseNormalParams{v[0], v[1]};
        case Family::Gompertz: return GompertzParams{v[0], v[1]};
        case Family::NormalMixture2: return MixtureParams{v[0], v[1], v[2], v[3], v[4]};
    }
    throw ConfigError("unknown family");
}

inline std::vector<double> truth_of(const ExperimentConfig& cfg) {
    return cfg.truth ? *cfg.truth : default_truth(cfg.model);
}

inline void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value);

/// Named configurations for the published experiments.
inline std::vector<std::string> preset_names() {
    return {"paper-4.1-i", "paper-4.1-ii", "paper-4.1-iii", "paper-4.1-iv", "paper-4.2-d2", "paper-4.2-d3", "paper-4.2-d4"};
}

inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
    auto robust = [&](const char* model, std::size_t T, double eta0, double xi) {
        cfg.model = parse_model(model, 1);
        cfg.truth.reset();
        cfg.divergence = DivergenceKind::DPD;
        cfg.powers = {0.1, 0.5, 1.0};
        cfg.m_values = {10};
        cfg.big_m_values.clear();
        cfg.T = T;
        cfg.eta0 = eta0;
        cfg.decay_rate = 0.7;
        cfg.decay_period = 25;
        cfg.n = 1000;
        cfg.xi = xi;
        cfg.outlier_mean = 10.0;
        cfg.outlier_sd = 1.0;
        cfg.replications = 1;
        cfg.init = InitKind::Mle;
    };
    auto comparison = [&](std::size_t d, std::vector<std::size_t> big_m) {
        cfg.model = ModelSpec::iso_normal(d);
        cfg.truth.reset();
        cfg.divergence = DivergenceKind::DPD;
        cfg.powers = {0.5};
        cfg.m_values = {3, 10, 50};
        cfg.big_m_values = std::move(big_m);
        cfg.grid_extent = 2.0;
        cfg.T = 300;
        cfg.eta0 = 1.0;
        cfg.decay_rate = 0.7;
        cfg.decay_period = 20;
        cfg.n = 500;
        cfg.xi = 0.01;
        cfg.outlier_mean = 100.5;  // truth 0.5 plus 100 per coordinate
        cfg.outlier_sd = 0.1;
        cfg.replications = 10;
        cfg.init = InitKind::Mle;
    };
    if (name == "paper-4.1-i") {
        robust("normal", 500, 1.0, 0.1);
        cfg.m_values = {3, 10, 50};
    } else if (name == "paper-4.1-ii") {
        robust("inverse-normal", 1000, 1.0, 0.1);
    } else if (name == "paper-4.1-iii") {
        robust("gompertz", 1000, 0.5, 0.01);
    } else if (name == "paper-4.1-iv") {
        robust("mixture", 1000, 1.0, 0.01);
    } else if (name == "paper-4.2-d2") {
        comparison(2, {3, 10, 50});
    } else if (name == "paper-4.2-d3") {
        comparison(3, {3, 10, 50});
    } else if (name == "paper-4.2-d4") {
        comparison(4, {3, 10});
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    cfg.preset = name;
}

/// Reads `key = value` lines ('#' starts a comment). A `preset` key applies
/// the preset in place, so later lines override it.
inline void apply_config_file(ExperimentConfig& cfg, std::istream& is, const std::string& name) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(name + ":" + std::to_string(line_no) + ": expected key = value");
        try {
            apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

/// `--config` accepts a preset name or a path to a key = value file.
inline void apply_config_source(ExperimentConfig& cfg, const std::string& source) {
    const auto presets = preset_names();
    if (std::find(presets.begin(), presets.end(), source) != presets.end()) {
        apply_preset(cfg, source);
        return;
    }
    std::ifstream is(source);
    if (!is) throw ConfigError("config '" + source + "' is neither a preset nor a readable file");
    apply_config_file(cfg, is, source);
}

inline void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
    std::string key = raw_key;
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string& v = raw_value;
    using namespace detail;
    if (key == "preset") apply_preset(cfg, trim(v));
    else if (key == "config") apply_config_source(cfg, trim(v));
    else if (key == "experiment") {
        const auto t = trim(v);
        if (t == "fit") cfg.experiment = Experiment::Fit;
        else if (t == "trace") cfg.experiment = Experiment::Trace;
        else if (t == "table-compare") cfg.experiment = Experiment::TableCompare;
        else if (t == "density-curves") cfg.experiment = Experiment::DensityCurves;
        else throw ConfigError("unknown experiment '" + t + "'");
    } else if (key == "model") {
        cfg.model = parse_model(trim(v), cfg.model.dim);
        cfg.truth.reset();
    } else if (key == "dim") {
        const auto d = to_count(key, v);
        if (d == 0) throw ConfigError("dim must be >= 1");
        if (cfg.model.family == Family::IsoNormalD) cfg.model = ModelSpec::iso_normal(d);
        else if (d != 1) throw ConfigError("dim applies to the iso-normal model only");
        cfg.truth.reset();
    } else if (key == "truth") cfg.truth = to_doubles(key, v);
    else if (key == "beta") {
        cfg.divergence = DivergenceKind::DPD;
        cfg.powers = to_doubles(key, v);
    } else if (key == "gamma") {
        cfg.divergence = DivergenceKind::Gamma;
        cfg.powers = to_doubles(key, v);
    } else if (key == "m") cfg.m_values = to_counts(key, v);
    else if (key == "big-m") cfg.big_m_values = to_counts(key, v);
    else if (key == "grid-extent") cfg.grid_extent = to_double(key, v);
    else if (key == "T") cfg.T = to_count(key, v);
    else if (key == "eta0") cfg.eta0 = to_double(key, v);
    else if (key == "decay-rate") cfg.decay_rate = to_double(key, v);
    else if (key == "decay-period") cfg.decay_period = to_count(key, v);
    else if (key == "n") cfg.n = to_count(key, v);
    else if (key == "xi") cfg.xi = to_double(key, v);
    else if (key == "outlier-mean") cfg.outlier_mean = to_double(key, v);
    else if (key == "outlier-sd") cfg.outlier_sd = to_double(key, v);
    else if (key == "seed") cfg.seed = to_count(key, v);
    else if (key == "replications") cfg.replications = to_count(key, v);
    else if (key == "fixed-outlier-count") cfg.fixed_outlier_count = to_bool(key, v);
    else if (key == "proposal") cfg.proposal = trim(v);
    else if (key == "init") {
        const auto t = trim(v);
        if (t == "mle") cfg.init = InitKind::Mle;
        else if (t == "truth") cfg.init = InitKind::Truth;
        else throw ConfigError("init must be 'mle' or 'truth'");
    } else if (key == "tau-lipschitz") cfg.tau_lipschitz = to_double(key, v);
    else if (key == "data") cfg.data_path = trim(v);
    else if (key == "out-dir") cfg.out_dir = trim(v);
    else throw ConfigError("unknown setting '" + raw_key + "'");
}

inline ProposalSpec parse_proposal(const std::string& text, const ModelSpec& model) {
    if (text == "current") return CurrentModel{};
    if (text.rfind("fixed:", 0) == 0) {
        const auto rest = text.substr(6);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError("proposal must look like fixed:<mean>:<sd>");
        const double mean = detail::to_double("proposal", rest.substr(0, colon));
        const double sd = detail::to_double("proposal", rest.substr(colon + 1));
        return FixedNormal{std::vector<double>(model.dim, mean), sd};
    }
    throw ConfigError("unknown proposal '" + text + "' (current or fixed:<mean>:<sd>)");
}

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.powers.empty()) throw ConfigError("at least one beta/gamma value is required");
    for (double p : cfg.powers)
        if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("beta/gamma must be positive, got " + detail::fmt(p));
    if (cfg.replications == 0) throw ConfigError("replications must be >= 1");
    if (cfg.m_values.empty()) throw ConfigError("at least one m value is required");
    for (auto m : cfg.m_values)
        if (m == 0) throw ConfigError("m must be >= 1");
    for (auto m : cfg.big_m_values)
        if (m < 2) throw ConfigError("big-m must be >= 2");
    if (!(cfg.grid_extent > 0.0)) throw ConfigError("grid-extent must be positive");
    validate(Schedule{StepDecay{cfg.eta0, cfg.decay_rate, cfg.decay_period}});
    if (!(cfg.xi >= 0.0 && cfg.xi < 1.0)) throw ConfigError("xi must lie in [0, 1)");
    if (cfg.n == 0) throw ConfigError("n must be >= 1");
    if (!(cfg.outlier_sd > 0.0)) throw ConfigError("outlier-sd must be positive");
    if (cfg.tau_lipschitz < 0.0) throw ConfigError("tau-lipschitz must be nonnegative");
    natural_from_flat(cfg.model, truth_of(cfg));
    from_natural(cfg.model, natural_from_flat(cfg.model, truth_of(cfg)));
    detail::check_proposal(cfg.model, parse_proposal(cfg.proposal, cfg.model));
    if (cfg.experiment == Experiment::TableCompare && cfg.model.family != Family::IsoNormalD)
        throw ConfigError("table-compare runs the iso-normal model");
    if (cfg.experiment == Experiment::DensityCurves && cfg.model.dim != 1)
        throw ConfigError("density-curves needs a one-dimensional model");
}

/// Resolved configuration as `key = value` lines that apply_config_file reads back.
inline std::string echo(const ExperimentConfig& cfg) {
    using detail::fmt;
    using detail::join;
    std::ostringstream os;
    os << "experiment = " << experiment_name(cfg.experiment) << '\n';
    if (!cfg.preset.empty()) os << "# preset " << cfg.preset << '\n';
    os << "model = " << family_name(cfg.model.family) << '\n';
    os << "dim = " << cfg.model.dim << '\n';
    os << "truth = " << join(truth_of(cfg)) << '\n';
    os << (cfg.divergence == DivergenceKind::DPD ? "beta = " : "gamma = ") << join(cfg.powers) << '\n';
    os << "m = " << join(cfg.m_values) << '\n';
    if (!cfg.big_m_values.empty()) os << "big-m = " << join(cfg.big_m_values) << '\n';
    os << "grid-extent = " << fmt(cfg.grid_extent) << '\n';
    os << "T = " << cfg.T << '\n';
    os << "eta0 = " << fmt(cfg.eta0) << '\n';
    os << "decay-rate = " << fmt(cfg.decay_rate) << '\n';
    os << "decay-period = " << cfg.decay_period << '\n';
    os << "n = " << cfg.n << '\n';
    os << "xi = " << fmt(cfg.xi) << '\n';
    os << "outlier-mean = " << fmt(cfg.outlier_mean) << '\n';
    os << "outlier-sd = " << fmt(cfg.outlier_sd) << '\n';
    os << "seed = " << cfg.seed << '\n';
    os << "replications = " << cfg.replications << '\n';
    os << "fixed-outlier-count = " << (cfg.fixed_outlier_count ? "true" : "false") << '\n';
    os << "proposal = " << cfg.proposal << '\n';
    os << "init = " << (cfg.init == InitKind::Mle ? "mle" : "truth") << '\n';
    os << "tau-lipschitz = " << fmt(cfg.tau_lipschitz) << '\n';
    if (!cfg.data_path.empty()) os << "data = " << cfg.data_path << '\n';
    return os.str();
}

// ---------------------------------------------------------------- running

inline ContaminationSpec contamination_of(const ExperimentConfig& cfg, std::uint64_t seed) {
    ContaminationSpec spec;
    spec.model = cfg.model;
    spec.truth = natural_from_flat(cfg.model, truth_of(cfg));
    spec.outlier = OutlierSpec{std::vector<double>(cfg.model.dim, cfg.outlier_mean), cfg.outlier_sd};
    spec.xi = cfg.xi;
    spec.n = cfg.n;
    spec.seed = seed;
    spec.fixed_outlier_count = cfg.fixed_outlier_count;
    return spec;
}

/// Dataset for replication `rep`: the user CSV, or a synthetic sample.
inline Dataset experiment_data(const ExperimentConfig& cfg, std::size_t rep = 0) {
    if (!cfg.data_path.empty()) {
        Dataset data = read_csv(cfg.data_path);
        if (data.dim != cfg.model.dim)
            throw ConfigError(cfg.data_path + " has " + std::to_string(data.dim) + " columns, model needs " +
                              std::to_string(cfg.model.dim));
        return data;
    }
    RngStream rng = RngStream::derive(cfg.seed, 2 * rep);
    return contaminated_sample(contamination_of(cfg, cfg.seed), rng);
}

inline ParamVector initial_params(const ExperimentConfig& cfg, const Dataset& data, std::size_t rep = 0) {
    if (cfg.init == InitKind::Truth) return from_natural(cfg.model, natural_from_flat(cfg.model, truth_of(cfg)));
    RngStream rng = RngStream::derive(cfg.seed, 2 * rep + 1);
    return maximum_likelihood(cfg.model, data, rng);
}

inline double squared_error(const ModelSpec& model, const ParamVector& theta, const std::vector<double>& truth) {
    if (!theta.all_finite()) return std::numeric_limits<double>::infinity();
    const auto nat = flatten(to_natural(model, theta));
    double sq = 0.0;
    for (std::size_t k = 0; k < nat.size(); ++k) sq += (nat[k] - truth[k]) * (nat[k] - truth[k]);
    return sq;
}

struct FitRun {
    double power = 0.0;
    std::size_t m = 0;
    RunResult result;
    ParamVector theta;              // model coordinates of the final iterate
    std::optional<double> scale_c;  // gamma runs
    std::optional<double> objective;
};

struct FitReport {
    Dataset data;
    ParamVector mle;
    std::vector<FitRun> runs;
    bool any_diverged() const {
        return std::any_of(runs.begin(), runs.end(), [](const FitRun& r) { return r.result.diverged; });
    }
};

/// One SGD run of the configured divergence at (power, m) from theta0.
inline FitRun run_sgd(const ExperimentConfig& cfg, const Dataset& data, const ParamVector& theta0, double power,
                      std::size_t m, RngStream& rng, bool monitor_objective) {
    const ModelSpec model = cfg.model;
    const ProposalSpec proposal = parse_proposal(cfg.proposal, model);
    const Schedule schedule = StepDecay{cfg.eta0, cfg.decay_rate, cfg.decay_period};
    const auto truth = truth_of(cfg);
    const std::size_t s = model.dim_param();
    const bool closed = model.has_closed_form_r() && monitor_objective;

    FitRun run;
    run.power = power;
    run.m = m;
    Monitors monitors;
    if (cfg.divergence == DivergenceKind::DPD) {
        if (closed)
            monitors.objective = [&, power](const ParamVector& th) -> std::optional<double> {
                return empirical_dpce(model, th, data, power, ClosedForm{}).value;
            };
        if (cfg.data_path.empty())
            monitors.mse = [&](const ParamVector& th) -> std::optional<double> { return squared_error(model, th, truth); };
        run.result = sgd_run(
            [&, power, m](const ParamVector& th, RngStream& r) {
                return stochastic_grad_dpd(model, th, data, power, m, proposal, r);
            },
            theta0, schedule, cfg.T, rng, monitors);
        run.theta = run.result.final_params;
    } else {
        auto split = [s](const ParamVector& psi) {
            return ParamVector(std::vector<double>(psi.values.begin(), psi.values.begin() + static_cast<long>(s)));
        };
        if (closed)
            monitors.objective = [&, power, split](const ParamVector& psi) -> std::optional<double> {
                return empirical_gce(model, split(psi), data, power, ClosedForm{});
            };
        monitors.scale = [s](const ParamVector& psi) -> std::optional<double> { return std::exp(psi[s]); };
        if (cfg.data_path.empty())
            monitors.mse = [&, split](const ParamVector& psi) -> std::optional<double> {
                return squared_error(model, split(psi), truth);
            };
        ParamVector psi0 = theta0;
        psi0.values.push_back(0.0);  // log c, c = 1
        run.result = sgd_run(
            [&, power, m, split](const ParamVector& psi, RngStream& r) {
                return stochastic_grad_gamma(model, split(psi), std::exp(psi[s]), data, power, m, proposal, r);
            },
            psi0, schedule, cfg.T, rng, monitors);
        run.theta = split(run.result.final_params);
        run.scale_c = std::exp(run.result.final_params[s]);
    }
    if (cfg.tau_lipschitz > 0.0 && cfg.T > 0 && !run.result.diverged) {
        std::vector<double> etas;
        for (std::size_t t = 1; t <= cfg.T; ++t) etas.push_back(learning_rate(schedule, t));
        run.result.selected_tau = select_tau(etas, cfg.tau_lipschitz, rng);
    }
    if (!run.result.diverged && !run.result.trace.empty()) run.objective = run.result.trace.back().objective_exact;
    return run;
}

/// Robust fits for every (power, m) combination on one dataset.
inline FitReport run_fits(const ExperimentConfig& cfg, bool monitor_objective = true) {
    validate(cfg);
    FitReport report;
    report.data = experiment_data(cfg);
    report.mle = initial_params(cfg, report.data);
    std::size_t k = 0;
    for (double power : cfg.powers)
        for (std::size_t m : cfg.m_values) {
            RngStream rng = RngStream::derive(cfg.seed, 1000 + k++);
            report.runs.push_back(run_sgd(cfg, report.data, report.mle, power, m, rng, monitor_objective));
        }
    return report;
}

// ---------------------------------------------------------------- outputs

inline void write_trace_csv(const RunResult& result, std::size_t s, std::ostream& os) {
    os << "t,eta,complexity";
    for (std::size_t k = 1; k <= s; ++k) os << ",theta_" << k;
    os << ",objective_exact,scale_c,mse\n";
    auto opt = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
    for (const auto& rec : result.trace) {
        os << rec.t << ',' << detail::fmt(rec.eta) << ',' << rec.complexity;
        for (std::size_t k = 0; k < s; ++k) os << ',' << detail::fmt(rec.params[k]);
        os << ',' << opt(rec.objective_exact) << ',' << opt(rec.scale_c) << ',' << opt(rec.mse) << '\n';
    }
}

inline std::string power_label(DivergenceKind kind, double power) {
    return (kind == DivergenceKind::DPD ? "beta" : "gamma") + detail::fmt(power);
}

/// trace.csv for a single run, trace_m<m>_<beta|gamma><value>.csv otherwise.
inline std::string trace_file_name(const ExperimentConfig& cfg, const FitRun& run) {
    if (cfg.powers.size() == 1 && cfg.m_values.size() == 1) return "trace.csv";
    return "trace_m" + std::to_string(run.m) + "_" + power_label(cfg.divergence, run.power) + ".csv";
}

inline std::ofstream open_output(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / name;
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    return os;
}

inline void write_echo(const ExperimentConfig& cfg) { open_output(cfg, "config.echo") << echo(cfg); }

/// estimate.csv: one row for the initial estimate, one per (power, m) run.
inline void write_estimate_csv(const ExperimentConfig& cfg, const FitReport& report, std::ostream& os) {
    const auto names = natural_names(cfg.model);
    os << "estimator,power,m";
    for (const auto& name : names) os << ',' << name;
    os << ",objective,scale_c,complexity,selected_tau,diverged\n";
    auto natural_cells = [&](const ParamVector& theta) {
        std::string cells;
        if (theta.all_finite())
            for (double v : flatten(to_natural(cfg.model, theta))) cells += ',' + detail::fmt(v);
        else
            for (std::size_t k = 0; k < names.size(); ++k) cells += ",nan";
        return cells;
    };
    os << (cfg.init == InitKind::Mle ? "mle" : "truth") << ",," << natural_cells(report.mle) << ",,,0,,0\n";
    for (const auto& run : report.runs) {
        os << (cfg.divergence == DivergenceKind::DPD ? "dpd" : "gamma") << ',' << detail::fmt(run.power) << ','
           << run.m << natural_cells(run.theta) << ',' << (run.objective ? detail::fmt(*run.objective) : "") << ','
           << (run.scale_c ? detail::fmt(*run.scale_c) : "") << ','
           << (run.result.trace.empty() ? 0 : run.result.trace.back().complexity) << ','
           << (run.result.selected_tau ? std::to_string(*run.result.selected_tau) : "") << ','
           << (run.result.diverged ? 1 : 0) << '\n';
    }
}

/// fit: estimate.csv plus traces. Returns the process exit code.
inline int cmd_fit(const ExperimentConfig& cfg) {
    const FitReport report = run_fits(cfg);
    write_echo(cfg);
    {
        auto os = open_output(cfg, "estimate.csv");
        write_estimate_csv(cfg, report, os);
    }
    const std::size_t s = cfg.model.dim_param();
    for (const auto& run : report.runs) {
        auto os = open_output(cfg, trace_file_name(cfg, run));
        write_trace_csv(run.result, s, os);
    }
    return report.any_diverged() ? 2 : 0;
}

/// trace: per-iteration monitoring CSVs only.
inline int cmd_trace(const ExperimentConfig& cfg) {
    const FitReport report = run_fits(cfg);
    write_echo(cfg);
    const std::size_t s = cfg.model.dim_param();
    for (const auto& run : report.runs) {
        auto os = open_output(cfg, trace_file_name(cfg, run));
        write_trace_csv(run.result, s, os);
    }
    return report.any_diverged() ? 2 : 0;
}

// ---------------------------------------------------------------- comparison table

struct CellRun {
    std::size_t replication = 0;
    double mse = 0.0;
    bool diverged = false;
};

struct TableCell {
    std::string method;     // "SGD" or "GD+NI"
    std::size_t size = 0;   // m, or total lattice nodes M
    std::size_t complexity = 0;
    std::vector<CellRun> runs;

    double mean_mse() const {
        double s = 0.0;
        for (const auto& r : runs) s += r.mse;
        return s / static_cast<double>(runs.size());
    }
    double sd_mse() const {
        if (runs.size() < 2) return 0.0;
        const double mean = mean_mse();
        double s = 0.0;
        for (const auto& r : runs) s += (r.mse - mean) * (r.mse - mean);
        return std::sqrt(s / static_cast<double>(runs.size() - 1));
    }
    std::size_t diverged_count() const {
        return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const CellRun& r) { return r.diverged; }));
    }
};

/// Runs body(i) for i in [0, count) on worker threads; results must be written by index.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// SGD (one cell per m) against lattice GD (one cell per nodes-per-axis
/// value), `replications` independent datasets each, final-iterate MSE.
inline std::vector<TableCell> run_table_compare(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.divergence != DivergenceKind::DPD) throw ConfigError("table-compare uses the density power divergence");
    const ModelSpec model = cfg.model;
    const double beta = cfg.powers.front();
    const auto truth = truth_of(cfg);
    const Schedule schedule = StepDecay{cfg.eta0, cfg.decay_rate, cfg.decay_period};
    const double omega = mean_learning_rate(schedule, cfg.T);
    const ProposalSpec proposal = parse_proposal(cfg.proposal, model);

    std::vector<TableCell> cells;
    for (auto m : cfg.m_values)
        cells.push_back({"SGD", m, cfg.T * (cfg.n + m), std::vector<CellRun>(cfg.replications)});
    for (auto side : cfg.big_m_values) {
        const std::size_t total = lattice_size(model, Lattice{cfg.grid_extent, side});
        cells.push_back({"GD+NI", total, cfg.T * (cfg.n + total), std::vector<CellRun>(cfg.replications)});
    }

    parallel_for(cfg.replications, [&](std::size_t rep) {
        const Dataset data = experiment_data(cfg, rep);
        const ParamVector theta0 = initial_params(cfg, data, rep);
        std::size_t c = 0;
        for (auto m : cfg.m_values) {
            RngStream rng = RngStream::derive(cfg.seed, 100000 + 1000 * rep + c);
            const auto res = sgd_run(
                [&, m](const ParamVector& th, RngStream& r) {
                    return stochastic_grad_dpd(model, th, data, beta, m, proposal, r);
                },
                theta0, schedule, cfg.T, rng);
            cells[c++].runs[rep] = {rep, squared_error(model, res.final_params, truth), res.diverged};
        }
        for (auto side : cfg.big_m_values) {
            const Lattice lattice{cfg.grid_extent, side};
            const auto res = gd_run(
                [&](const ParamVector& th) { return lattice_grad_dpd(model, th, data, beta, lattice); }, theta0,
                omega, cfg.T);
            cells[c++].runs[rep] = {rep, squared_error(model, res.final_params, truth), res.diverged};
        }
    });
    return cells;
}

inline void write_table_csv(const std::vector<TableCell>& cells, std::ostream& os) {
    os << "method,size,mean_mse,sd_mse,complexity\n";
    for (const auto& c : cells)
        os << c.method << ',' << c.size << ',' << detail::fmt(c.mean_mse()) << ',' << detail::fmt(c.sd_mse()) << ','
           << c.complexity << '\n';
}

inline void write_runs_csv(const std::vector<TableCell>& cells, std::ostream& os) {
    os << "method,size,replication,mse,diverged\n";
    for (const auto& c : cells)
        for (const auto& r : c.runs)
            os << c.method << ',' << c.size << ',' << r.replication << ',' << detail::fmt(r.mse) << ','
               << (r.diverged ? 1 : 0) << '\n';
}

inline int cmd_table_compare(const ExperimentConfig& cfg) {
    const auto cells = run_table_compare(cfg);
    write_echo(cfg);
    {
        auto os = open_output(cfg, "table.csv");
        write_table_csv(cells, os);
    }
    {
        auto os = open_output(cfg, "runs.csv");
        write_runs_csv(cells, os);
    }
    // Divergence of the lattice baseline is an expected outcome of the comparison, not a failure.
    const bool sgd_diverged = std::any_of(cells.begin(), cells.end(), [](const TableCell& c) {
        return c.method == "SGD" && c.diverged_count() > 0;
    });
    return sgd_diverged ? 2 : 0;
}

// ---------------------------------------------------------------- density curves

inline constexpr std::size_t kCurveGridPoints = 512;

struct DensityCurves {
    std::vector<double> x;
    std::vector<double> pdf_mle;
    std::vector<std::vector<double>> pdf_dp;  // one column per power
    std::vector<double> powers;
    std::vector<std::size_t> counts;  // data points in [x_k, x_{k+1}), last cell closed
};

/// Grid over [min(data) - 1, max(data) + 1]; DP curves use the first m value.
inline DensityCurves run_density_curves(const ExperimentConfig& cfg, FitReport* report_out = nullptr) {
    ExperimentConfig fit_cfg = cfg;
    fit_cfg.m_values = {cfg.m_values.front()};
    FitReport report = run_fits(fit_cfg, false);
    const auto& values = report.data.values;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 1.0, hi = *hi_it + 1.0;

    DensityCurves curves;
    curves.x.resize(kCurveGridPoints);
    for (std::size_t k = 0; k < kCurveGridPoints; ++k)
        curves.x[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(kCurveGridPoints - 1);
    auto pdf_column = [&](const ParamVector& theta) {
        const Density density(cfg.model, theta);
        std::vector<double> col(kCurveGridPoints);
        for (std::size_t k = 0; k < kCurveGridPoints; ++k) col[k] = std::exp(density.log_pdf(curves.x[k]));
        return col;
    };
    curves.pdf_mle = pdf_column(report.mle);
    for (const auto& run : report.runs) {
        curves.powers.push_back(run.power);
        curves.pdf_dp.push_back(run.theta.all_finite() ? pdf_column(run.theta)
                                                       : std::vector<double>(kCurveGridPoints, 0.0));
    }
    curves.counts.assign(kCurveGridPoints, 0);
    const double step = (hi - lo) / static_cast<double>(kCurveGridPoints - 1);
    for (double v : values) {
        auto k = static_cast<std::size_t>((v - lo) / step);
        curves.counts[std::min(k, kCurveGridPoints - 1)]++;
    }
    if (report_out) *report_out = std::move(report);
    return curves;
}

inline void write_curves_csv(const ExperimentConfig& cfg, const DensityCurves& curves, std::ostream& os) {
    os << "x,pdf_mle";
    for (double p : curves.powers) os << ",pdf_" << power_label(cfg.divergence, p);
    os << ",count\n";
    for (std::size_t k = 0; k < curves.x.size(); ++k) {
        os << detail::fmt(curves.x[k]) << ',' << detail::fmt(curves.pdf_mle[k]);
        for (const auto& col : curves.pdf_dp) os << ',' << detail::fmt(col[k]);
        os << ',' << curves.counts[k] << '\n';
    }
}

inline int cmd_density_curves(const ExperimentConfig& cfg) {
    FitReport report;
    const auto curves = run_density_curves(cfg, &report);
    write_echo(cfg);
    {
        auto os = open_output(cfg, "curves.csv");
        write_curves_csv(cfg, curves, os);
    }
    {
        auto os = open_output(cfg, "estimate.csv");
        write_estimate_csv(cfg, report, os);
    }
    return report.any_diverged() ? 2 : 0;
}

inline int run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case Experiment::Fit: return cmd_fit(cfg);
        case Experiment::Trace: return cmd_trace(cfg);
        case Experiment::TableCompare: return cmd_table_compare(cfg);
        case Experiment::DensityCurves: return cmd_density_curves(cfg);
    }
    return 1;
}

}  // namespace dpd
