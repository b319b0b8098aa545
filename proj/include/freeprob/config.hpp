#pragma once

// Experiment configuration: JSON schema, validation, and the run pipeline
// shared by the command-line tool.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freeprob/convolution.hpp"
#include "freeprob/error.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/outliers.hpp"
#include "freeprob/rmt_sim.hpp"
#include "freeprob/subordination.hpp"

namespace freeprob {

using nlohmann::json;

struct Diagnostic {
    std::string code;
    std::string message;
};

/// One side of the model: bulk law, spikes and how the matrix is built.
struct SideConfig {
    json bulk;  // measure spec as given
    std::vector<double> spikes;
    std::string source = "quantile";  // quantile | explicit | gaussian-hermitian
    std::vector<double> values;       // explicit source
    double scale = 1.0;               // gaussian source
    std::string normalize = "none";   // none | N-1 | sqrt(N)
};

struct CheckTolerances {
    double location = 0.05;
    double overlap = 0.05;
    double trial_fraction = 0.95;
};

struct ExperimentConfig {
    std::string name = "experiment";
    ConvolutionKind kind = ConvolutionKind::additive_real;
    SideConfig a, b;
    Index n = 1000;
    int trials = 1;
    std::uint64_t seed = 0;
    SolverOptions solver;
    DensityOptions density;
    PredictOptions predict;
    std::vector<std::optional<double>> epsilon;
    double outlier_distance = 0.1;
    CheckTolerances tolerances;
    std::string output = "out";
    bool write_spectra = true;
};

namespace detail {

inline ConvolutionKind parse_kind(const std::string& s) {
    for (auto k : {ConvolutionKind::additive_real, ConvolutionKind::multiplicative_positive,
                   ConvolutionKind::multiplicative_circle}) {
        if (s == to_string(k)) return k;
    }
    throw Error(ErrorCode::config_error, "unknown kind '" + s + "'");
}

inline std::vector<Atom> parse_atoms(const json& j) {
    std::vector<Atom> out;
    for (const auto& a : j.at("atoms")) out.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline std::optional<Carrier> parse_carrier(const json& j) {
    if (!j.contains("carrier")) return std::nullopt;
    const auto s = j.at("carrier").get<std::string>();
    for (auto c : {Carrier::real_line, Carrier::positive_half_line, Carrier::unit_circle}) {
        if (s == to_string(c)) return c;
    }
    throw Error(ErrorCode::config_error, "unknown carrier '" + s + "'");
}

}  // namespace detail

/// Builds a measure from {"family": ..., parameters..., "carrier": optional}.
/// Without an explicit carrier, the model kind decides it.
inline Measure parse_measure(const json& j, ConvolutionKind kind) {
    if (!j.is_object() || !j.contains("family")) throw Error(ErrorCode::config_error, "measure needs a family");
    const auto f = j.at("family").get<std::string>();
    auto carrier = detail::parse_carrier(j);
    if (!carrier) carrier = carrier_of(kind);
    using detail::get_or;
    if (f == "semicircle") {
        return make_measure(family::Semicircle{get_or(j, "mean", 0.0), get_or(j, "variance", 1.0)}, carrier);
    }
    if (f == "arcsine") {
        return make_measure(family::Arcsine{get_or(j, "center", 0.0), get_or(j, "half_width", 1.0)}, carrier);
    }
    if (f == "marchenko-pastur") {
        return make_measure(family::MarchenkoPastur{get_or(j, "ratio", 1.0), get_or(j, "scale", 1.0)}, carrier);
    }
    if (f == "point-mass") return make_measure(family::PointMass{get_or(j, "location", 0.0)}, carrier);
    if (f == "two-atom") {
        return make_measure(family::TwoAtom{j.at("a").get<double>(), j.at("b").get<double>(),
                                            get_or(j, "weight_a", 0.5)},
                            carrier);
    }
    if (f == "atomic") return make_measure(family::Atomic{detail::parse_atoms(j)}, carrier);
    if (f == "circle-atomic") return make_measure(family::CircleAtomic{detail::parse_atoms(j)}, carrier);
    if (f == "empirical") {
        return make_measure(family::Empirical{j.at("samples").get<std::vector<double>>()}, carrier);
    }
    throw Error(ErrorCode::config_error, "unknown family '" + f + "'");
}

namespace detail {

inline SideConfig parse_side(const json& j) {
    SideConfig s;
    s.bulk = j.at("bulk");
    s.spikes = get_or(j, "spikes", std::vector<double>{});
    if (j.contains("matrix")) {
        const auto& m = j.at("matrix");
        s.source = get_or<std::string>(m, "source", "quantile");
        s.values = get_or(m, "values", std::vector<double>{});
        s.scale = get_or(m, "scale", 1.0);
        s.normalize = get_or<std::string>(m, "normalize", "none");
    }
    return s;
}

inline json side_to_json(const SideConfig& s) {
    json j;
    j["bulk"] = s.bulk;
    j["spikes"] = s.spikes;
    j["matrix"] = {{"source", s.source}, {"values", s.values}, {"scale", s.scale}, {"normalize", s.normalize}};
    return j;
}

}  // namespace detail

/// Parses a config; missing keys take defaults. Structural problems throw
/// config_error, semantic ones are left to validate().
inline ExperimentConfig parse_config(const json& j) {
    using detail::get_or;
    ExperimentConfig c;
    try {
        c.name = get_or<std::string>(j, "name", c.name);
        c.kind = detail::parse_kind(j.at("kind").get<std::string>());
        c.a = detail::parse_side(j.at("A"));
        c.b = detail::parse_side(j.at("B"));
        c.n = get_or<Index>(j, "N", c.n);
        c.trials = get_or(j, "trials", c.trials);
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            c.solver.tolerance = get_or(s, "tolerance", c.solver.tolerance);
            c.solver.max_iterations = get_or(s, "max_iterations", c.solver.max_iterations);
            c.solver.damping = get_or(s, "damping", c.solver.damping);
            c.solver.residual_tolerance = get_or(s, "residual_tolerance", c.solver.residual_tolerance);
        }
        if (j.contains("density")) {
            const auto& d = j.at("density");
            c.density.height = get_or(d, "height", c.density.height);
            c.density.points = get_or(d, "points", c.density.points);
            c.density.threshold = get_or(d, "threshold", c.density.threshold);
            c.density.padding = get_or(d, "padding", c.density.padding);
        }
        if (j.contains("epsilon")) {
            for (const auto& e : j.at("epsilon")) {
                c.epsilon.push_back(e.is_null() ? std::nullopt : std::optional<double>(e.get<double>()));
            }
        }
        c.outlier_distance = get_or(j, "outlier_distance", c.outlier_distance);
        if (j.contains("tolerances")) {
            const auto& t = j.at("tolerances");
            c.tolerances.location = get_or(t, "location", c.tolerances.location);
            c.tolerances.overlap = get_or(t, "overlap", c.tolerances.overlap);
            c.tolerances.trial_fraction = get_or(t, "trial_fraction", c.tolerances.trial_fraction);
        }
        c.output = get_or<std::string>(j, "output", c.output);
        c.write_spectra = get_or(j, "write_spectra", c.write_spectra);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config_error, e.what());
    }
    c.density.solver = c.solver;
    c.predict.density = c.density;
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config_error, "cannot read " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config_error, e.what());
    }
    return parse_config(j);
}

/// Every default spelled out, so that runs are self-describing.
inline json resolved_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["kind"] = std::string(to_string(c.kind));
    j["A"] = detail::side_to_json(c.a);
    j["B"] = detail::side_to_json(c.b);
    j["N"] = c.n;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["solver"] = {{"tolerance", c.solver.tolerance},
                   {"max_iterations", c.solver.max_iterations},
                   {"damping", c.solver.damping},
                   {"residual_tolerance", c.solver.residual_tolerance}};
    j["density"] = {{"height", c.density.height},
                    {"points", c.density.points},
                    {"threshold", c.density.threshold},
                    {"padding", c.density.padding}};
    j["epsilon"] = json::array();
    for (const auto& e : c.epsilon) j["epsilon"].push_back(e ? json(*e) : json(nullptr));
    j["outlier_distance"] = c.outlier_distance;
    j["tolerances"] = {{"location", c.tolerances.location},
                       {"overlap", c.tolerances.overlap},
                       {"trial_fraction", c.tolerances.trial_fraction}};
    j["output"] = c.output;
    j["write_spectra"] = c.write_spectra;
    return j;
}

namespace detail {

inline void check_side(const SideConfig& s, const char* side, ConvolutionKind kind, std::vector<Diagnostic>& out) {
    const std::string tag = std::string(side) + ": ";
    std::optional<Measure> m;
    try {
        m = parse_measure(s.bulk, kind);
    } catch (const Error& e) {
        out.push_back({std::string(to_string(e.code())), tag + e.what()});
        return;
    } catch (const json::exception& e) {
        out.push_back({"config-error", tag + e.what()});
        return;
    }
    if (!carrier_fits(*m, kind)) {
        out.push_back({"carrier-mismatch", tag + "bulk carrier " + std::string(to_string(m->carrier())) +
                                               " does not fit " + std::string(to_string(kind))});
    }
    if (kind == ConvolutionKind::multiplicative_circle && std::abs(m->first_moment()) < 1e-12) {
        out.push_back({"zero-first-moment", tag + "bulk has vanishing first moment"});
    }
    for (double v : s.spikes) {
        if (!std::isfinite(v)) {
            out.push_back({"invalid-spike", tag + "non-finite spike"});
        } else if (m->carrier() == Carrier::positive_half_line && v < 0) {
            out.push_back({"off-carrier-atom", tag + "negative spike " + std::to_string(v)});
        } else if (m->distance_to_support(spike_point(*m, v)) < on_support_distance) {
            out.push_back({"spike-in-support", tag + "spike " + std::to_string(v) + " lies in the bulk support"});
        }
    }
    if (s.source != "quantile" && s.source != "explicit" && s.source != "gaussian-hermitian") {
        out.push_back({"config-error", tag + "unknown matrix source '" + s.source + "'"});
    }
    if (s.normalize != "none" && s.normalize != "N-1" && s.normalize != "sqrt(N)") {
        out.push_back({"config-error", tag + "unknown normalization '" + s.normalize + "'"});
    }
    if (s.source == "gaussian-hermitian" && kind != ConvolutionKind::additive_real) {
        out.push_back({"config-error", tag + "Gaussian bulk only fits the additive model"});
    }
}

}  // namespace detail

/// All schema and precondition violations; empty iff run() can start.
inline std::vector<Diagnostic> validate(const json& j) {
    std::vector<Diagnostic> out;
    ExperimentConfig c;
    try {
        c = parse_config(j);
    } catch (const Error& e) {
        out.push_back({"config-error", e.what()});
        return out;
    }
    detail::check_side(c.a, "A", c.kind, out);
    detail::check_side(c.b, "B", c.kind, out);
    const std::size_t p = c.a.spikes.size(), q = c.b.spikes.size();
    if (c.trials < 1) out.push_back({"trials-not-positive", "trials must be at least 1"});
    if (c.n < 1) out.push_back({"N-too-small", "N must be positive"});
    if (c.n <= static_cast<Index>(std::max(p, q))) {
        out.push_back({"N-too-small", "N must exceed the number of spikes on each side"});
    }
    auto check_explicit = [&](const SideConfig& s, std::size_t spikes, const char* side) {
        if (s.source == "explicit" && static_cast<Index>(s.values.size() + spikes) != c.n) {
            out.push_back({"shape-mismatch", std::string(side) + ": explicit values plus spikes must number N"});
        }
    };
    check_explicit(c.a, p, "A");
    check_explicit(c.b, q, "B");
    for (const auto& e : c.epsilon) {
        if (e && !(*e > 0)) out.push_back({"invalid-epsilon", "window widths must be positive"});
    }
    if (!(c.outlier_distance > 0)) out.push_back({"config-error", "outlier_distance must be positive"});
    if (!(c.solver.tolerance > 0) || c.solver.max_iterations < 1) {
        out.push_back({"config-error", "solver tolerance and iteration cap must be positive"});
    }
    if (!(c.density.height > 0) || c.density.points < 3) {
        out.push_back({"config-error", "density height must be positive and points at least 3"});
    }
    if (!(c.tolerances.trial_fraction > 0 && c.tolerances.trial_fraction <= 1)) {
        out.push_back({"config-error", "trial_fraction must lie in (0, 1]"});
    }
    return out;
}

inline SpikedModel spiked_side(const SideConfig& s, ConvolutionKind kind) {
    return make_spiked_model(parse_measure(s.bulk, kind), s.spikes);
}

inline MatrixRecipe recipe_for(const SideConfig& s, ConvolutionKind kind, Index n) {
    const auto m = parse_measure(s.bulk, kind);
    std::vector<Spike> spikes = spiked_side(s, kind).spikes;
    if (s.source == "explicit") {
        return MatrixRecipe::explicit_diagonal(s.values, spikes, kind == ConvolutionKind::multiplicative_circle);
    }
    if (s.source == "gaussian-hermitian") {
        const Index bulk = n - static_cast<Index>(s.spikes.size());
        double scale = s.scale;
        if (s.normalize == "N-1") scale /= static_cast<double>(n - 1);
        if (s.normalize == "sqrt(N)") scale /= std::sqrt(static_cast<double>(bulk));
        return MatrixRecipe::gaussian(scale, spikes);
    }
    return MatrixRecipe::from_measure(m, spikes);
}

inline OutlierReport run_predict(const ExperimentConfig& c) {
    return predict(c.kind, spiked_side(c.a, c.kind), spiked_side(c.b, c.kind), c.predict);
}

inline DensityGrid run_density(const ExperimentConfig& c) {
    return density(parse_measure(c.a.bulk, c.kind), parse_measure(c.b.bulk, c.kind), c.kind, c.density);
}

inline SimulationConfig simulation_config(const ExperimentConfig& c) {
    SimulationConfig s;
    s.kind = c.kind;
    s.a = recipe_for(c.a, c.kind, c.n);
    s.b = recipe_for(c.b, c.kind, c.n);
    s.n = c.n;
    s.trials = c.trials;
    s.master_seed = c.seed;
    s.epsilon_overrides = c.epsilon;
    s.outlier_distance = c.outlier_distance;
    s.keep_eigenvalues = true;
    return s;
}

/// One pass/fail line of the run summary.
struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

/// Count, location and overlap checks of a simulation against its prediction.
inline std::vector<CheckResult> limit_checks(const ExperimentConfig& c, const OutlierReport& rep,
                                               const SimulationResult& sim) {
    std::vector<CheckResult> out;
    const double trials = static_cast<double>(sim.trials.size());
    {
        CheckResult r;
        r.name = "outlier counts";
        r.measured = sim.fraction_trials_matching;
        r.threshold = c.tolerances.trial_fraction;
        r.passed = r.measured >= r.threshold;
        r.detail = "fraction of trials with k+l eigenvalues in every window and no stray outlier";
        out.push_back(r);
    }
    for (std::size_t w = 0; w < sim.windows.size(); ++w) {
        const auto& win = sim.windows[w];
        const auto& s = sim.summaries[w];
        int located = 0;
        for (const auto& t : sim.trials) {
            const auto& m = t.windows[w];
            bool ok = m.count == win.expected;
            for (const auto& l : m.values) {
                ok = ok && spectral_distance(c.kind, l, win.center) <= c.tolerances.location;
            }
            located += ok ? 1 : 0;
        }
        std::ostringstream name;
        name.precision(10);
        name << "window " << w << " at " << win.center;
        CheckResult loc;
        loc.name = name.str() + " location";
        loc.measured = located / trials;
        loc.threshold = c.tolerances.trial_fraction;
        loc.passed = loc.measured >= loc.threshold;
        std::ostringstream d;
        d << "max |lambda - rho| = " << s.max_location_delta;
        loc.detail = d.str();
        out.push_back(loc);
        const auto& o = rep.outliers[w];
        auto overlap_check = [&](const char* side, const std::optional<double>& predicted, double measured, int k) {
            if (!predicted || k == 0) return;
            CheckResult r;
            r.name = name.str() + " overlap " + side;
            r.measured = std::abs(measured - *predicted);
            r.threshold = c.tolerances.overlap;
            r.passed = r.measured <= r.threshold;
            std::ostringstream dd;
            dd << "predicted " << *predicted << ", mean measured " << measured;
            r.detail = dd.str();
            out.push_back(r);
        };
        overlap_check("A", o.weight_a, s.mean_overlap_a, o.k);
        overlap_check("B", o.weight_b, s.mean_overlap_b, o.ell);
    }
    return out;
}

inline void write_summary(std::ostream& os, const ExperimentConfig& c, const OutlierReport& rep,
                          const SimulationResult* sim, const std::vector<CheckResult>& checks) {
    os.precision(10);
    os << "experiment " << c.name << " (" << to_string(c.kind) << ", N = " << c.n << ", trials = " << c.trials
       << ", seed = " << c.seed << ")\n";
    os << "predicted outliers: " << rep.outliers.size() << "\n";
    for (const auto& o : rep.outliers) {
        os << "  rho = " << o.position << "  k = " << o.k << "  l = " << o.ell << "  eps = " << o.epsilon;
        if (o.weight_a) os << "  weightA = " << *o.weight_a;
        if (o.weight_b) os << "  weightB = " << *o.weight_b;
        if (o.degenerate) os << "  (degenerate)";
        os << "\n";
    }
    if (sim) {
        os << "measured outliers per trial:";
        for (const auto& t : sim->trials) os << " " << t.detected.size();
        os << "\n";
    }
    for (const auto& r : checks) {
        os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.measured << " vs " << r.threshold << " ("
           << r.detail << ")\n";
    }
}

}  // namespace freeprob
