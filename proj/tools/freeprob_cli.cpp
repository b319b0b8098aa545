// freeprob: predict, simulate, run or validate an experiment config.
//
// Exit status: 0 ok, 2 solver non-convergence, 3 config error,
// 4 a theorem check failed.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "freeprob/config.hpp"

namespace fs = std::filesystem;
using namespace freeprob;

namespace {

int verbosity = 0;

void log(int level, const std::string& msg) {
    if (verbosity >= level) std::cerr << msg << "\n";
}

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::non_convergence:
        case ErrorCode::ladder_non_convergence:
        case ErrorCode::inconsistent_extrapolation:
        case ErrorCode::stencil_leaves_gap:
            return 2;
        default:
            return 3;
    }
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::config_error, "cannot write " + p.string());
    out << text;
}

template <class F>
void write_with(const fs::path& p, F&& f) {
    std::ostringstream os;
    f(os);
    write_file(p, os.str());
}

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

ExperimentConfig load(const Options& o, nlohmann::json* raw = nullptr) {
    std::ifstream in(o.config);
    if (!in) throw Error(ErrorCode::config_error, "cannot read " + o.config);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_error, e.what());
    }
    if (o.seed) j["seed"] = *o.seed;
    const auto diags = validate(j);
    if (!diags.empty()) {
        for (const auto& d : diags) std::cerr << d.code << ": " << d.message << "\n";
        throw Error(ErrorCode::config_error, "config has " + std::to_string(diags.size()) + " problem(s)");
    }
    if (raw) *raw = j;
    auto c = parse_config(j);
    if (!o.out.empty()) c.output = o.out;
    return c;
}

OutlierReport do_predict(const ExperimentConfig& c, const fs::path& dir) {
    fs::create_directories(dir);
    write_file(dir / "config.json", resolved_json(c).dump(2) + "\n");
    log(1, "predicting outliers");
    const auto rep = run_predict(c);
    write_file(dir / "outliers.json", to_json(rep).dump(2) + "\n");
    write_with(dir / "outliers.csv", [&](std::ostream& os) { write_csv(os, rep); });
    write_file(dir / "support.json", to_json(rep.K).dump(2) + "\n");
    log(1, "inverting the density");
    const auto grid = run_density(c);
    write_with(dir / "density.csv", [&](std::ostream& os) { write_csv(os, grid); });
    log(1, std::to_string(rep.outliers.size()) + " outlier(s) predicted");
    return rep;
}

SimulationResult do_simulate(const ExperimentConfig& c, const OutlierReport& rep, const fs::path& dir) {
    log(1, "simulating " + std::to_string(c.trials) + " trial(s) at N = " + std::to_string(c.n));
    const auto sim = run_monte_carlo(simulation_config(c), rep);
    if (c.write_spectra) write_with(dir / "spectra.csv", [&](std::ostream& os) { write_spectra_csv(os, sim); });
    write_with(dir / "mc_outliers.csv", [&](std::ostream& os) { write_outliers_csv(os, sim); });
    write_with(dir / "overlaps.csv", [&](std::ostream& os) { write_overlaps_csv(os, sim); });
    write_with(dir / "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, sim); });
    write_file(dir / "simulation.json", to_json(sim).dump(2) + "\n");
    return sim;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"free convolutions, outlier predictions and spiked-model simulations"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", verbosity, "more progress output (repeatable)");

    Options opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opts.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-s,--seed", opts.seed, "override the master seed");
        sub->add_option("-o,--out", opts.out, "output directory (overrides the config)");
    };
    auto* predict_cmd = app.add_subcommand("predict", "support, density and predicted outliers");
    auto* simulate_cmd = app.add_subcommand("simulate", "prediction plus Monte Carlo trials");
    auto* run_cmd = app.add_subcommand("run", "simulate and check every prediction");
    auto* validate_cmd = app.add_subcommand("validate", "list config problems");
    for (auto* s : {predict_cmd, simulate_cmd, run_cmd, validate_cmd}) add_common(s);

    CLI11_PARSE(app, argc, argv);

    if (validate_cmd->parsed()) {
        return guarded([&] {
            std::ifstream in(opts.config);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                std::cout << "config-error: " << e.what() << "\n";
                return 3;
            }
            const auto diags = validate(j);
            for (const auto& d : diags) std::cout << d.code << ": " << d.message << "\n";
            if (diags.empty()) std::cout << "ok\n";
            return diags.empty() ? 0 : 3;
        });
    }

    return guarded([&] {
        const auto c = load(opts);
        const fs::path dir = c.output;
        const auto rep = do_predict(c, dir);
        if (predict_cmd->parsed()) {
            write_with(dir / "summary.txt", [&](std::ostream& os) { write_summary(os, c, rep, nullptr, {}); });
            write_summary(std::cout, c, rep, nullptr, {});
            return 0;
        }
        const auto sim = do_simulate(c, rep, dir);
        std::vector<CheckResult> checks;
        if (run_cmd->parsed()) checks = limit_checks(c, rep, sim);
        write_with(dir / "summary.txt", [&](std::ostream& os) { write_summary(os, c, rep, &sim, checks); });
        write_summary(std::cout, c, rep, &sim, checks);
        for (const auto& r : checks) {
            if (!r.passed) return 4;
        }
        return 0;
    });
}
