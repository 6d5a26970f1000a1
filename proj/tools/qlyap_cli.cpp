// Command-line front end: qlyap {check|simulate|census|track} [options]

#include "qlyap/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

struct Overrides {
    std::string config_path;
    std::string preset;
    std::optional<int> samples;
    std::optional<std::uint64_t> seed;
    std::optional<double> t_final;
    std::optional<std::string> out;
    std::optional<int> jobs;
    std::optional<std::string> target_json;
    std::vector<double> target_diag;
    std::vector<double> target_state;
    bool gzip = false;
    bool no_csv = false;
    std::optional<double> expect_converged;
    std::optional<double> expect_flatlined;
    std::optional<double> expect_interior;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
    cmd->add_option("--preset", o.preset, "named model: example3-qutrit, twoqubit-ising, twoqubit-ideal");
    cmd->add_option("--samples", o.samples, "number of random initial states")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "base random seed");
    cmd->add_option("--t-final", o.t_final, "integration horizon")->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--target", o.target_json, R"(target as JSON, e.g. '{"state": [1, 0, 0, 1]}')");
    cmd->add_option("--target-diag", o.target_diag, "diagonal target weights")->delimiter(',');
    cmd->add_option("--target-state", o.target_state, "real state vector, normalized")->delimiter(',');
    cmd->add_flag("--gzip", o.gzip, "gzip the trajectory CSV");
    cmd->add_flag("--no-csv", o.no_csv, "skip the trajectory CSV");
    cmd->add_option("--expect-converged", o.expect_converged, "required converged fraction")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--expect-flatlined", o.expect_flatlined, "required flatlined fraction")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--expect-interior", o.expect_interior, "required fraction ending inside (0.01, 0.99) V_max")
        ->check(CLI::Range(0.0, 1.0));
}

qlyap::ExperimentConfig resolve(const Overrides& o) {
    using qlyap::ConfigError;
    if (o.config_path.empty() && o.preset.empty()) throw ConfigError("give --config or --preset");
    qlyap::ExperimentConfig cfg =
        o.config_path.empty() ? qlyap::preset_config(o.preset) : qlyap::load_config(o.config_path);
    if (!o.config_path.empty() && !o.preset.empty()) {
        std::tie(cfg.h0, cfg.h1) = qlyap::preset_hamiltonians(o.preset);
        cfg.model_name = o.preset;
        if (cfg.target && cfg.target->rows() != cfg.h0.rows()) throw ConfigError("--preset: dimension differs from config target");
    }

    const int given = (o.target_json ? 1 : 0) + (o.target_diag.empty() ? 0 : 1) + (o.target_state.empty() ? 0 : 1);
    if (given > 1) throw ConfigError("give at most one of --target, --target-diag, --target-state");
    std::optional<qlyap::Json> target;
    if (o.target_json) {
        try {
            target = qlyap::Json::parse(*o.target_json);
        } catch (const qlyap::Json::parse_error& e) {
            throw ConfigError(std::string("--target: ") + e.what());
        }
    } else if (!o.target_diag.empty()) {
        target = qlyap::Json{{"diag", o.target_diag}};
    } else if (!o.target_state.empty()) {
        target = qlyap::Json{{"state", o.target_state}};
    }
    if (target) {
        auto [rho, label] = qlyap::parse_target(*target, "target");
        if (rho.rows() != cfg.h0.rows()) throw ConfigError("target: dimension differs from model dimension");
        cfg.target = rho;
        cfg.target_label = label;
    }

    if (o.samples) cfg.n_samples = *o.samples;
    if (o.seed) cfg.seed = *o.seed;
    if (o.t_final) cfg.integrator.t_final = *o.t_final;
    if (o.out) cfg.output.dir = *o.out;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.gzip) cfg.output.gzip = true;
    if (o.no_csv) cfg.output.csv = false;
    if (o.expect_converged) cfg.expect.converged_fraction = o.expect_converged;
    if (o.expect_flatlined) cfg.expect.flatlined_fraction = o.expect_flatlined;
    if (o.expect_interior) cfg.expect.interior_fraction = o.expect_interior;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lyapunov feedback control of density-operator dynamics"};
    app.require_subcommand(1);

    Overrides o;
    auto* check = app.add_subcommand("check", "ideality, target spectrum and exceptionality diagnostics");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo batch from random isospectral initial states");
    auto* census = app.add_subcommand("census", "classify every diagonal stationary state");
    auto* track = app.add_subcommand("track", "exceptionality verdict and batch for a pseudo-pure target");
    for (auto* cmd : {check, simulate, census, track}) add_common(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return qlyap::kExitConfigError;
    }

    try {
        const qlyap::ExperimentConfig cfg = resolve(o);
        qlyap::CommandResult res;
        if (*check) {
            res = qlyap::cmd_check(cfg);
        } else if (*simulate) {
            res = qlyap::cmd_simulate(cfg);
        } else if (*census) {
            res = qlyap::cmd_census(cfg);
        } else {
            res = qlyap::cmd_track(cfg);
        }
        qlyap::Json shown = res.report;
        if (shown.contains("samples")) shown.erase("samples");
        std::cout << shown.dump(2) << "\n";
        for (const auto& f : res.files) std::cerr << "wrote " << f << "\n";
        return res.exit_code;
    } catch (const qlyap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return qlyap::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return qlyap::kExitExperimentFailure;
    }
}
