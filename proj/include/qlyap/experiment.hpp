#pragma once

/**
 * @file experiment.hpp
 * @brief Experiment configuration, named model presets and the check /
 * simulate / census / track commands behind the command-line tool.
 *
 * Configurations are JSON documents. Complex entries are either a number or a
 * [re, im] pair; matrices are lists of rows. See README.md for the schema.
 */

#include "qlyap/dynamics.hpp"
#include "qlyap/quantum_state.hpp"
#include "qlyap/stability.hpp"
#include "qlyap/trajectory.hpp"

#include <json.hpp>
#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlyap {

using Json = nlohmann::json;

/// Malformed or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitExperimentFailure = 1, kExitConfigError = 2 };

struct Expectations {
    std::optional<double> converged_fraction;
    std::optional<double> flatlined_fraction;
    /// Fraction of samples whose final V lies strictly inside (0.01, 0.99) * V_max.
    std::optional<double> interior_fraction;
};

struct OutputSpec {
    std::string dir = "out";
    bool csv = true;
    bool gzip = false;
};

struct ExperimentConfig {
    std::string model_name;  ///< preset name, or "custom"
    CMatrix h0;
    CMatrix h1;
    std::optional<CMatrix> target;
    std::string target_label;
    int n_samples = 50;
    std::uint64_t seed = 1;
    int jobs = 1;
    IntegratorOptions integrator;
    ConvergenceCriteria criteria;
    Expectations expect;
    OutputSpec output;
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"example3-qutrit", "twoqubit-ising", "twoqubit-ideal"};
    return names;
}

/// Note attached to presets that are tool choices rather than reference models.
inline std::string preset_note(const std::string& name) {
    if (name == "twoqubit-ideal") {
        return "ideal instance chosen for this tool; ideality is verified by the check command";
    }
    return {};
}

inline std::pair<CMatrix, CMatrix> preset_hamiltonians(const std::string& name) {
    auto off_diagonal_ones = [](int n) {
        CMatrix m = CMatrix::Ones(n, n);
        m.diagonal().setZero();
        return m;
    };
    if (name == "example3-qutrit") {
        CMatrix h0 = CMatrix::Zero(3, 3);
        h0.diagonal() << -1.0, 0.0, 1.0;
        return {h0, off_diagonal_ones(3)};
    }
    if (name == "twoqubit-ising") {
        CMatrix sx(2, 2), sz(2, 2);
        sx << 0.0, 1.0, 1.0, 0.0;
        sz << 1.0, 0.0, 0.0, -1.0;
        const CMatrix id = CMatrix::Identity(2, 2);
        auto kron = [](const CMatrix& a, const CMatrix& b) {
            CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                for (Eigen::Index j = 0; j < a.cols(); ++j)
                    out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
            return out;
        };
        return {CMatrix(0.1 * kron(sz, sz)), CMatrix(kron(sx, id) + 0.9 * kron(id, sx))};
    }
    if (name == "twoqubit-ideal") {
        CMatrix h0 = CMatrix::Zero(4, 4);
        h0.diagonal() << 0.0, 1.0, 2.5, 4.1;
        return {h0, off_diagonal_ones(4)};
    }
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// JSON parsing helpers
// ---------------------------------------------------------------------------

namespace config_detail {

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void require_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key) + ": unknown key");
    }
}

inline double number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline double positive(const Json& j, const std::string& path) {
    const double v = number(j, path);
    if (!(v > 0.0)) throw ConfigError(path + ": must be positive");
    return v;
}

inline long long integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<long long>();
}

inline bool boolean(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
    return j.get<bool>();
}

inline std::string string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a string");
    return j.get<std::string>();
}

inline double fraction(const Json& j, const std::string& path) {
    const double v = number(j, path);
    if (v < 0.0 || v > 1.0) throw ConfigError(path + ": must lie in [0, 1]");
    return v;
}

inline Complex complex_entry(const Json& j, const std::string& path) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
        return {j[0].get<double>(), j[1].get<double>()};
    }
    throw ConfigError(path + ": expected a number or a [re, im] pair");
}

inline CVector complex_vector(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty list");
    CVector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_entry(j[i], index(path, i));
    return v;
}

inline CMatrix complex_matrix(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty list of rows");
    const std::size_t n = j.size();
    CMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const std::string row_path = index(path, r);
        if (!j[r].is_array() || j[r].size() != n) {
            throw ConfigError(row_path + ": expected a row of length " + std::to_string(n) + " (matrix must be square)");
        }
        for (std::size_t c = 0; c < n; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = complex_entry(j[r][c], index(row_path, c));
        }
    }
    if (hermiticity_defect(m) > kHermiticityTol) {
        throw ConfigError(path + ": matrix is not Hermitian (defect " + std::to_string(hermiticity_defect(m)) + ")");
    }
    return (m + m.adjoint()) * 0.5;
}

/// Position of the character at 1-based offset `byte`, as reported by the JSON parser.
inline std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace config_detail

/// Density matrix from a target description: {"diag": [...]}, {"state": [...]} or {"matrix": [[...]]}.
inline std::pair<CMatrix, std::string> parse_target(const Json& j, const std::string& path) {
    using namespace config_detail;
    require_object(j, path, {"diag", "state", "matrix"});
    if (j.size() != 1) throw ConfigError(path + ": give exactly one of diag, state, matrix");
    try {
        if (j.contains("diag")) {
            const std::string p = join(path, "diag");
            if (!j["diag"].is_array() || j["diag"].empty()) throw ConfigError(p + ": expected a non-empty list");
            std::vector<double> w;
            for (std::size_t i = 0; i < j["diag"].size(); ++i) w.push_back(number(j["diag"][i], index(p, i)));
            return {DensityMatrix::diagonal(w).matrix(), "diag"};
        }
        if (j.contains("state")) {
            CVector psi = complex_vector(j["state"], join(path, "state"));
            if (psi.norm() == 0.0) throw ConfigError(join(path, "state") + ": zero vector");
            psi.normalize();
            return {DensityMatrix::pure(psi).matrix(), "state"};
        }
        const std::string p = join(path, "matrix");
        return {DensityMatrix(complex_matrix(j["matrix"], p)).matrix(), "matrix"};
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline ExperimentConfig config_from_json(const Json& root) {
    using namespace config_detail;
    require_object(root, "config",
                   {"model", "target", "n_samples", "seed", "jobs", "integrator", "classifier", "expect", "output"});
    ExperimentConfig cfg;

    if (!root.contains("model")) throw ConfigError("model: missing");
    const Json& model = root["model"];
    require_object(model, "model", {"preset", "H0", "H1"});
    if (model.contains("preset")) {
        if (model.contains("H0") || model.contains("H1")) {
            throw ConfigError("model: give either preset or H0/H1, not both");
        }
        cfg.model_name = string(model["preset"], "model.preset");
        std::tie(cfg.h0, cfg.h1) = preset_hamiltonians(cfg.model_name);
    } else {
        if (!model.contains("H0")) throw ConfigError("model.H0: missing");
        if (!model.contains("H1")) throw ConfigError("model.H1: missing");
        cfg.model_name = "custom";
        cfg.h0 = complex_matrix(model["H0"], "model.H0");
        cfg.h1 = complex_matrix(model["H1"], "model.H1");
        if (cfg.h0.rows() != cfg.h1.rows()) throw ConfigError("model.H1: dimension differs from model.H0");
        if (cfg.h0.rows() < 2) throw ConfigError("model.H0: dimension must be at least 2");
    }

    if (root.contains("target")) {
        auto [rho, label] = parse_target(root["target"], "target");
        if (rho.rows() != cfg.h0.rows()) {
            throw ConfigError("target: dimension " + std::to_string(rho.rows()) + " differs from model dimension " +
                              std::to_string(cfg.h0.rows()));
        }
        cfg.target = rho;
        cfg.target_label = label;
    }
    if (root.contains("n_samples")) {
        const long long n = integer(root["n_samples"], "n_samples");
        if (n <= 0) throw ConfigError("n_samples: must be positive");
        cfg.n_samples = static_cast<int>(n);
    }
    if (root.contains("seed")) {
        const long long s = integer(root["seed"], "seed");
        if (s < 0) throw ConfigError("seed: must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (root.contains("jobs")) {
        const long long jb = integer(root["jobs"], "jobs");
        if (jb <= 0) throw ConfigError("jobs: must be positive");
        cfg.jobs = static_cast<int>(jb);
    }
    if (root.contains("integrator")) {
        const Json& j = root["integrator"];
        require_object(j, "integrator",
                       {"rel_tol", "abs_tol", "t_final", "sample_count", "reduced_mode", "reprojection_interval",
                        "exact_target_rotation"});
        auto& o = cfg.integrator;
        if (j.contains("rel_tol")) o.rel_tol = positive(j["rel_tol"], "integrator.rel_tol");
        if (j.contains("abs_tol")) o.abs_tol = positive(j["abs_tol"], "integrator.abs_tol");
        if (j.contains("t_final")) o.t_final = positive(j["t_final"], "integrator.t_final");
        if (j.contains("sample_count")) {
            const long long c = integer(j["sample_count"], "integrator.sample_count");
            if (c < 2) throw ConfigError("integrator.sample_count: must be at least 2");
            o.sample_count = static_cast<int>(c);
        }
        if (j.contains("reduced_mode")) o.reduced_mode = boolean(j["reduced_mode"], "integrator.reduced_mode");
        if (j.contains("reprojection_interval")) {
            const long long k = integer(j["reprojection_interval"], "integrator.reprojection_interval");
            if (k < 0) throw ConfigError("integrator.reprojection_interval: must be non-negative");
            o.reprojection_interval = static_cast<int>(k);
        }
        if (j.contains("exact_target_rotation")) {
            o.exact_target_rotation = boolean(j["exact_target_rotation"], "integrator.exact_target_rotation");
        }
    }
    if (root.contains("classifier")) {
        const Json& j = root["classifier"];
        require_object(j, "classifier",
                       {"tail_fraction", "converged_slope", "converged_value", "flat_slope", "flat_value"});
        auto& c = cfg.criteria;
        if (j.contains("tail_fraction")) c.tail_fraction = fraction(j["tail_fraction"], "classifier.tail_fraction");
        if (j.contains("converged_slope")) c.converged_slope = number(j["converged_slope"], "classifier.converged_slope");
        if (j.contains("converged_value")) c.converged_value = positive(j["converged_value"], "classifier.converged_value");
        if (j.contains("flat_slope")) c.flat_slope = positive(j["flat_slope"], "classifier.flat_slope");
        if (j.contains("flat_value")) c.flat_value = positive(j["flat_value"], "classifier.flat_value");
    }
    if (root.contains("expect")) {
        const Json& j = root["expect"];
        require_object(j, "expect", {"converged_fraction", "flatlined_fraction", "interior_fraction"});
        if (j.contains("converged_fraction")) cfg.expect.converged_fraction = fraction(j["converged_fraction"], "expect.converged_fraction");
        if (j.contains("flatlined_fraction")) cfg.expect.flatlined_fraction = fraction(j["flatlined_fraction"], "expect.flatlined_fraction");
        if (j.contains("interior_fraction")) cfg.expect.interior_fraction = fraction(j["interior_fraction"], "expect.interior_fraction");
    }
    if (root.contains("output")) {
        const Json& j = root["output"];
        require_object(j, "output", {"dir", "csv", "gzip"});
        if (j.contains("dir")) cfg.output.dir = string(j["dir"], "output.dir");
        if (j.contains("csv")) cfg.output.csv = boolean(j["csv"], "output.csv");
        if (j.contains("gzip")) cfg.output.gzip = boolean(j["gzip"], "output.gzip");
    }
    return cfg;
}

/// Parses config text; syntax errors report line and column within `source`.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(source + ": " + config_detail::line_column(text, e.byte) + ": syntax error: " + e.what());
    }
    try {
        return config_from_json(root);
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.model_name = name;
    std::tie(cfg.h0, cfg.h1) = preset_hamiltonians(name);
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON serialization of results
// ---------------------------------------------------------------------------

inline Json complex_to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

inline Json matrix_to_json(const CMatrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
        rows.push_back(row);
    }
    return rows;
}

inline Json pair_to_json(const LevelPair& p) { return Json::array({p.k + 1, p.l + 1}); }

inline Json signature_to_json(const SpectrumSignature& sig) {
    return Json{{"values", sig.values}, {"multiplicities", sig.multiplicities}, {"class", to_string(sig.cls)}};
}

/// Largest V over the isospectral orbit of rho: Tr(rho^2) - sum_k l_k^down l_k^up.
inline double orbit_max_lyapunov(const CMatrix& rho) {
    const RVector ev = Eigen::SelfAdjointEigenSolver<CMatrix>(rho, Eigen::EigenvaluesOnly).eigenvalues();
    const Eigen::Index n = ev.size();
    double anti = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) anti += ev(k) * ev(n - 1 - k);
    return ev.squaredNorm() - anti;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CommandResult {
    int exit_code = kExitOk;
    Json report;
    std::vector<std::string> files;  ///< paths written
};

inline ControlModel model_of(const ExperimentConfig& cfg) {
    if (!cfg.target) throw ConfigError("target: required by this command");
    return build_model(Hamiltonian(cfg.h0), Hamiltonian(cfg.h1), DensityMatrix(*cfg.target));
}

inline std::filesystem::path prepare_output_dir(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.output.dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("output.dir: cannot create '" + cfg.output.dir + "': " + ec.message());
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// Ideality, target spectrum, orbit dimension, stationary count and exceptionality.
inline Json check_report(const ExperimentConfig& cfg) {
    Json r;
    r["model"] = cfg.model_name;
    if (const std::string note = preset_note(cfg.model_name); !note.empty()) r["model_note"] = note;
    r["dimension"] = cfg.h0.rows();

    const IdealityReport ideal = check_ideal(cfg.h0, cfg.h1);
    Json sr{{"strongly_regular", ideal.drift.strongly_regular},
            {"regular", ideal.drift.regular},
            {"energies", ideal.drift.energies}};
    if (ideal.drift.zero_frequency) sr["zero_frequency_pair"] = pair_to_json(*ideal.drift.zero_frequency);
    if (ideal.drift.coincidence) {
        sr["coinciding_pairs"] = Json::array({pair_to_json(ideal.drift.coincidence->first),
                                              pair_to_json(ideal.drift.coincidence->second)});
    }
    r["strong_regularity"] = sr;
    Json zeros = Json::array();
    for (const auto& p : ideal.control.zero_entries) zeros.push_back(pair_to_json(p));
    r["full_connectivity"] = Json{{"fully_connected", ideal.control.fully_connected}, {"zero_pairs", zeros}};
    r["ideal"] = ideal.ideal();

    if (cfg.target) {
        const CMatrix& rho = *cfg.target;
        const SpectrumSignature sig = spectrum_signature(rho);
        const DriftFrame frame = drift_eigenframe(cfg.h0);
        Json t;
        t["kind"] = cfg.target_label;
        t["signature"] = signature_to_json(sig);
        t["flag_manifold_dim"] = flag_manifold_dim(sig);
        t["stationary"] = max_abs_entry(commutator(cfg.h0, rho)) <= kStationaryTol;
        t["diagonal_stationary_count"] = count_diagonal_stationary(sig);
        t["v_max"] = orbit_max_lyapunov(rho);
        if (sig.has_pseudo_pure_shape()) {
            const ExceptionalReport ex = is_pseudo_pure_exceptional(frame.to_frame(rho));
            Json e{{"exceptional", ex.exceptional}, {"nonzero_pairs", ex.nonzero_pairs}, {"w", ex.w}, {"u", ex.u}};
            if (ex.pair) e["pair"] = pair_to_json(*ex.pair);
            t["pseudo_pure"] = e;
        }
        r["target"] = t;
    }
    return r;
}

inline CommandResult cmd_check(const ExperimentConfig& cfg) {
    CommandResult res;
    res.report = check_report(cfg);
    const auto dir = prepare_output_dir(cfg);
    write_text(dir / "check.json", res.report.dump(2) + "\n");
    res.files.push_back((dir / "check.json").string());
    return res;
}

namespace experiment_detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

inline std::string trajectories_csv(const std::vector<SampleOutcome>& outcomes) {
    std::string out = "sample_id,t,V,f\n";
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const Trajectory& tr = o.trajectory;
        for (std::size_t j = 0; j < tr.times.size(); ++j) {
            out += std::to_string(o.sample_id);
            out += ',';
            out += format_double(tr.times[j]);
            out += ',';
            out += format_double(tr.lyapunov[j]);
            out += ',';
            out += format_double(tr.controls[j]);
            out += '\n';
        }
    }
    return out;
}

inline void write_gzip(const std::filesystem::path& path, const std::string& text) {
    gzFile f = gzopen(path.string().c_str(), "wb9");
    if (!f) throw std::runtime_error("cannot open " + path.string());
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    const int closed = gzclose(f);
    if ((written == 0 && !text.empty()) || closed != Z_OK) throw std::runtime_error("gzip write failed: " + path.string());
}

}  // namespace experiment_detail

/// Batch statistics shared by simulate and track.
inline Json batch_summary(const ExperimentConfig& cfg, const ControlModel& model,
                          const std::vector<SampleOutcome>& outcomes, bool& expectations_met) {
    const double v_max = orbit_max_lyapunov(model.rho_d0().matrix());
    int converged = 0, flatlined = 0, undecided = 0, failed = 0, interior = 0;
    double worst_increase = 0.0;
    Json samples = Json::array();
    for (const auto& o : outcomes) {
        Json s{{"sample_id", o.sample_id}, {"seed", o.seed}, {"ok", o.ok}};
        if (!o.ok) {
            ++failed;
            s["error"] = o.error;
            samples.push_back(s);
            continue;
        }
        const auto& v = o.trajectory.lyapunov;
        for (std::size_t j = 1; j < v.size(); ++j) worst_increase = std::max(worst_increase, v[j] - v[j - 1]);
        const double vf = o.assessment.final_value;
        if (vf > 0.01 * v_max && vf < 0.99 * v_max) ++interior;
        switch (o.assessment.verdict) {
            case ConvergenceVerdict::converged: ++converged; break;
            case ConvergenceVerdict::flatlined: ++flatlined; break;
            case ConvergenceVerdict::undecided: ++undecided; break;
        }
        s["verdict"] = to_string(o.assessment.verdict);
        s["final_V"] = vf;
        s["log_slope"] = o.assessment.log_slope;
        s["spectrum_drift"] = o.trajectory.stats.max_spectrum_drift;
        s["steps"] = o.trajectory.stats.stepper.accepted_steps;
        if (!o.trajectory.warnings.empty()) s["warnings"] = o.trajectory.warnings;
        samples.push_back(s);
    }
    const double n = static_cast<double>(std::max<std::size_t>(outcomes.size(), 1));
    Json counts{{"converged", converged}, {"flatlined", flatlined}, {"undecided", undecided}, {"failed", failed}};
    Json fractions{{"converged", converged / n}, {"flatlined", flatlined / n}, {"interior", interior / n}};

    Json expect = Json::object();
    expectations_met = true;
    auto judge = [&](const char* key, const std::optional<double>& want, double got) {
        if (!want) return;
        const bool ok = got >= *want;
        expect[key] = Json{{"required", *want}, {"observed", got}, {"met", ok}};
        expectations_met = expectations_met && ok;
    };
    judge("converged_fraction", cfg.expect.converged_fraction, converged / n);
    judge("flatlined_fraction", cfg.expect.flatlined_fraction, flatlined / n);
    judge("interior_fraction", cfg.expect.interior_fraction, interior / n);

    Json r;
    r["model"] = cfg.model_name;
    r["n_samples"] = outcomes.size();
    r["seed"] = cfg.seed;
    r["t_final"] = cfg.integrator.t_final;
    r["target_stationary"] = model.target_stationary();
    r["v_max"] = v_max;
    r["counts"] = counts;
    r["fractions"] = fractions;
    r["max_V_increase"] = worst_increase;
    if (!expect.empty()) r["expectations"] = expect;
    r["samples"] = samples;
    return r;
}

inline CommandResult run_and_record(const ExperimentConfig& cfg, const ControlModel& model, Json extra) {
    IntegratorOptions opts = cfg.integrator;
    opts.store_states = false;
    const auto outcomes = run_batch(model, cfg.n_samples, cfg.seed, opts, cfg.criteria, cfg.jobs);

    CommandResult res;
    bool met = true;
    res.report = batch_summary(cfg, model, outcomes, met);
    for (auto& [k, v] : extra.items()) res.report[k] = v;

    const auto dir = prepare_output_dir(cfg);
    if (cfg.output.csv) {
        const std::string csv = experiment_detail::trajectories_csv(outcomes);
        if (cfg.output.gzip) {
            experiment_detail::write_gzip(dir / "trajectories.csv.gz", csv);
            res.files.push_back((dir / "trajectories.csv.gz").string());
        } else {
            write_text(dir / "trajectories.csv", csv);
            res.files.push_back((dir / "trajectories.csv").string());
        }
    }
    write_text(dir / "summary.json", res.report.dump(2) + "\n");
    res.files.push_back((dir / "summary.json").string());

    const int failed = res.report["counts"]["failed"].get<int>();
    if (failed == cfg.n_samples || !met) res.exit_code = kExitExperimentFailure;
    return res;
}

inline CommandResult cmd_simulate(const ExperimentConfig& cfg) {
    const ControlModel model = model_of(cfg);
    return run_and_record(cfg, model, Json{{"command", "simulate"}});
}

/// Exceptionality verdict for pseudo-pure targets, then the same batch as simulate.
inline CommandResult cmd_track(const ExperimentConfig& cfg) {
    const ControlModel model = model_of(cfg);
    Json extra{{"command", "track"}};
    const SpectrumSignature sig = spectrum_signature(model.rho_d0().matrix());
    if (sig.has_pseudo_pure_shape()) {
        const ExceptionalReport ex =
            is_pseudo_pure_exceptional(model.drift_frame().to_frame(model.rho_d0().matrix()));
        extra["exceptional"] = ex.exceptional;
        if (ex.pair) extra["exceptional_pair"] = pair_to_json(*ex.pair);
    } else {
        extra["notice"] = "target spectrum is not pseudo-pure; running as simulate";
    }
    return run_and_record(cfg, model, extra);
}

/// Classification and Hessian inertia of every diagonal stationary state.
inline CommandResult cmd_census(const ExperimentConfig& cfg) {
    const ControlModel model = model_of(cfg);
    CommandResult res;
    if (!model.target_stationary()) {
        res.exit_code = kExitExperimentFailure;
        res.report = Json{{"command", "census"},
                          {"error", "census is defined only for stationary targets: [H0, rho_d] != 0"}};
        return res;
    }
    Json rows = Json::array();
    int sinks = 0;
    for (const CMatrix& state : enumerate_diagonal_stationary(model)) {
        Json row;
        const CMatrix in_frame = model.drift_frame().to_frame(state);
        std::vector<double> diag;
        for (Eigen::Index k = 0; k < in_frame.rows(); ++k) diag.push_back(in_frame(k, k).real());
        row["diagonal"] = diag;
        try {
            const StationaryClassification c = classify_stationary(state, model);
            row["V0"] = c.lyapunov_level;
            row["tangent_dim"] = c.tangent_dim;
            row["n_stable"] = c.n_stable;
            row["n_unstable"] = c.n_unstable;
            row["n_center"] = c.n_center;
            row["verdict"] = to_string(c.verdict);
            Json ev = Json::array();
            for (const Complex& z : c.eigenvalues) ev.push_back(complex_to_json(z));
            row["eigenvalues"] = ev;
            if (!c.diagnostic.empty()) row["diagnostic"] = c.diagnostic;
            if (c.verdict == StationaryVerdict::hyperbolic_sink) ++sinks;
            const HessianSignature h = hessian_signature(state, model.rho_d0().matrix(), model.basis());
            row["hessian"] = Json{{"n_plus", h.n_plus}, {"n_minus", h.n_minus}, {"n_zero", h.n_zero}};
        } catch (const std::exception& e) {
            row["error"] = e.what();
        }
        rows.push_back(row);
    }
    res.report = Json{{"command", "census"},
                      {"model", cfg.model_name},
                      {"target_signature", signature_to_json(spectrum_signature(model.rho_d0().matrix()))},
                      {"rows", rows},
                      {"sinks", sinks}};
    const auto dir = prepare_output_dir(cfg);
    write_text(dir / "census.json", res.report.dump(2) + "\n");
    res.files.push_back((dir / "census.json").string());
    return res;
}

}  // namespace qlyap
