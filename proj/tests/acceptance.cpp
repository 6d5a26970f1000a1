#include "qlyap/stability.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace qlyap;
using namespace qlyap::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s | %s | %.1f s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

ControlModel random_model(int n, std::mt19937_64& rng) {
    return build_model(Hamiltonian(random_hermitian(n, rng)), Hamiltonian(random_hermitian(n, rng, 0.5)),
                       DensityMatrix(random_density(n, rng)));
}

ControlModel ideal_twoqubit(const DensityMatrix& target) {
    return build_model(Hamiltonian::diagonal({0.0, 1.0, 2.5, 4.1}), all_ones_control(4), target);
}

ControlModel ladder_qutrit(const std::vector<double>& target) {
    return build_model(Hamiltonian::diagonal({-1.0, 0.0, 1.0}), all_ones_control(3), DensityMatrix::diagonal(target));
}

bool same_matrix(const CMatrix& a, const CMatrix& b) { return max_abs_entry(CMatrix(a - b)) < 1e-12; }

Outcome lyapunov_identity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    IntegratorOptions o;
    o.t_final = 100;
    o.sample_count = 201;
    o.store_states = false;
    double worst_identity = 0.0, worst_increase = 0.0;
    for (int i = 0; i < 200; ++i) {
        const int n = 2 + i % 3;
        const ControlModel m = random_model(n, rng);
        const Trajectory t = integrate(m, sample_isospectral(m.rho_d0(), 1000 + i).matrix(), o);
        for (std::size_t j = 0; j < t.times.size(); ++j) {
            const double f = t.controls[j];
            worst_identity = std::max(worst_identity, std::abs(t.lyapunov_rate[j] + f * f) / std::max(1.0, f * f));
            if (j > 0) worst_increase = std::max(worst_increase, t.lyapunov[j] - t.lyapunov[j - 1]);
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst_identity <= 1e-6 && worst_increase <= 1e-8 && elapsed < 120.0,
            "max |dV/dt + f^2| " + fmt("%.2e", worst_identity) + ", max V increase " + fmt("%.2e", worst_increase)};
}

Outcome isospectral_conservation() {
    std::mt19937_64 rng(202);
    IntegratorOptions o;
    o.t_final = 300;
    o.store_states = false;
    double state = 0.0, target = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int n = 2 + i % 3;
        const ControlModel m = random_model(n, rng);
        const Trajectory t = integrate(m, sample_isospectral(m.rho_d0(), 2000 + i).matrix(), o);
        state = std::max(state, t.stats.max_spectrum_drift);
        target = std::max(target, t.stats.max_target_spectrum_drift);
    }
    return {state <= 1e-8 && target <= 1e-8,
            "max drift rho " + fmt("%.2e", state) + ", rho_d " + fmt("%.2e", target)};
}

Outcome invariant_set_membership() {
    CVector bell = CVector::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const ControlModel m = ideal_twoqubit(DensityMatrix::pure(bell));
    if (!check_ideal(m.h0().matrix(), m.h1().matrix()).ideal()) return {false, "model is not ideal"};
    IntegratorOptions o;
    o.store_states = false;
    const auto outcomes = run_batch(m, 60, 11, o);
    int used = 0;
    double worst = 0.0;
    for (const auto& s : outcomes) {
        if (used == 50) break;
        if (!s.ok || s.assessment.verdict != ConvergenceVerdict::flatlined) continue;
        worst = std::max(worst, lasalle_membership(s.trajectory.final_state, s.trajectory.final_target, m).max_offdiag);
        ++used;
    }
    return {used == 50 && worst <= 1e-3,
            std::to_string(used) + " flatlined endpoints, max off-diagonal commutator " + fmt("%.2e", worst)};
}

Outcome qutrit_morse_structure() {
    const ControlModel m = build_model(ideal_drift(3), all_ones_control(3), DensityMatrix::diagonal({0.25, 0.25, 0.5}));
    const CMatrix& rd = m.rho_d0().matrix();
    const HessianSignature at = hessian_signature(rd, rd, m.basis());
    bool ok = at.n_plus == 4 && at.n_minus == 0 && at.n_zero == 0;
    std::string detail = "target (" + std::to_string(at.n_plus) + "," + std::to_string(at.n_minus) + "," +
                         std::to_string(at.n_zero) + ")";
    int others = 0;
    for (const CMatrix& s : enumerate_diagonal_stationary(m)) {
        if (same_matrix(s, rd)) continue;
        const HessianSignature h = hessian_signature(s, rd, m.basis());
        ok = ok && h.n_minus >= 1;
        detail += ", other n_minus " + std::to_string(h.n_minus);
        ++others;
    }
    return {ok && others == 2, detail};
}

Outcome twoqubit_census() {
    const auto t0 = Clock::now();
    const double a = 0.35, b = 0.15;
    const ControlModel m = ideal_twoqubit(DensityMatrix::diagonal({a, a, b, b}));
    int sinks = 0, sources = 0, saddles = 0;
    bool ok = true;
    for (const CMatrix& s : enumerate_diagonal_stationary(m)) {
        const StationaryClassification c = classify_stationary(s, m);
        const double d0 = s(0, 0).real(), d1 = s(1, 1).real();
        if (d0 == a && d1 == a) {
            ok = ok && c.n_stable == 8 && c.verdict == StationaryVerdict::hyperbolic_sink &&
                 std::abs(c.lyapunov_level) < 1e-12;
            ++sinks;
        } else if (d0 == b && d1 == b) {
            ok = ok && c.n_unstable == 8 && c.verdict == StationaryVerdict::hyperbolic_source &&
                 std::abs(c.lyapunov_level - 2 * (a - b) * (a - b)) < 1e-12;
            ++sources;
        } else {
            ok = ok && c.n_stable == 2 && c.n_unstable == 2 && c.n_center == 4 &&
                 std::abs(c.lyapunov_level - (a - b) * (a - b)) < 1e-12;
            int imaginary = 0;
            for (const Complex& z : c.eigenvalues) {
                if (std::abs(z.real()) <= c.zero_eps && std::abs(z.imag()) > c.zero_eps) ++imaginary;
            }
            ok = ok && imaginary == 4;
            ++saddles;
        }
    }
    const double elapsed = seconds_since(t0);
    ok = ok && sinks == 1 && sources == 1 && saddles == 4 && elapsed < 30.0;
    return {ok, std::to_string(sinks) + " sink (8,0,0), " + std::to_string(sources) + " source (0,8,0), " +
                    std::to_string(saddles) + " states (2,2,4)"};
}

Outcome qutrit_reproduction() {
    const auto t0 = Clock::now();
    IntegratorOptions o;
    o.store_states = false;
    const auto conv = run_batch(ladder_qutrit({1.0, 0.0, 0.0}), 50, 7, o);
    int converged = 0;
    for (const auto& s : conv) {
        if (s.ok && s.assessment.verdict == ConvergenceVerdict::converged && s.assessment.final_value < 1e-4) ++converged;
    }

    const ControlModel flat_model = ladder_qutrit({0.0, 1.0, 0.0});
    int flatlined = 0;
    double relation = 0.0, unsquared = 0.0;
    for (const auto& s : run_batch(flat_model, 50, 7, o)) {
        if (!s.ok || s.assessment.verdict != ConvergenceVerdict::flatlined || s.assessment.final_value <= 1e-3) continue;
        ++flatlined;
        const CMatrix r = flat_model.drift_frame().to_frame(s.trajectory.final_state);
        const double b11 = r(0, 0).real();
        relation = std::max(relation, ladder_qutrit_relation_residual(r));
        unsquared = std::max(unsquared, std::abs(std::abs(r(0, 1)) - (b11 - 2 * b11 * b11)));
    }
    const double elapsed = seconds_since(t0);
    const bool ok = converged >= 45 && flatlined >= 30 && relation <= 1e-3 && elapsed < 300.0;
    return {ok, "(a) " + std::to_string(converged) + "/50 converged, (b) " + std::to_string(flatlined) +
                    "/50 flatlined, relation residual " + fmt("%.2e", relation) +
                    " (linear |b12| form: " + fmt("%.2e", unsquared) + ")"};
}

Outcome tracking_reproduction() {
    const auto t0 = Clock::now();
    IntegratorOptions o;
    o.store_states = false;
    CVector psi(4);
    psi << 1.0, 0.0, 0.0, 2.0;
    const ControlModel generic = ideal_twoqubit(DensityMatrix::pure(psi.normalized()));
    const bool ex_generic =
        is_pseudo_pure_exceptional(generic.drift_frame().to_frame(generic.rho_d0().matrix())).exceptional;
    int converged = 0;
    for (const auto& s : run_batch(generic, 50, 7, o)) {
        if (s.ok && s.assessment.verdict == ConvergenceVerdict::converged) ++converged;
    }

    CVector bell = CVector::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const ControlModel bm = ideal_twoqubit(DensityMatrix::pure(bell));
    const bool ex_bell = is_pseudo_pure_exceptional(bm.drift_frame().to_frame(bm.rho_d0().matrix())).exceptional;
    int interior = 0;
    for (const auto& s : run_batch(bm, 50, 7, o)) {
        if (s.ok && s.assessment.final_value > 0.01 && s.assessment.final_value < 0.99) ++interior;
    }
    const double elapsed = seconds_since(t0);
    const bool ok = !ex_generic && converged >= 45 && ex_bell && interior >= 30 && elapsed < 600.0;
    return {ok, std::string("generic exceptional=") + (ex_generic ? "true" : "false") + ", " +
                    std::to_string(converged) + "/50 converged; Bell exceptional=" + (ex_bell ? "true" : "false") +
                    ", " + std::to_string(interior) + "/50 interior"};
}

void partitions(int remaining, int max_part, std::vector<int>& parts, std::vector<std::vector<int>>& out) {
    if (remaining == 0) {
        out.push_back(parts);
        return;
    }
    for (int p = std::min(remaining, max_part); p >= 1; --p) {
        parts.push_back(p);
        partitions(remaining - p, p, parts, out);
        parts.pop_back();
    }
}

Outcome counting_oracle() {
    int checked = 0, mismatches = 0;
    for (int n = 2; n <= 6; ++n) {
        std::vector<std::vector<int>> all;
        std::vector<int> parts;
        partitions(n, n, parts, all);
        for (const auto& mult : all) {
            std::vector<int> labels;
            std::vector<double> values;
            for (std::size_t g = 0; g < mult.size(); ++g) {
                for (int k = 0; k < mult[g]; ++k) {
                    labels.push_back(static_cast<int>(g));
                    values.push_back(1.0 + static_cast<double>(g));
                }
            }
            std::sort(labels.begin(), labels.end());
            std::uint64_t brute = 0;
            do {
                ++brute;
            } while (std::next_permutation(labels.begin(), labels.end()));
            if (brute != count_diagonal_stationary(signature_of_values(values))) ++mismatches;
            ++checked;
        }
    }

    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    int rank_mismatches = 0;
    for (int i = 0; i < 50; ++i) {
        const int n = 2 + i % 4;
        // Draw from a small pool of levels so repeated eigenvalues are common.
        std::uniform_int_distribution<int> pool_size(1, n);
        std::vector<double> pool;
        const int p = pool_size(rng);
        for (int k = 0; k < p; ++k) pool.push_back(u(rng) + 0.1 * k);
        std::uniform_int_distribution<int> pick(0, p - 1);
        std::vector<double> w;
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
            w.push_back(pool[static_cast<std::size_t>(pick(rng))]);
            sum += w.back();
        }
        for (double& x : w) x /= sum;
        const DensityMatrix rho = sample_isospectral(DensityMatrix::diagonal(w), 9000 + i);
        const int rank = tangent_basis(rho.matrix(), GeneratorBasis(n)).dim();
        if (rank != flag_manifold_dim(spectrum_signature(rho.matrix()))) ++rank_mismatches;
    }
    return {mismatches == 0 && rank_mismatches == 0,
            std::to_string(checked) + " partitions (" + std::to_string(mismatches) + " mismatches), 50 spectra (" +
                std::to_string(rank_mismatches) + " rank mismatches)"};
}

Outcome linearization_oracle() {
    const std::vector<ControlModel> models{
        build_model(ideal_drift(3), all_ones_control(3), DensityMatrix::diagonal({0.25, 0.25, 0.5})),
        ideal_twoqubit(DensityMatrix::diagonal({0.35, 0.35, 0.15, 0.15}))};
    double worst = 0.0;
    int states = 0;
    for (const ControlModel& m : models) {
        for (const CMatrix& s : enumerate_diagonal_stationary(m)) {
            const BlochVector s0 = bloch_of_density(s, m.basis());
            const RMatrix d = linearization(s0, m);
            const double h = 1e-5;
            for (Eigen::Index k = 0; k < s0.size(); ++k) {
                BlochVector p = s0, q = s0;
                p(k) += h;
                q(k) -= h;
                const BlochVector col = (reduced_bloch_rhs(p, m) - reduced_bloch_rhs(q, m)) / (2 * h);
                worst = std::max(worst, (col - d.col(k)).cwiseAbs().maxCoeff());
            }
            ++states;
        }
    }
    return {states == 9 && worst <= 1e-6,
            std::to_string(states) + " stationary states, max entry error " + fmt("%.2e", worst)};
}

}  // namespace

int main() {
    report(1, "Lyapunov identity on 200 random trajectories", lyapunov_identity);
    report(2, "isospectral conservation over t=300", isospectral_conservation);
    report(3, "flatlined endpoints lie in the invariant set", invariant_set_membership);
    report(4, "qutrit Hessian signatures", qutrit_morse_structure);
    report(5, "two-qubit stationary census", twoqubit_census);
    report(6, "three-level ladder convergence and flatlining", qutrit_reproduction);
    report(7, "two-qubit tracking and exceptional target", tracking_reproduction);
    report(8, "stationary counts and orbit dimensions", counting_oracle);
    report(9, "linearization against finite differences", linearization_oracle);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
