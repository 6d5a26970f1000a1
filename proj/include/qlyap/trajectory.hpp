#pragma once

/**
 * @file trajectory.hpp
 * @brief Closed-loop trajectory integration, convergence classification and
 * seeded Monte Carlo batches.
 */

#include "qlyap/dynamics.hpp"
#include "qlyap/integrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace qlyap {

struct IntegratorOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double t_final = 300.0;
    int sample_count = 601;
    /// Integrate the Bloch-space system instead of the matrix system (stationary targets only).
    bool reduced_mode = false;
    /// Re-project onto the isospectral orbit every k accepted steps; 0 disables.
    int reprojection_interval = 0;
    /// Non-stationary targets: evaluate rho_d(t) by exact conjugation instead of integrating it.
    bool exact_target_rotation = false;
    long max_steps = 20'000'000;
    bool store_states = true;
};

struct TrajectoryStats {
    StepperStats stepper;
    double max_spectrum_drift = 0.0;
    double max_target_spectrum_drift = 0.0;
    double max_trace_drift = 0.0;
    double max_hermiticity_defect = 0.0;
    long reprojections = 0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<CMatrix> states;   ///< rho(t_j), empty unless store_states
    std::vector<CMatrix> targets;  ///< rho_d(t_j), empty unless store_states
    std::vector<double> controls;
    std::vector<double> lyapunov;
    /// dV/dt from the dense-output derivative of the integrated state.
    std::vector<double> lyapunov_rate;
    CMatrix final_state;
    CMatrix final_target;
    TrajectoryStats stats;
    std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::VectorXd pack(const CMatrix& m) {
    return Eigen::Map<const Eigen::VectorXd>(reinterpret_cast<const double*>(m.data()), 2 * m.size());
}

inline CMatrix unpack(const double* data, int n) {
    return Eigen::Map<const CMatrix>(reinterpret_cast<const Complex*>(data), n, n);
}

inline RVector sorted_spectrum(const CMatrix& m) {
    const CMatrix h = (m + m.adjoint()) * 0.5;
    return Eigen::SelfAdjointEigenSolver<CMatrix>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

/// Nearest matrix with the prescribed (ascending) spectrum in the eigenbasis of m.
inline CMatrix reproject_isospectral(const CMatrix& m, const RVector& spectrum) {
    const CMatrix h = (m + m.adjoint()) * 0.5;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    return es.eigenvectors() * spectrum.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

/**
 * Integrates the closed loop from rho0 up to t_final and samples it at
 * opts.sample_count uniform times (endpoints included).
 *
 * Stationary targets are held constant. Non-stationary targets are integrated
 * jointly with rho unless opts.exact_target_rotation is set.
 */
inline Trajectory integrate(const ControlModel& model, const CMatrix& rho0, double t_final,
                            const IntegratorOptions& opts) {
    const int n = model.dim();
    if (rho0.rows() != n || rho0.cols() != n) throw std::invalid_argument("integrate: dimension mismatch");
    if (!(t_final >= 0.0)) throw std::invalid_argument("integrate: t_final must be non-negative");
    if (opts.sample_count < 2) throw std::invalid_argument("integrate: sample_count must be at least 2");
    const bool stationary = model.target_stationary();
    if (opts.reduced_mode && !stationary) {
        throw std::invalid_argument("integrate: reduced mode requires a stationary target");
    }

    Trajectory traj;
    const RVector spec0 = detail::sorted_spectrum(rho0);
    const RVector spec_d = detail::sorted_spectrum(model.rho_d0().matrix());
    if ((spec0 - spec_d).cwiseAbs().maxCoeff() > 1e-8) {
        traj.warnings.push_back("initial state is not isospectral with the target");
    }

    const CMatrix& h0 = model.h0().matrix();
    const CMatrix& h1 = model.h1().matrix();
    const CMatrix rho_d0 = model.rho_d0().matrix();
    const GeneratorBasis& basis = model.basis();
    const bool joint = !stationary && !opts.exact_target_rotation;
    const bool rotate = !stationary && opts.exact_target_rotation;
    const DriftFrame& frame = model.drift_frame();

    auto rotated_target = [&](double t) -> CMatrix {
        CVector phases(n);
        for (int k = 0; k < n; ++k) phases(k) = std::exp(-kI * (frame.energies(k) * t));
        const CMatrix w = frame.unitary * phases.asDiagonal() * frame.unitary.adjoint();
        return w * rho_d0 * w.adjoint();
    };

    const Eigen::Index msize = 2 * static_cast<Eigen::Index>(n) * n;
    Eigen::VectorXd y0;
    if (opts.reduced_mode) {
        y0 = bloch_of_density(rho0, basis);
    } else if (joint) {
        y0.resize(2 * msize);
        y0.head(msize) = detail::pack(rho0);
        y0.tail(msize) = detail::pack(rho_d0);
    } else {
        y0 = detail::pack(rho0);
    }

    auto rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        if (opts.reduced_mode) {
            const BlochVector a1s = model.a1() * y;
            const double f = model.s_d0().dot(a1s);
            dy = model.a0() * y + f * a1s;
            return;
        }
        const CMatrix rho = detail::unpack(y.data(), n);
        const CMatrix rho_d = joint ? detail::unpack(y.data() + msize, n) : (rotate ? rotated_target(t) : rho_d0);
        const CMatrix c1 = h1 * rho - rho * h1;
        const double f = (-kI * trace_product(c1, rho_d)).real();
        const CMatrix rho_dot = -kI * (h0 * rho - rho * h0) - kI * f * c1;
        dy.resize(y.size());
        dy.head(msize) = detail::pack(rho_dot);
        if (joint) {
            dy.tail(msize) = detail::pack(CMatrix(-kI * (h0 * rho_d - rho_d * h0)));
        }
    };

    std::vector<double> samples(static_cast<std::size_t>(opts.sample_count));
    for (int j = 0; j < opts.sample_count; ++j) {
        samples[static_cast<std::size_t>(j)] =
            (j == opts.sample_count - 1) ? t_final : t_final * static_cast<double>(j) / (opts.sample_count - 1);
    }
    traj.times.reserve(samples.size());
    traj.controls.reserve(samples.size());
    traj.lyapunov.reserve(samples.size());
    traj.lyapunov_rate.reserve(samples.size());

    auto observe = [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& dy) {
        CMatrix rho, rho_dot, rho_d, target_dot;
        if (opts.reduced_mode) {
            rho = density_of_bloch(y, basis);
            rho_dot = operator_of_bloch(dy, basis);
            rho_d = rho_d0;
            target_dot = CMatrix::Zero(n, n);
        } else {
            rho = detail::unpack(y.data(), n);
            rho_dot = detail::unpack(dy.data(), n);
            if (joint) {
                rho_d = detail::unpack(y.data() + msize, n);
                target_dot = detail::unpack(dy.data() + msize, n);
            } else if (rotate) {
                rho_d = rotated_target(t);
                target_dot = -kI * commutator(h0, rho_d);
            } else {
                rho_d = rho_d0;
                target_dot = CMatrix::Zero(n, n);
            }
        }
        const CMatrix diff = rho - rho_d;
        traj.times.push_back(t);
        traj.lyapunov.push_back(lyapunov_value(rho, rho_d));
        traj.controls.push_back(control_field(rho, rho_d, model));
        traj.lyapunov_rate.push_back(trace_product(diff, CMatrix(rho_dot - target_dot)).real());

        auto& st = traj.stats;
        st.max_spectrum_drift =
            std::max(st.max_spectrum_drift, (detail::sorted_spectrum(rho) - spec0).cwiseAbs().maxCoeff());
        st.max_target_spectrum_drift =
            std::max(st.max_target_spectrum_drift, (detail::sorted_spectrum(rho_d) - spec_d).cwiseAbs().maxCoeff());
        st.max_trace_drift = std::max({st.max_trace_drift, std::abs(rho.trace() - 1.0), std::abs(rho_d.trace() - 1.0)});
        st.max_hermiticity_defect =
            std::max({st.max_hermiticity_defect, hermiticity_defect(rho), hermiticity_defect(rho_d)});
        if (opts.store_states) {
            traj.states.push_back(rho);
            traj.targets.push_back(rho_d);
        }
        traj.final_state = rho;
        traj.final_target = rho_d;
    };

    auto after_step = [&](double, Eigen::VectorXd& y, long step) {
        if (opts.reprojection_interval <= 0 || step % opts.reprojection_interval != 0) return false;
        ++traj.stats.reprojections;
        if (opts.reduced_mode) {
            y = bloch_of_density(detail::reproject_isospectral(density_of_bloch(y, basis), spec0), basis);
            return true;
        }
        y.head(msize) = detail::pack(detail::reproject_isospectral(detail::unpack(y.data(), n), spec0));
        if (joint) {
            y.tail(msize) = detail::pack(detail::reproject_isospectral(detail::unpack(y.data() + msize, n), spec_d));
        }
        return true;
    };

    StepperOptions so;
    so.rel_tol = opts.rel_tol;
    so.abs_tol = opts.abs_tol;
    so.max_steps = opts.max_steps;
    traj.stats.stepper = integrate_dop853(rhs, y0, 0.0, t_final, samples, so, observe, after_step);
    return traj;
}

inline Trajectory integrate(const ControlModel& model, const CMatrix& rho0, const IntegratorOptions& opts) {
    return integrate(model, rho0, opts.t_final, opts);
}

// ---------------------------------------------------------------------------
// Convergence classification
// ---------------------------------------------------------------------------

enum class ConvergenceVerdict { converged, flatlined, undecided };

inline const char* to_string(ConvergenceVerdict v) {
    switch (v) {
        case ConvergenceVerdict::converged: return "converged";
        case ConvergenceVerdict::flatlined: return "flatlined";
        case ConvergenceVerdict::undecided: return "undecided";
    }
    return "unknown";
}

struct ConvergenceCriteria {
    double tail_fraction = 0.2;
    double converged_slope = -1e-3;  ///< log10 V per unit time
    double converged_value = 1e-4;
    double flat_slope = 1e-5;
    double flat_value = 1e-3;
    /// V below this is at the integration noise floor, where the slope carries no information.
    double noise_floor = 1e-14;
};

struct ConvergenceAssessment {
    ConvergenceVerdict verdict = ConvergenceVerdict::undecided;
    double final_value = 0.0;
    double log_slope = 0.0;
};

/// Least-squares slope of log10 V over the trailing tail_fraction of the samples.
inline ConvergenceAssessment classify_convergence(const std::vector<double>& times, const std::vector<double>& values,
                                                  const ConvergenceCriteria& c = {}) {
    if (times.size() != values.size() || times.size() < 2) {
        throw std::invalid_argument("classify_convergence: need at least two matching samples");
    }
    ConvergenceAssessment a;
    a.final_value = values.back();
    const std::size_t count = times.size();
    std::size_t tail = static_cast<std::size_t>(std::ceil(c.tail_fraction * static_cast<double>(count)));
    tail = std::clamp<std::size_t>(tail, 2, count);
    const std::size_t first = count - tail;

    double mt = 0.0, my = 0.0;
    for (std::size_t j = first; j < count; ++j) {
        mt += times[j];
        my += std::log10(std::max(values[j], 1e-300));
    }
    mt /= static_cast<double>(tail);
    my /= static_cast<double>(tail);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = first; j < count; ++j) {
        const double dt = times[j] - mt;
        sxy += dt * (std::log10(std::max(values[j], 1e-300)) - my);
        sxx += dt * dt;
    }
    a.log_slope = sxx > 0.0 ? sxy / sxx : 0.0;

    if (a.final_value < c.noise_floor ||
        (a.log_slope < c.converged_slope && a.final_value < c.converged_value)) {
        a.verdict = ConvergenceVerdict::converged;
    } else if (std::abs(a.log_slope) < c.flat_slope && a.final_value > c.flat_value) {
        a.verdict = ConvergenceVerdict::flatlined;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Monte Carlo batches
// ---------------------------------------------------------------------------

/// SplitMix64 step; used to derive independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SampleOutcome {
    int sample_id = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    CMatrix initial_state;
    Trajectory trajectory;
    ConvergenceAssessment assessment;
};

/**
 * Runs n_samples trajectories from Haar-random isospectral initial states.
 *
 * Sample i uses seed mix_seed(seed, i), so results do not depend on `jobs`.
 */
inline std::vector<SampleOutcome> run_batch(const ControlModel& model, int n_samples, std::uint64_t seed,
                                            const IntegratorOptions& opts, const ConvergenceCriteria& criteria = {},
                                            int jobs = 1) {
    if (n_samples < 0) throw std::invalid_argument("run_batch: negative sample count");
    std::vector<SampleOutcome> out(static_cast<std::size_t>(n_samples));
    std::atomic<int> next{0};

    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n_samples; i = next.fetch_add(1)) {
            SampleOutcome& o = out[static_cast<std::size_t>(i)];
            o.sample_id = i;
            o.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
            try {
                o.initial_state = sample_isospectral(model.rho_d0(), o.seed).matrix();
                o.trajectory = integrate(model, o.initial_state, opts);
                o.assessment = classify_convergence(o.trajectory.times, o.trajectory.lyapunov, criteria);
                o.ok = true;
            } catch (const std::exception& e) {
                o.ok = false;
                o.error = e.what();
            }
        }
    };

    const int threads = std::clamp(jobs, 1, std::max(1, n_samples));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int j = 0; j < threads; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace qlyap
