#pragma once

/**
 * @file stability.hpp
 * @brief Linearization at stationary states, tangent-space restriction to the
 * isospectral orbit, eigenvalue classification and Hessian inertia of V.
 */

#include "qlyap/dynamics.hpp"
#include "qlyap/quantum_state.hpp"
#include "qlyap/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qlyap {

/// Reduced right-hand side norm below which a Bloch point counts as stationary.
inline constexpr double kStationarityTol = 1e-8;

/**
 * D_f(s0) = A0 + A1 s0 s_d^T A1, the Jacobian of the reduced Bloch field at a
 * stationary point (where the control vanishes).
 */
inline RMatrix linearization(const BlochVector& s0, const ControlModel& model) {
    const BlochVector rhs = reduced_bloch_rhs(s0, model);
    if (rhs.norm() > kStationarityTol) {
        throw std::invalid_argument("linearization: point is not stationary (|rhs| = " +
                                    std::to_string(rhs.norm()) + ")");
    }
    const RVector row = model.a1().transpose() * model.s_d0();  // (s_d^T A1)^T
    return model.a0() + (model.a1() * s0) * row.transpose();
}

struct TangentFrame {
    /// Orthonormal tangent vectors (columns) in Bloch coordinates.
    RMatrix vectors;
    /// Column j holds generator coefficients c with bloch(-i[sum c_k mu_k, rho0]) = vectors.col(j).
    RMatrix generators;
    std::vector<double> singular_values;
    int dim() const { return static_cast<int>(vectors.cols()); }
};

/**
 * Orthonormal basis of the tangent space of the isospectral orbit through rho0:
 * the span of bloch(-i[mu_k, rho0]) over all generators, ranked by SVD.
 *
 * Singular values above 1e-9 count; any value inside (1e-10, 1e-8) makes the
 * rank ambiguous and throws AmbiguousSpectrumError.
 */
inline TangentFrame tangent_basis(const CMatrix& rho0, const GeneratorBasis& basis) {
    const int m = basis.size();
    const CMatrix rho = checked_hermitian(rho0, kHermiticityTol, "tangent_basis");
    RMatrix images(m, m);
    for (int k = 0; k < m; ++k) {
        images.col(k) = bloch_of_operator(CMatrix(-kI * commutator(basis[k], rho)), basis);
    }
    Eigen::JacobiSVD<RMatrix> svd(images, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const RVector& sv = svd.singularValues();
    TangentFrame frame;
    int rank = 0;
    for (int j = 0; j < sv.size(); ++j) {
        frame.singular_values.push_back(sv(j));
        if (sv(j) > 1e-10 && sv(j) < 1e-8) {
            throw AmbiguousSpectrumError("tangent_basis: singular value " + std::to_string(sv(j)) +
                                         " makes the tangent rank ambiguous");
        }
        if (sv(j) > 1e-9) ++rank;
    }
    frame.vectors = svd.matrixU().leftCols(rank);
    frame.generators.resize(m, rank);
    for (int j = 0; j < rank; ++j) frame.generators.col(j) = svd.matrixV().col(j) / sv(j);
    return frame;
}

enum class StationaryVerdict {
    hyperbolic_sink,
    hyperbolic_source,
    hyperbolic_saddle,
    center_with_unstable,
    center,
    degenerate
};

inline const char* to_string(StationaryVerdict v) {
    switch (v) {
        case StationaryVerdict::hyperbolic_sink: return "hyperbolic_sink";
        case StationaryVerdict::hyperbolic_source: return "hyperbolic_source";
        case StationaryVerdict::hyperbolic_saddle: return "hyperbolic_saddle";
        case StationaryVerdict::center_with_unstable: return "center_with_unstable";
        case StationaryVerdict::center: return "center";
        case StationaryVerdict::degenerate: return "degenerate";
    }
    return "unknown";
}

struct StationaryClassification {
    CMatrix state;
    double lyapunov_level = 0.0;
    int tangent_dim = 0;
    int n_stable = 0;
    int n_unstable = 0;
    int n_center = 0;
    std::vector<Complex> eigenvalues;  ///< of D_f restricted to the tangent space
    StationaryVerdict verdict = StationaryVerdict::degenerate;
    double zero_eps = 0.0;
    double projection_residual = 0.0;
    std::string diagnostic;
};

/// Max-entry norm of [H0, rho] and |f(rho, rho_d0)| must both be within tol.
inline void require_closed_loop_stationary(const CMatrix& rho0, const ControlModel& model, double tol,
                                           const char* who) {
    const double drift = max_abs_entry(commutator(model.h0().matrix(), rho0));
    const double f = std::abs(control_field(rho0, model.rho_d0().matrix(), model));
    if (drift > tol || f > tol) {
        throw std::invalid_argument(std::string(who) + ": state is not stationary for the closed loop (|[H0,rho]| = " +
                                    std::to_string(drift) + ", |f| = " + std::to_string(f) + ")");
    }
}

/**
 * Eigenvalues of the linearization restricted to the tangent space at rho0,
 * counted by sign of the real part against zero_eps. A negative zero_eps
 * selects the default 1e-7 * ||D_f||_2.
 */
inline StationaryClassification classify_stationary(const CMatrix& rho0, const ControlModel& model,
                                                    double zero_eps = -1.0) {
    if (!model.target_stationary()) throw std::invalid_argument("classify_stationary: target is not stationary");
    require_closed_loop_stationary(rho0, model, kStationarityTol, "classify_stationary");

    StationaryClassification out;
    out.state = rho0;
    out.lyapunov_level = lyapunov_value(rho0, model.rho_d0().matrix());

    const BlochVector s0 = bloch_of_density(rho0, model.basis());
    const RMatrix jac = linearization(s0, model);
    const TangentFrame tf = tangent_basis(rho0, model.basis());
    out.tangent_dim = tf.dim();
    if (out.tangent_dim == 0) {
        throw std::invalid_argument("classify_stationary: isospectral orbit of the state is a single point");
    }

    const double jac_norm = Eigen::JacobiSVD<RMatrix>(jac).singularValues()(0);
    out.zero_eps = zero_eps >= 0.0 ? zero_eps : 1e-7 * jac_norm;

    const RMatrix image = jac * tf.vectors;
    const RMatrix restricted = tf.vectors.transpose() * image;
    out.projection_residual = max_abs_entry(RMatrix(image - tf.vectors * restricted));

    Eigen::EigenSolver<RMatrix> es(restricted, false);
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
        const Complex ev = es.eigenvalues()(j);
        out.eigenvalues.push_back(ev);
        if (ev.real() < -out.zero_eps) {
            ++out.n_stable;
        } else if (ev.real() > out.zero_eps) {
            ++out.n_unstable;
        } else {
            ++out.n_center;
        }
    }
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });

    if (out.projection_residual > 1e-6) {
        out.verdict = StationaryVerdict::degenerate;
        out.diagnostic = "linearization leaves the tangent space (residual " +
                         std::to_string(out.projection_residual) + ")";
    } else if (out.n_stable == out.tangent_dim) {
        out.verdict = StationaryVerdict::hyperbolic_sink;
    } else if (out.n_unstable == out.tangent_dim) {
        out.verdict = StationaryVerdict::hyperbolic_source;
    } else if (out.n_center == 0) {
        out.verdict = StationaryVerdict::hyperbolic_saddle;
    } else if (out.n_unstable > 0) {
        out.verdict = StationaryVerdict::center_with_unstable;
    } else {
        out.verdict = StationaryVerdict::center;
    }
    return out;
}

/// Same Hamiltonians and target, conjugated into the drift eigenframe.
inline ControlModel in_drift_frame(const ControlModel& model) {
    const DriftFrame& f = model.drift_frame();
    return ControlModel(Hamiltonian(f.to_frame(model.h0().matrix())), Hamiltonian(f.to_frame(model.h1().matrix())),
                        DensityMatrix(f.to_frame(model.rho_d0().matrix())), model.basis_ptr());
}

/**
 * All distinct diagonal arrangements (in the drift eigenframe) of the target
 * spectrum, returned in the lab frame. The target must be stationary and
 * diagonal in the drift eigenframe.
 */
inline std::vector<CMatrix> enumerate_diagonal_stationary(const ControlModel& model) {
    if (!model.target_stationary()) {
        throw std::invalid_argument("enumerate_diagonal_stationary: target is not stationary");
    }
    const DriftFrame& frame = model.drift_frame();
    const CMatrix target = frame.to_frame(model.rho_d0().matrix());
    CMatrix off = target;
    off.diagonal().setZero();
    if (max_abs_entry(off) > kStationarityTol) {
        throw std::invalid_argument("enumerate_diagonal_stationary: target is not diagonal in the drift eigenframe");
    }
    const SpectrumSignature sig = spectrum_signature(target);
    const int n = model.dim();

    // Cluster labels of the diagonal, permuted in lexicographic order.
    std::vector<int> labels;
    for (std::size_t c = 0; c < sig.multiplicities.size(); ++c) {
        labels.insert(labels.end(), static_cast<std::size_t>(sig.multiplicities[c]), static_cast<int>(c));
    }
    std::vector<CMatrix> out;
    do {
        CMatrix d = CMatrix::Zero(n, n);
        for (int k = 0; k < n; ++k) d(k, k) = sig.values[static_cast<std::size_t>(labels[static_cast<std::size_t>(k)])];
        const CMatrix lab = frame.from_frame(d);
        require_closed_loop_stationary(lab, model, kStationarityTol, "enumerate_diagonal_stationary");
        out.push_back(lab);
    } while (std::next_permutation(labels.begin(), labels.end()));
    return out;
}

/// e^{-iGt} rho e^{iGt} for Hermitian G.
inline CMatrix conjugate_by_flow(const CMatrix& g, const CMatrix& rho, double t) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es((g + g.adjoint()) * 0.5);
    CVector phases(g.rows());
    for (Eigen::Index k = 0; k < g.rows(); ++k) phases(k) = std::exp(-kI * (es.eigenvalues()(k) * t));
    const CMatrix u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    return u * rho * u.adjoint();
}

struct HessianSignature {
    int n_plus = 0;
    int n_minus = 0;
    int n_zero = 0;
    std::vector<double> eigenvalues;  ///< ascending
};

/**
 * Inertia of the Hessian of V(., rho_d) on the isospectral orbit at a critical
 * point rho0, from central second differences of V along the unitary curves
 * e^{-iGt} rho0 e^{iGt} whose velocities form the orthonormal tangent frame.
 */
inline HessianSignature hessian_signature(const CMatrix& rho0, const CMatrix& rho_d, const GeneratorBasis& basis,
                                          double threshold = 1e-6, double step = 1e-4) {
    if (max_abs_entry(commutator(rho0, rho_d)) > 1e-8) {
        throw std::invalid_argument("hessian_signature: rho0 does not commute with the target");
    }
    const TangentFrame tf = tangent_basis(rho0, basis);
    const int m = tf.dim();
    std::vector<CMatrix> gens;
    gens.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) gens.push_back(operator_of_bloch(tf.generators.col(j), basis));

    for (int j = 0; j < m; ++j) {
        // Exact first derivative: Tr((rho0 - rho_d) (-i[G, rho0])).
        const double grad = trace_product(CMatrix(rho0 - rho_d), CMatrix(-kI * commutator(gens[static_cast<std::size_t>(j)], rho0))).real();
        if (std::abs(grad) > 1e-8) {
            throw std::invalid_argument("hessian_signature: rho0 is not a critical point (directional derivative " +
                                        std::to_string(grad) + ")");
        }
    }

    const double v0 = lyapunov_value(rho0, rho_d);
    auto second = [&](const CMatrix& g) {
        const double vp = lyapunov_value(conjugate_by_flow(g, rho0, step), rho_d);
        const double vm = lyapunov_value(conjugate_by_flow(g, rho0, -step), rho_d);
        return (vp - 2.0 * v0 + vm) / (step * step);
    };

    RMatrix hess(m, m);
    for (int i = 0; i < m; ++i) {
        hess(i, i) = second(gens[static_cast<std::size_t>(i)]);
        for (int j = 0; j < i; ++j) {
            const double plus = second(CMatrix(gens[static_cast<std::size_t>(i)] + gens[static_cast<std::size_t>(j)]));
            const double minus = second(CMatrix(gens[static_cast<std::size_t>(i)] - gens[static_cast<std::size_t>(j)]));
            hess(i, j) = hess(j, i) = 0.25 * (plus - minus);
        }
    }
    HessianSignature sig;
    if (m == 0) return sig;
    const RVector ev = Eigen::SelfAdjointEigenSolver<RMatrix>(hess, Eigen::EigenvaluesOnly).eigenvalues();
    for (Eigen::Index j = 0; j < ev.size(); ++j) {
        sig.eigenvalues.push_back(ev(j));
        if (ev(j) > threshold) {
            ++sig.n_plus;
        } else if (ev(j) < -threshold) {
            ++sig.n_minus;
        } else {
            ++sig.n_zero;
        }
    }
    return sig;
}

// ---------------------------------------------------------------------------
// Block structure at a diagonal target (cross-check path)
// ---------------------------------------------------------------------------

/**
 * Analytic form of D_f(s_d) on the non-Cartan coordinates for a model whose
 * drift and target are diagonal: B = B0 - u u^T, with B0 the block rotation by
 * omega_kl = a_k - a_l on each (symmetric, antisymmetric) coordinate pair and
 * u = A1 s_d, u_kl = -sqrt2 (alpha_k - alpha_l) (Im b_kl, Re b_kl).
 */
inline RMatrix non_cartan_block_operator(const ControlModel& diagonal_model) {
    const GeneratorBasis& basis = diagonal_model.basis();
    const CMatrix& h0 = diagonal_model.h0().matrix();
    const CMatrix& h1 = diagonal_model.h1().matrix();
    const CMatrix& rd = diagonal_model.rho_d0().matrix();
    CMatrix off0 = h0, offd = rd;
    off0.diagonal().setZero();
    offd.diagonal().setZero();
    if (max_abs_entry(off0) > 1e-12 || max_abs_entry(offd) > 1e-12) {
        throw std::invalid_argument("non_cartan_block_operator: drift and target must be diagonal");
    }
    const int n = basis.dimension();
    const int p = basis.pair_count();
    RMatrix b0 = RMatrix::Zero(2 * p, 2 * p);
    RVector u = RVector::Zero(2 * p);
    for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
            const int sx = basis.symmetric_index(k, l);
            const int sy = basis.antisymmetric_index(k, l);
            const double omega = h0(k, k).real() - h0(l, l).real();
            b0(sx, sy) = -omega;
            b0(sy, sx) = omega;
            const double delta = rd(k, k).real() - rd(l, l).real();
            u(sx) = -std::sqrt(2.0) * delta * h1(k, l).imag();
            u(sy) = -std::sqrt(2.0) * delta * h1(k, l).real();
        }
    }
    return b0 - u * u.transpose();
}

struct TransverseModeReport {
    int expected = 0;       ///< 2 * sum C(n_l, 2)
    int transverse = 0;     ///< eigenvectors of B orthogonal to the tangent space
    double max_transverse_overlap = 0.0;
    double min_tangent_overlap = std::numeric_limits<double>::infinity();
};

/**
 * Eigenvectors of D_f(s_d) restricted to the non-Cartan coordinates, sorted
 * into those orthogonal to the tangent space at the target (overlap <= tol) and
 * the rest. Works in the drift eigenframe; the target must be diagonal there.
 */
inline TransverseModeReport transverse_mode_check(const ControlModel& model, double tol = 1e-8) {
    const ControlModel fm = in_drift_frame(model);
    const GeneratorBasis& basis = fm.basis();
    const int p2 = 2 * basis.pair_count();
    const RMatrix jac = linearization(fm.s_d0(), fm);
    const RMatrix block = jac.topLeftCorner(p2, p2);
    const TangentFrame tf = tangent_basis(fm.rho_d0().matrix(), basis);
    const RMatrix t_block = tf.vectors.topRows(p2);

    TransverseModeReport rep;
    const SpectrumSignature sig = spectrum_signature(fm.rho_d0().matrix());
    for (int m : sig.multiplicities) rep.expected += m * (m - 1);

    Eigen::EigenSolver<RMatrix> es(block, true);
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
        CVector v = es.eigenvectors().col(j);
        v.normalize();
        const double overlap = (t_block.transpose().cast<Complex>() * v).norm();
        if (overlap <= tol) {
            ++rep.transverse;
            rep.max_transverse_overlap = std::max(rep.max_transverse_overlap, overlap);
        } else {
            rep.min_tangent_overlap = std::min(rep.min_tangent_overlap, overlap);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo probe of the invariant set
// ---------------------------------------------------------------------------

struct ProbeSample {
    int sample_id = 0;
    bool ok = false;
    std::string error;
    ConvergenceAssessment assessment;
    double commutator_offdiag = 0.0;  ///< LaSalle residual at the endpoint
    std::optional<double> relation_residual;
};

struct ProbeReport {
    std::vector<ProbeSample> samples;
    int converged = 0;
    int flatlined = 0;
    int undecided = 0;
    int failed = 0;
    double max_flatlined_commutator = 0.0;
    double max_flatlined_relation = 0.0;
};

/**
 * Integrates Haar-random isospectral initial states, classifies endpoints and,
 * for flatlined endpoints, records the LaSalle commutator residual and an
 * optional model-specific relation residual evaluated on the final state
 * (in the drift eigenframe).
 */
inline ProbeReport invariant_set_probe(const ControlModel& model, int n_samples, std::uint64_t seed,
                                       const IntegratorOptions& opts, const ConvergenceCriteria& criteria = {},
                                       const std::function<double(const CMatrix&)>& endpoint_relation = {},
                                       int jobs = 1) {
    if (!model.target_stationary()) throw std::invalid_argument("invariant_set_probe: target is not stationary");
    const auto outcomes = run_batch(model, n_samples, seed, opts, criteria, jobs);
    ProbeReport rep;
    for (const auto& o : outcomes) {
        ProbeSample s;
        s.sample_id = o.sample_id;
        s.ok = o.ok;
        s.error = o.error;
        if (!o.ok) {
            ++rep.failed;
            rep.samples.push_back(std::move(s));
            continue;
        }
        s.assessment = o.assessment;
        s.commutator_offdiag =
            lasalle_membership(o.trajectory.final_state, o.trajectory.final_target, model).max_offdiag;
        if (endpoint_relation) {
            s.relation_residual = endpoint_relation(model.drift_frame().to_frame(o.trajectory.final_state));
        }
        switch (o.assessment.verdict) {
            case ConvergenceVerdict::converged: ++rep.converged; break;
            case ConvergenceVerdict::flatlined:
                ++rep.flatlined;
                rep.max_flatlined_commutator = std::max(rep.max_flatlined_commutator, s.commutator_offdiag);
                if (s.relation_residual) rep.max_flatlined_relation = std::max(rep.max_flatlined_relation, *s.relation_residual);
                break;
            case ConvergenceVerdict::undecided: ++rep.undecided; break;
        }
        rep.samples.push_back(std::move(s));
    }
    return rep;
}

/**
 * Residual of the invariant-set relations for the three-level ladder model
 * (H0 = diag(-w, 0, w), H1 all-ones off-diagonal) with target diag(0, 1, 0):
 * b11 = b33, b12 = b23, |b13| = b11, |b12|^2 = b11 - 2 b11^2.
 *
 * The target is pure, so endpoints are pure and |b12|^2 = b11 b22 with
 * b22 = 1 - 2 b11; the last relation is quadratic in |b12|.
 */
inline double ladder_qutrit_relation_residual(const CMatrix& rho) {
    if (rho.rows() != 3 || rho.cols() != 3) throw std::invalid_argument("ladder_qutrit_relation_residual: need 3x3");
    const double b11 = rho(0, 0).real();
    return std::max({std::abs(b11 - rho(2, 2).real()), std::abs(rho(0, 1) - rho(1, 2)),
                     std::abs(std::abs(rho(0, 2)) - b11), std::abs(std::norm(rho(0, 1)) - (b11 - 2.0 * b11 * b11))});
}

}  // namespace qlyap
