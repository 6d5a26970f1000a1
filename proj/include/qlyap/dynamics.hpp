#pragma once

/**
 * @file dynamics.hpp
 * @brief Lyapunov feedback law, Lyapunov function and the closed-loop vector fields.
 *
 * Closed loop on pairs (rho, rho_d) of isospectral states:
 *
 *   rho'   = -i [H0 + f H1, rho]
 *   rho_d' = -i [H0, rho_d]
 *   f      = Tr([-i H1, rho] rho_d)
 *
 * which makes V = 1/2 Tr[(rho - rho_d)^2] satisfy V' = -f^2. In Bloch
 * coordinates the same system reads s' = (A0 + f A1) s, f = s_d^T A1 s.
 */

#include "qlyap/quantum_state.hpp"
#include "qlyap/su_algebra.hpp"

#include <memory>
#include <stdexcept>
#include <utility>

namespace qlyap {

/// Tolerance below which [H0, rho_d0] counts as zero.
inline constexpr double kStationaryTol = 1e-10;

/// Immutable bundle of drift, control, initial target and derived adjoint matrices.
class ControlModel {
public:
    ControlModel(Hamiltonian h0, Hamiltonian h1, DensityMatrix rho_d0,
                 std::shared_ptr<const GeneratorBasis> basis)
        : h0_(std::move(h0)), h1_(std::move(h1)), rho_d0_(std::move(rho_d0)), basis_(std::move(basis)) {
        if (!basis_) throw std::invalid_argument("ControlModel: null basis");
        const int n = basis_->dimension();
        if (h0_.dim() != n || h1_.dim() != n || rho_d0_.dim() != n) {
            throw std::invalid_argument("ControlModel: dimension mismatch between H0, H1, rho_d0 and basis");
        }
        a0_ = adjoint_matrix(h0_.matrix(), *basis_);
        a1_ = adjoint_matrix(h1_.matrix(), *basis_);
        s_d0_ = bloch_of_density(rho_d0_.matrix(), *basis_);
        target_stationary_ = max_abs_entry(commutator(h0_.matrix(), rho_d0_.matrix())) <= kStationaryTol;
        frame_ = drift_eigenframe(h0_.matrix());
    }

    int dim() const { return basis_->dimension(); }
    const Hamiltonian& h0() const { return h0_; }
    const Hamiltonian& h1() const { return h1_; }
    const DensityMatrix& rho_d0() const { return rho_d0_; }
    const GeneratorBasis& basis() const { return *basis_; }
    std::shared_ptr<const GeneratorBasis> basis_ptr() const { return basis_; }
    const RMatrix& a0() const { return a0_; }
    const RMatrix& a1() const { return a1_; }
    const BlochVector& s_d0() const { return s_d0_; }
    bool target_stationary() const { return target_stationary_; }
    const DriftFrame& drift_frame() const { return frame_; }

    /// Same Hamiltonians and basis, different initial target.
    ControlModel with_target(DensityMatrix rho_d0) const {
        return ControlModel(h0_, h1_, std::move(rho_d0), basis_);
    }

private:
    Hamiltonian h0_;
    Hamiltonian h1_;
    DensityMatrix rho_d0_;
    std::shared_ptr<const GeneratorBasis> basis_;
    RMatrix a0_;
    RMatrix a1_;
    BlochVector s_d0_;
    bool target_stationary_ = false;
    DriftFrame frame_;
};

inline ControlModel build_model(const Hamiltonian& h0, const Hamiltonian& h1, const DensityMatrix& rho_d0,
                                std::shared_ptr<const GeneratorBasis> basis = nullptr) {
    if (!basis) basis = std::make_shared<const GeneratorBasis>(h0.dim());
    return ControlModel(h0, h1, rho_d0, std::move(basis));
}

/// f = Tr([-i H1, rho] rho_d), matrix form.
inline double control_field(const CMatrix& rho, const CMatrix& rho_d, const ControlModel& model) {
    const CMatrix c = -kI * commutator(model.h1().matrix(), rho);
    return trace_product(c, rho_d).real();
}

/// f = s_d^T A1 s, Bloch form.
inline double control_field_bloch(const BlochVector& s, const BlochVector& s_d, const ControlModel& model) {
    return s_d.dot(model.a1() * s);
}

/// V = 1/2 Tr[(rho1 - rho2)^2], evaluated as half the squared Frobenius norm.
inline double lyapunov_value(const CMatrix& rho1, const CMatrix& rho2) {
    if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols()) {
        throw std::invalid_argument("lyapunov_value: dimension mismatch");
    }
    return 0.5 * (rho1 - rho2).squaredNorm();
}

struct ExtendedDerivative {
    CMatrix rho_dot;
    CMatrix target_dot;
    double control = 0.0;
};

inline ExtendedDerivative extended_rhs(const CMatrix& rho, const CMatrix& rho_d, const ControlModel& model) {
    ExtendedDerivative d;
    d.control = control_field(rho, rho_d, model);
    const CMatrix h = model.h0().matrix() + d.control * model.h1().matrix();
    d.rho_dot = -kI * commutator(h, rho);
    d.target_dot = -kI * commutator(model.h0().matrix(), rho_d);
    return d;
}

/// (A0 + f(s) A1) s with f(s) = s_d^T A1 s; requires a stationary target.
inline BlochVector reduced_bloch_rhs(const BlochVector& s, const ControlModel& model) {
    if (!model.target_stationary()) {
        throw std::logic_error("reduced_bloch_rhs: target is not stationary");
    }
    if (s.size() != model.basis().size()) throw std::invalid_argument("reduced_bloch_rhs: length mismatch");
    const BlochVector a1s = model.a1() * s;
    const double f = model.s_d0().dot(a1s);
    return model.a0() * s + f * a1s;
}

struct LaSalleReport {
    bool member = false;
    /// True when the model is not ideal; the commutator test then does not characterize the set.
    bool necessary_only = false;
    double max_offdiag = 0.0;
};

/**
 * Membership in the invariant set {(rho1, rho2) : [rho1, rho2] diagonal}.
 *
 * States are given in the lab frame and conjugated into the drift eigenframe
 * of the model before the commutator is inspected.
 */
inline LaSalleReport lasalle_membership(const CMatrix& rho1, const CMatrix& rho2, const ControlModel& model,
                                        double tol = 1e-8) {
    LaSalleReport rep;
    const DriftFrame& frame = model.drift_frame();
    CMatrix c = commutator(frame.to_frame(rho1), frame.to_frame(rho2));
    c.diagonal().setZero();
    rep.max_offdiag = max_abs_entry(c);
    rep.member = rep.max_offdiag <= tol;
    rep.necessary_only = !check_ideal(model.h0().matrix(), model.h1().matrix()).ideal();
    return rep;
}

}  // namespace qlyap
