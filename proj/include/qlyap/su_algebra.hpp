#pragma once

/**
 * @file su_algebra.hpp
 * @brief Orthonormal su(n) generator basis and the state <-> Bloch coordinate maps.
 *
 * Generators are stored in Hermitian form mu_j (Gell-Mann type), normalized so
 * that Tr(mu_j mu_k) = delta_jk. The skew-Hermitian counterparts i*mu_j are the
 * Lie-algebra elements; using the Hermitian form keeps Bloch coordinates and the
 * adjoint matrices real.
 *
 * Ordering of the n^2-1 generators:
 *   [0, P)        symmetric off-diagonal   (e_kl + e_lk)/sqrt2,       k<l lexicographic
 *   [P, 2P)       antisymmetric off-diag.  (-i e_kl + i e_lk)/sqrt2,  k<l lexicographic
 *   [2P, n^2-1)   Cartan generators r = 1..n-1
 * with P = n(n-1)/2. All level indices in this library are zero-based.
 */

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlyap {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Real coordinates s_k = Tr(mu_k rho); the trace coordinate is not stored.
using BlochVector = Eigen::VectorXd;

/// Max-entry Hermiticity tolerance for matrix inputs.
inline constexpr double kHermiticityTol = 1e-9;

inline constexpr Complex kI{0.0, 1.0};

inline double max_abs_entry(const CMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double max_abs_entry(const RMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const CMatrix& m) {
    return max_abs_entry(CMatrix(m - m.adjoint()));
}

/// Returns (m + m^dagger)/2 after checking the defect against tol.
inline CMatrix checked_hermitian(const CMatrix& m, double tol, const std::string& what) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument(what + ": matrix is not square");
    }
    const double defect = hermiticity_defect(m);
    if (defect > tol) {
        throw std::invalid_argument(what + ": not Hermitian (max |M - M^dagger| = " +
                                    std::to_string(defect) + ")");
    }
    return (m + m.adjoint()) * 0.5;
}

/// Tr(A B) without forming the product.
inline Complex trace_product(const CMatrix& a, const CMatrix& b) {
    return a.cwiseProduct(b.transpose()).sum();
}

inline CMatrix commutator(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
        throw std::invalid_argument("commutator: operands must be square with equal dimension");
    }
    return a * b - b * a;
}

enum class GeneratorKind { symmetric, antisymmetric, cartan };

/// For off-diagonal generators (k, l) with k < l; for Cartan generators k = r and l = -1.
struct GeneratorLabel {
    GeneratorKind kind;
    int k;
    int l;
};

class GeneratorBasis {
public:
    explicit GeneratorBasis(int n) : n_(n) {
        if (n < 2) {
            throw std::invalid_argument("GeneratorBasis: dimension must be at least 2");
        }
        generators_.reserve(static_cast<std::size_t>(n * n - 1));
        labels_.reserve(static_cast<std::size_t>(n * n - 1));
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

        for (int k = 0; k < n; ++k) {
            for (int l = k + 1; l < n; ++l) {
                CMatrix g = CMatrix::Zero(n, n);
                g(k, l) = inv_sqrt2;
                g(l, k) = inv_sqrt2;
                generators_.push_back(std::move(g));
                labels_.push_back({GeneratorKind::symmetric, k, l});
            }
        }
        for (int k = 0; k < n; ++k) {
            for (int l = k + 1; l < n; ++l) {
                CMatrix g = CMatrix::Zero(n, n);
                g(k, l) = -kI * inv_sqrt2;
                g(l, k) = kI * inv_sqrt2;
                generators_.push_back(std::move(g));
                labels_.push_back({GeneratorKind::antisymmetric, k, l});
            }
        }
        for (int r = 1; r < n; ++r) {
            CMatrix g = CMatrix::Zero(n, n);
            const double scale = 1.0 / std::sqrt(static_cast<double>(r * (r + 1)));
            for (int s = 0; s < r; ++s) g(s, s) = scale;
            g(r, r) = -static_cast<double>(r) * scale;
            generators_.push_back(std::move(g));
            labels_.push_back({GeneratorKind::cartan, r, -1});
        }
    }

    int dimension() const { return n_; }
    int size() const { return n_ * n_ - 1; }
    int pair_count() const { return n_ * (n_ - 1) / 2; }

    const CMatrix& operator[](int j) const { return generators_.at(static_cast<std::size_t>(j)); }
    const std::vector<CMatrix>& generators() const { return generators_; }
    const GeneratorLabel& label(int j) const { return labels_.at(static_cast<std::size_t>(j)); }

    int pair_index(int k, int l) const {
        if (k > l) std::swap(k, l);
        if (k < 0 || l >= n_ || k == l) {
            throw std::out_of_range("GeneratorBasis: invalid level pair");
        }
        return k * n_ - k * (k + 1) / 2 + (l - k - 1);
    }
    int symmetric_index(int k, int l) const { return pair_index(k, l); }
    int antisymmetric_index(int k, int l) const { return pair_count() + pair_index(k, l); }
    int cartan_index(int r) const {
        if (r < 1 || r >= n_) throw std::out_of_range("GeneratorBasis: Cartan index out of range");
        return 2 * pair_count() + r - 1;
    }
    bool is_cartan(int j) const { return j >= 2 * pair_count(); }

private:
    int n_;
    std::vector<CMatrix> generators_;
    std::vector<GeneratorLabel> labels_;
};

inline GeneratorBasis build_basis(int n) { return GeneratorBasis(n); }

/// Unnormalized skew-Hermitian generators of the standard su(n) basis.
/// These are only used to cross-check the trace and commutation identities.
namespace standard_generators {

inline CMatrix unit(int n, int k, int l) {
    CMatrix e = CMatrix::Zero(n, n);
    e(k, l) = 1.0;
    return e;
}

/// i (e_kl + e_lk)
inline CMatrix symmetric(int n, int k, int l) { return kI * (unit(n, k, l) + unit(n, l, k)); }

/// e_kl - e_lk
inline CMatrix antisymmetric(int n, int k, int l) { return unit(n, k, l) - unit(n, l, k); }

/// i (e_kk - e_{k+1,k+1})
inline CMatrix cartan(int n, int k) { return kI * (unit(n, k, k) - unit(n, k + 1, k + 1)); }

}  // namespace standard_generators

/**
 * Bloch coordinates s_k = Tr(mu_k rho) of a Hermitian matrix.
 *
 * Inputs whose Hermiticity defect exceeds kHermiticityTol are rejected; smaller
 * defects are symmetrized away. Trace is not checked here.
 */
inline BlochVector bloch_of_density(const CMatrix& rho, const GeneratorBasis& basis) {
    if (rho.rows() != basis.dimension() || rho.cols() != basis.dimension()) {
        throw std::invalid_argument("bloch_of_density: dimension mismatch");
    }
    const CMatrix h = checked_hermitian(rho, kHermiticityTol, "bloch_of_density");
    BlochVector s(basis.size());
    for (int j = 0; j < basis.size(); ++j) {
        s(j) = trace_product(basis[j], h).real();
    }
    return s;
}

/// Traceless part only: coordinates of an arbitrary Hermitian operator (no trace check).
inline BlochVector bloch_of_operator(const CMatrix& op, const GeneratorBasis& basis) {
    return bloch_of_density(op, basis);
}

/// I/n + sum_k s_k mu_k. Positivity is not enforced.
inline CMatrix density_of_bloch(const BlochVector& s, const GeneratorBasis& basis) {
    if (s.size() != basis.size()) {
        throw std::invalid_argument("density_of_bloch: Bloch vector has length " +
                                    std::to_string(s.size()) + ", expected " +
                                    std::to_string(basis.size()));
    }
    const int n = basis.dimension();
    CMatrix rho = CMatrix::Identity(n, n) / static_cast<double>(n);
    for (int j = 0; j < basis.size(); ++j) {
        rho += s(j) * basis[j];
    }
    return rho;
}

/// Traceless Hermitian operator with the given coordinates (no I/n offset).
inline CMatrix operator_of_bloch(const BlochVector& s, const GeneratorBasis& basis) {
    if (s.size() != basis.size()) {
        throw std::invalid_argument("operator_of_bloch: length mismatch");
    }
    CMatrix op = CMatrix::Zero(basis.dimension(), basis.dimension());
    for (int j = 0; j < basis.size(); ++j) op += s(j) * basis[j];
    return op;
}

/**
 * Real antisymmetric adjoint matrix A(j,k) = Tr(i H [mu_j, mu_k]).
 *
 * With this sign, rho' = -i[H, rho] becomes s' = A s in Bloch coordinates.
 */
inline RMatrix adjoint_matrix(const CMatrix& h, const GeneratorBasis& basis) {
    if (h.rows() != basis.dimension() || h.cols() != basis.dimension()) {
        throw std::invalid_argument("adjoint_matrix: dimension mismatch");
    }
    const int m = basis.size();
    RMatrix a = RMatrix::Zero(m, m);
    for (int j = 0; j < m; ++j) {
        for (int k = j + 1; k < m; ++k) {
            const CMatrix c = commutator(basis[j], basis[k]);
            const double v = (kI * trace_product(h, c)).real();
            a(j, k) = v;
            a(k, j) = -v;
        }
    }
    return a;
}

}  // namespace qlyap
