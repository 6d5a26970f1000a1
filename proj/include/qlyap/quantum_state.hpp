#pragma once

/**
 * @file quantum_state.hpp
 * @brief Density operators, Hamiltonians, spectrum classification, ideality checks
 * and Haar-random isospectral sampling.
 */

#include "qlyap/su_algebra.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlyap {

/// Raised when eigenvalue clustering cannot be decided at the given tolerance.
class AmbiguousSpectrumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Hamiltonian {
public:
    explicit Hamiltonian(const CMatrix& m)
        : m_(checked_hermitian(m, kHermiticityTol, "Hamiltonian")) {}

    static Hamiltonian diagonal(const std::vector<double>& energies) {
        CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(energies.size()),
                                  static_cast<Eigen::Index>(energies.size()));
        for (std::size_t k = 0; k < energies.size(); ++k) {
            m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = energies[k];
        }
        return Hamiltonian(m);
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const CMatrix& matrix() const { return m_; }
    operator const CMatrix&() const { return m_; }

private:
    CMatrix m_;
};

/// Hermitian, unit-trace, positive semidefinite matrix (all within 1e-9).
class DensityMatrix {
public:
    static constexpr double kTol = 1e-9;

    explicit DensityMatrix(const CMatrix& m)
        : m_(checked_hermitian(m, kTol, "DensityMatrix")) {
        if (m_.rows() < 1) throw std::invalid_argument("DensityMatrix: empty matrix");
        const double tr = m_.trace().real();
        if (std::abs(tr - 1.0) > kTol) {
            throw std::invalid_argument("DensityMatrix: trace " + std::to_string(tr) + " != 1");
        }
        Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kTol) {
            throw std::invalid_argument("DensityMatrix: negative eigenvalue " +
                                        std::to_string(es.eigenvalues().minCoeff()));
        }
    }

    static DensityMatrix diagonal(const std::vector<double>& weights) {
        const auto n = static_cast<Eigen::Index>(weights.size());
        CMatrix m = CMatrix::Zero(n, n);
        for (Eigen::Index k = 0; k < n; ++k) m(k, k) = weights[static_cast<std::size_t>(k)];
        return DensityMatrix(m);
    }

    /// Projector onto the normalized state vector psi.
    static DensityMatrix pure(const CVector& psi) {
        const double norm = psi.norm();
        if (norm == 0.0) throw std::invalid_argument("DensityMatrix::pure: zero vector");
        const CVector v = psi / norm;
        return DensityMatrix(v * v.adjoint());
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const CMatrix& matrix() const { return m_; }
    operator const CMatrix&() const { return m_; }

    /// Ascending eigenvalues.
    RVector eigenvalues() const {
        return Eigen::SelfAdjointEigenSolver<CMatrix>(m_, Eigen::EigenvaluesOnly).eigenvalues();
    }

private:
    CMatrix m_;
};

// ---------------------------------------------------------------------------
// Spectrum classification
// ---------------------------------------------------------------------------

enum class SpectrumClass { generic, pure, pseudo_pure, mixed_degenerate };

inline const char* to_string(SpectrumClass c) {
    switch (c) {
        case SpectrumClass::generic: return "generic";
        case SpectrumClass::pure: return "pure";
        case SpectrumClass::pseudo_pure: return "pseudo-pure";
        case SpectrumClass::mixed_degenerate: return "mixed-degenerate";
    }
    return "unknown";
}

struct SpectrumSignature {
    std::vector<double> values;       ///< distinct eigenvalues, strictly decreasing
    std::vector<int> multiplicities;  ///< same order as values
    SpectrumClass cls = SpectrumClass::generic;

    int dim() const { return std::accumulate(multiplicities.begin(), multiplicities.end(), 0); }

    /// Two distinct values with multiplicities {1, n-1}. For n = 2 every
    /// non-degenerate spectrum has this shape although it is classed generic.
    bool has_pseudo_pure_shape() const {
        if (values.size() != 2) return false;
        const int n = dim();
        return (multiplicities[0] == 1 && multiplicities[1] == n - 1) ||
               (multiplicities[0] == n - 1 && multiplicities[1] == 1);
    }

    /// Eigenvalue with multiplicity one (the weight of the pure component).
    double singleton_value() const {
        if (!has_pseudo_pure_shape()) throw std::logic_error("spectrum is not pseudo-pure");
        // n = 2: take the larger value as the pure-component weight.
        return multiplicities[0] == 1 ? values[0] : values[1];
    }
    double bulk_value() const {
        if (!has_pseudo_pure_shape()) throw std::logic_error("spectrum is not pseudo-pure");
        return multiplicities[0] == 1 ? values[1] : values[0];
    }
};

/**
 * Clusters eigenvalues (descending) with an absolute tolerance.
 *
 * Adjacent eigenvalues closer than tol join a cluster; gaps of at least 10*tol
 * separate clusters. A gap in between, or a cluster spread above tol, throws
 * AmbiguousSpectrumError.
 */
inline SpectrumSignature signature_of_values(std::vector<double> eig, double cluster_tol = 1e-8) {
    if (eig.empty()) throw std::invalid_argument("spectrum_signature: empty spectrum");
    if (!(cluster_tol > 0.0)) throw std::invalid_argument("spectrum_signature: tolerance must be > 0");
    std::sort(eig.begin(), eig.end(), std::greater<>());

    SpectrumSignature sig;
    std::vector<std::vector<double>> clusters{{eig[0]}};
    for (std::size_t j = 1; j < eig.size(); ++j) {
        const double gap = eig[j - 1] - eig[j];
        if (gap <= cluster_tol) {
            clusters.back().push_back(eig[j]);
        } else if (gap < 10.0 * cluster_tol) {
            throw AmbiguousSpectrumError("spectrum_signature: eigenvalue gap " + std::to_string(gap) +
                                         " lies inside the ambiguity band; pass an explicit tolerance");
        } else {
            clusters.push_back({eig[j]});
        }
    }
    for (const auto& c : clusters) {
        if (c.front() - c.back() > cluster_tol) {
            throw AmbiguousSpectrumError("spectrum_signature: cluster spread exceeds tolerance");
        }
        sig.values.push_back(std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size()));
        sig.multiplicities.push_back(static_cast<int>(c.size()));
    }

    const int n = static_cast<int>(eig.size());
    const bool all_single = std::all_of(sig.multiplicities.begin(), sig.multiplicities.end(),
                                        [](int m) { return m == 1; });
    if (sig.has_pseudo_pure_shape() && std::abs(sig.singleton_value() - 1.0) <= cluster_tol &&
        std::abs(sig.bulk_value()) <= cluster_tol) {
        sig.cls = SpectrumClass::pure;
    } else if (all_single && n > 1) {
        sig.cls = SpectrumClass::generic;
    } else if (sig.has_pseudo_pure_shape()) {
        sig.cls = SpectrumClass::pseudo_pure;
    } else {
        sig.cls = SpectrumClass::mixed_degenerate;
    }
    return sig;
}

inline SpectrumSignature spectrum_signature(const CMatrix& rho, double cluster_tol = 1e-8) {
    const CMatrix h = checked_hermitian(rho, kHermiticityTol, "spectrum_signature");
    const RVector ev = Eigen::SelfAdjointEigenSolver<CMatrix>(h, Eigen::EigenvaluesOnly).eigenvalues();
    return signature_of_values(std::vector<double>(ev.data(), ev.data() + ev.size()), cluster_tol);
}

/// n^2 - sum n_l^2: real dimension of the isospectral orbit.
inline int flag_manifold_dim(const SpectrumSignature& sig) {
    const int n = sig.dim();
    int sum = 0;
    for (int m : sig.multiplicities) sum += m * m;
    return n * n - sum;
}

/// Multinomial n! / prod(n_l!): number of distinct diagonal arrangements of the spectrum.
inline std::uint64_t count_diagonal_stationary(const SpectrumSignature& sig) {
    const int n = sig.dim();
    if (n > 20) throw std::overflow_error("count_diagonal_stationary: n > 20 is not supported");
    // Product of binomials C(partial, m) keeps intermediates small.
    std::uint64_t result = 1;
    int partial = 0;
    for (int m : sig.multiplicities) {
        for (int j = 1; j <= m; ++j) {
            ++partial;
            // result * partial is divisible by j; cancel the common factor first.
            const std::uint64_t g = std::gcd(result, static_cast<std::uint64_t>(j));
            result = (result / g) * (static_cast<std::uint64_t>(partial) / (static_cast<std::uint64_t>(j) / g));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Drift eigenframe and ideality
// ---------------------------------------------------------------------------

/**
 * Eigenbasis of the drift Hamiltonian, energies ascending.
 *
 * Columns of `unitary` are eigenvectors. Degenerate eigenvectors are ordered by
 * the index of their first significant component, and each column's phase is
 * fixed so that this component is real positive. A drift that is already
 * diagonal is handled by a pure permutation.
 */
struct DriftFrame {
    RVector energies;
    CMatrix unitary;

    CMatrix to_frame(const CMatrix& m) const { return unitary.adjoint() * m * unitary; }
    CMatrix from_frame(const CMatrix& m) const { return unitary * m * unitary.adjoint(); }
};

inline DriftFrame drift_eigenframe(const CMatrix& h0) {
    const int n = static_cast<int>(h0.rows());
    DriftFrame frame;
    CMatrix off = h0;
    off.diagonal().setZero();
    if (max_abs_entry(off) <= 1e-14) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return h0(a, a).real() < h0(b, b).real(); });
        frame.energies.resize(n);
        frame.unitary = CMatrix::Zero(n, n);
        for (int c = 0; c < n; ++c) {
            frame.energies(c) = h0(order[static_cast<std::size_t>(c)], order[static_cast<std::size_t>(c)]).real();
            frame.unitary(order[static_cast<std::size_t>(c)], c) = 1.0;
        }
        return frame;
    }

    Eigen::SelfAdjointEigenSolver<CMatrix> es(h0);
    CMatrix vecs = es.eigenvectors();
    RVector vals = es.eigenvalues();
    auto leading = [&](int col) {
        for (int r = 0; r < n; ++r) {
            if (std::abs(vecs(r, col)) > 1e-8) return r;
        }
        return n;
    };
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (std::abs(vals(a) - vals(b)) > 1e-10) return vals(a) < vals(b);
        return leading(a) < leading(b);
    });
    frame.energies.resize(n);
    frame.unitary.resize(n, n);
    for (int c = 0; c < n; ++c) {
        const int src = order[static_cast<std::size_t>(c)];
        CVector v = vecs.col(src);
        const int lead = leading(src);
        if (lead < n) v *= std::conj(v(lead)) / std::abs(v(lead));
        frame.unitary.col(c) = v;
        frame.energies(c) = vals(src);
    }
    return frame;
}

struct LevelPair {
    int k;
    int l;
    bool operator==(const LevelPair&) const = default;
};

struct StrongRegularityReport {
    bool strongly_regular = false;
    bool regular = false;                                   ///< all energies distinct
    std::vector<double> energies;                           ///< ascending
    std::optional<LevelPair> zero_frequency;                ///< first pair with omega_kl = 0
    std::optional<std::pair<LevelPair, LevelPair>> coincidence;  ///< first pair of equal frequencies
};

/**
 * Strong regularity of the drift: all transition frequencies omega_kl = a_k - a_l,
 * k < l, are nonzero and pairwise distinct beyond tol.
 */
inline StrongRegularityReport is_strongly_regular(const CMatrix& h0, double tol = 1e-8) {
    const CMatrix h = checked_hermitian(h0, kHermiticityTol, "is_strongly_regular");
    const RVector a = Eigen::SelfAdjointEigenSolver<CMatrix>(h, Eigen::EigenvaluesOnly).eigenvalues();
    const int n = static_cast<int>(a.size());
    StrongRegularityReport rep;
    rep.energies.assign(a.data(), a.data() + n);

    std::vector<std::pair<LevelPair, double>> freqs;
    for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
            const double w = a(k) - a(l);
            freqs.push_back({{k, l}, w});
            if (!rep.zero_frequency && std::abs(w) <= tol) rep.zero_frequency = LevelPair{k, l};
        }
    }
    for (std::size_t i = 0; i < freqs.size() && !rep.coincidence; ++i) {
        for (std::size_t j = i + 1; j < freqs.size(); ++j) {
            if (std::abs(freqs[i].second - freqs[j].second) <= tol) {
                rep.coincidence = std::make_pair(freqs[i].first, freqs[j].first);
                break;
            }
        }
    }
    rep.regular = !rep.zero_frequency.has_value();
    rep.strongly_regular = rep.regular && !rep.coincidence.has_value();
    return rep;
}

struct ConnectivityReport {
    bool fully_connected = false;
    std::vector<LevelPair> zero_entries;  ///< k < l with |b_kl| <= tol
};

/// H1 must already be expressed in the drift eigenbasis.
inline ConnectivityReport is_fully_connected(const CMatrix& h1, double tol = 1e-10) {
    ConnectivityReport rep;
    const int n = static_cast<int>(h1.rows());
    for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
            if (std::abs(h1(k, l)) <= tol) rep.zero_entries.push_back({k, l});
        }
    }
    rep.fully_connected = rep.zero_entries.empty();
    return rep;
}

struct IdealityReport {
    StrongRegularityReport drift;
    ConnectivityReport control;
    bool ideal() const { return drift.strongly_regular && control.fully_connected; }
};

/// Both ideality conditions, with H1 conjugated into the drift eigenframe first.
inline IdealityReport check_ideal(const CMatrix& h0, const CMatrix& h1, double regular_tol = 1e-8,
                                  double connect_tol = 1e-10) {
    IdealityReport rep;
    rep.drift = is_strongly_regular(h0, regular_tol);
    const DriftFrame frame = drift_eigenframe(h0);
    rep.control = is_fully_connected(frame.to_frame(h1), connect_tol);
    return rep;
}

// ---------------------------------------------------------------------------
// Haar sampling
// ---------------------------------------------------------------------------

/// Haar unitary from QR of a complex Ginibre matrix with phase-corrected R diagonal.
template <class Rng>
CMatrix haar_unitary(int n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    CMatrix z(n, n);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) {
            const double re = normal(rng);
            const double im = normal(rng);
            z(r, c) = Complex(re, im);
        }
    }
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ();
    const CMatrix& r = qr.matrixQR();
    for (int c = 0; c < n; ++c) {
        const Complex d = r(c, c);
        const double mag = std::abs(d);
        if (mag > 0.0) q.col(c) *= d / mag;
    }
    return q;
}

/// Deterministic per seed.
inline DensityMatrix sample_isospectral(const DensityMatrix& rho_d, std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32)};
    std::mt19937_64 rng(seq);
    const CMatrix u = haar_unitary(rho_d.dim(), rng);
    CMatrix out = u * rho_d.matrix() * u.adjoint();
    return DensityMatrix((out + out.adjoint()) * 0.5);
}

// ---------------------------------------------------------------------------
// Exceptional pseudo-pure targets
// ---------------------------------------------------------------------------

struct ExceptionalReport {
    bool exceptional = false;
    std::optional<LevelPair> pair;  ///< the single nonzero off-diagonal pair, if any
    double phase = 0.0;             ///< arg(r_kl) for that pair
    double w = 0.0;                 ///< weight of the pure component
    double u = 0.0;                 ///< weight on the orthogonal complement
    double v_max = 0.0;             ///< (w - u)^2
    int nonzero_pairs = 0;
};

/**
 * Detects pseudo-pure targets for which tracking can fail: exactly one nonzero
 * off-diagonal pair (k,l) with |r_kl| = (w-u)/2, r_kk = r_ll = (w+u)/2 and every
 * other diagonal entry equal to u. The input is expected in the drift eigenbasis.
 */
inline ExceptionalReport is_pseudo_pure_exceptional(const CMatrix& rho_d0, double tol = 1e-8) {
    const SpectrumSignature sig = spectrum_signature(rho_d0);
    if (!sig.has_pseudo_pure_shape()) {
        throw std::invalid_argument("is_pseudo_pure_exceptional: target spectrum is not pseudo-pure");
    }
    ExceptionalReport rep;
    rep.w = sig.singleton_value();
    rep.u = sig.bulk_value();
    rep.v_max = (rep.w - rep.u) * (rep.w - rep.u);

    const int n = static_cast<int>(rho_d0.rows());
    for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
            if (std::abs(rho_d0(k, l)) > tol) {
                ++rep.nonzero_pairs;
                if (!rep.pair) rep.pair = LevelPair{k, l};
            }
        }
    }
    if (rep.nonzero_pairs != 1) return rep;

    const auto [k, l] = *rep.pair;
    rep.phase = std::arg(rho_d0(k, l));
    const double half_sum = 0.5 * (rep.w + rep.u);
    bool ok = std::abs(std::abs(rho_d0(k, l)) - 0.5 * std::abs(rep.w - rep.u)) <= tol &&
              std::abs(rho_d0(k, k).real() - half_sum) <= tol &&
              std::abs(rho_d0(l, l).real() - half_sum) <= tol;
    for (int j = 0; j < n && ok; ++j) {
        if (j == k || j == l) continue;
        ok = std::abs(rho_d0(j, j).real() - rep.u) <= tol;
    }
    rep.exceptional = ok;
    return rep;
}

}  // namespace qlyap
