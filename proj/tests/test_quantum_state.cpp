#include "qlyap/quantum_state.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <set>

using namespace qlyap;
using qlyap::testing::diag;
using qlyap::testing::random_density;
using qlyap::testing::random_hermitian;
using qlyap::testing::random_state_vector;

namespace {

void partitions(int n, int max_part, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (n == 0) {
        out.push_back(cur);
        return;
    }
    for (int p = std::min(n, max_part); p >= 1; --p) {
        cur.push_back(p);
        partitions(n - p, p, cur, out);
        cur.pop_back();
    }
}

/// Distinct arrangements found by applying all n! index permutations.
std::size_t brute_force_arrangements(const std::vector<int>& labels) {
    std::vector<int> idx(labels.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::set<std::vector<int>> seen;
    do {
        std::vector<int> arr;
        for (int i : idx) arr.push_back(labels[static_cast<std::size_t>(i)]);
        seen.insert(arr);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return seen.size();
}

}  // namespace

TEST(DensityMatrix, ValidatesInvariants) {
    EXPECT_NO_THROW(DensityMatrix(diag({0.25, 0.25, 0.5})));
    CMatrix bad_trace = CMatrix::Identity(2, 2);
    EXPECT_THROW(DensityMatrix{bad_trace}, std::invalid_argument);
    CMatrix negative = CMatrix::Zero(2, 2);
    negative(0, 0) = 1.1;
    negative(1, 1) = -0.1;
    EXPECT_THROW(DensityMatrix{negative}, std::invalid_argument);
    CMatrix non_herm = CMatrix::Identity(2, 2) * 0.5;
    non_herm(0, 1) = 0.1;
    EXPECT_THROW(DensityMatrix{non_herm}, std::invalid_argument);
    CMatrix h = CMatrix::Zero(2, 2);
    h(0, 1) = Complex(0, 1);
    EXPECT_THROW(Hamiltonian{h}, std::invalid_argument);
}

TEST(SpectrumSignature, ReferenceCases) {
    const auto s1 = spectrum_signature(diag({0.25, 0.25, 0.5}));
    EXPECT_EQ(s1.values.size(), 2u);
    EXPECT_NEAR(s1.values[0], 0.5, 1e-15);
    EXPECT_NEAR(s1.values[1], 0.25, 1e-15);
    EXPECT_EQ(s1.multiplicities, (std::vector<int>{1, 2}));
    EXPECT_EQ(s1.cls, SpectrumClass::pseudo_pure);

    const auto s2 = spectrum_signature(diag({0.35, 0.35, 0.15, 0.15}));
    EXPECT_EQ(s2.multiplicities, (std::vector<int>{2, 2}));
    EXPECT_EQ(s2.cls, SpectrumClass::mixed_degenerate);

    const auto s3 = spectrum_signature(CMatrix::Identity(4, 4) / 4.0);
    EXPECT_EQ(s3.values.size(), 1u);
    EXPECT_NEAR(s3.values[0], 0.25, 1e-15);
    EXPECT_EQ(s3.multiplicities, (std::vector<int>{4}));

    EXPECT_EQ(spectrum_signature(diag({0.0, 1.0, 0.0})).cls, SpectrumClass::pure);
    EXPECT_EQ(spectrum_signature(diag({0.1, 0.2, 0.7})).cls, SpectrumClass::generic);
}

TEST(SpectrumSignature, QubitIsGenericButPseudoPureShaped) {
    const auto s = spectrum_signature(diag({0.3, 0.7}));
    EXPECT_EQ(s.cls, SpectrumClass::generic);
    EXPECT_TRUE(s.has_pseudo_pure_shape());
    EXPECT_NEAR(s.singleton_value(), 0.7, 1e-15);
}

TEST(SpectrumSignature, AmbiguousGapThrows) {
    EXPECT_THROW(signature_of_values({0.5, 0.5 - 5e-8, 0.0}), AmbiguousSpectrumError);
    EXPECT_NO_THROW(signature_of_values({0.5, 0.5 - 5e-8, 0.0}, 1e-6));
    const auto s = signature_of_values({0.5, 0.5 - 5e-9, 0.0});
    EXPECT_EQ(s.multiplicities, (std::vector<int>{2, 1}));
}

TEST(SpectrumSignature, ValuesStrictlyDecreasingAndSumToDimension) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 30; ++i) {
        const int n = 2 + i % 5;
        const auto s = spectrum_signature(random_density(n, rng));
        EXPECT_EQ(s.dim(), n);
        for (std::size_t j = 1; j < s.values.size(); ++j) EXPECT_GT(s.values[j - 1], s.values[j]);
    }
}

TEST(StrongRegularity, ReferenceCases) {
    const auto r1 = is_strongly_regular(Hamiltonian::diagonal({-1.0, 0.0, 1.0}));
    EXPECT_FALSE(r1.strongly_regular);
    EXPECT_TRUE(r1.regular);
    ASSERT_TRUE(r1.coincidence.has_value());
    EXPECT_EQ(r1.coincidence->first, (LevelPair{0, 1}));
    EXPECT_EQ(r1.coincidence->second, (LevelPair{1, 2}));

    const auto r2 = is_strongly_regular(CMatrix::Identity(4, 4));
    EXPECT_FALSE(r2.regular);

    CMatrix zz = CMatrix::Zero(4, 4);
    zz.diagonal() << 0.1, -0.1, -0.1, 0.1;
    const auto r3 = is_strongly_regular(zz);
    EXPECT_FALSE(r3.strongly_regular);
    EXPECT_FALSE(r3.regular);

    EXPECT_TRUE(is_strongly_regular(Hamiltonian::diagonal({0.0, 1.0, 2.5, 4.1})).strongly_regular);
}

TEST(StrongRegularity, ImpliesRegular) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> level(0, 6);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> e;
        for (int k = 0; k < 4; ++k) e.push_back(level(rng));
        const auto r = is_strongly_regular(Hamiltonian::diagonal(e));
        if (r.strongly_regular) {
            std::vector<double> sorted = e;
            std::sort(sorted.begin(), sorted.end());
            EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
        }
    }
}

TEST(FullConnectivity, ReferenceCases) {
    CMatrix ones = CMatrix::Ones(3, 3);
    ones.diagonal().setZero();
    EXPECT_TRUE(is_fully_connected(ones).fully_connected);

    CMatrix sx(2, 2);
    sx << 0, 1, 1, 0;
    const CMatrix id = CMatrix::Identity(2, 2);
    CMatrix h1 = CMatrix::Zero(4, 4);
    h1.block(0, 2, 2, 2) = id;
    h1.block(2, 0, 2, 2) = id;
    h1.block(0, 0, 2, 2) += 0.9 * sx;
    h1.block(2, 2, 2, 2) += 0.9 * sx;
    const auto rep = is_fully_connected(h1);
    EXPECT_FALSE(rep.fully_connected);
    EXPECT_EQ(rep.zero_entries.size(), 2u);  // (1,4) and (2,3)

    const auto zero = is_fully_connected(CMatrix::Zero(3, 3));
    EXPECT_FALSE(zero.fully_connected);
    EXPECT_EQ(zero.zero_entries.size(), 3u);
}

TEST(DriftFrame, DiagonalizesAndOrdersAscending) {
    std::mt19937_64 rng(9);
    const CMatrix h = random_hermitian(4, rng);
    const DriftFrame f = drift_eigenframe(h);
    const CMatrix d = f.to_frame(h);
    CMatrix off = d;
    off.diagonal().setZero();
    EXPECT_LT(max_abs_entry(off), 1e-12);
    for (int k = 1; k < 4; ++k) EXPECT_LE(f.energies(k - 1), f.energies(k));
    EXPECT_LT(max_abs_entry(CMatrix(f.from_frame(d) - h)), 1e-12);

    const DriftFrame p = drift_eigenframe(Hamiltonian::diagonal({2.0, -1.0, 0.5}));
    EXPECT_EQ(p.energies(0), -1.0);
    EXPECT_EQ(p.energies(2), 2.0);
}

TEST(CheckIdeal, TransformsControlIntoDriftFrame) {
    // In the lab frame H1 has zeros, but the drift frame mixes levels.
    CMatrix h0(2, 2);
    h0 << 0, 1, 1, 0;
    CMatrix h1(2, 2);
    h1 << 1, 0, 0, -1;
    EXPECT_FALSE(is_fully_connected(h1).fully_connected);
    EXPECT_TRUE(check_ideal(h0, h1).control.fully_connected);
}

TEST(FlagManifold, Dimensions) {
    EXPECT_EQ(flag_manifold_dim(spectrum_signature(diag({0.25, 0.25, 0.5}))), 4);
    EXPECT_EQ(flag_manifold_dim(spectrum_signature(diag({0.35, 0.35, 0.15, 0.15}))), 8);
    for (int n = 2; n <= 6; ++n) {
        std::vector<double> w;
        for (int k = 1; k <= n; ++k) w.push_back(2.0 * k / (n * (n + 1)));
        EXPECT_EQ(flag_manifold_dim(spectrum_signature(diag(w))), n * n - n);
    }
}

TEST(StationaryCount, ReferenceCases) {
    EXPECT_EQ(count_diagonal_stationary(spectrum_signature(diag({0.35, 0.35, 0.15, 0.15}))), 6u);
    EXPECT_EQ(count_diagonal_stationary(spectrum_signature(diag({0.1, 0.3, 0.6}))), 6u);
    EXPECT_EQ(count_diagonal_stationary(spectrum_signature(diag({0.4, 0.2, 0.2, 0.2}))), 4u);
}

TEST(StationaryCount, MatchesBruteForceForAllPartitionsUpToSix) {
    for (int n = 1; n <= 6; ++n) {
        std::vector<std::vector<int>> parts;
        std::vector<int> cur;
        partitions(n, n, cur, parts);
        for (const auto& p : parts) {
            SpectrumSignature sig;
            std::vector<int> labels;
            for (std::size_t c = 0; c < p.size(); ++c) {
                sig.values.push_back(1.0 - 0.1 * static_cast<double>(c));
                sig.multiplicities.push_back(p[c]);
                labels.insert(labels.end(), static_cast<std::size_t>(p[c]), static_cast<int>(c));
            }
            EXPECT_EQ(count_diagonal_stationary(sig), brute_force_arrangements(labels)) << "n=" << n;
        }
    }
}

TEST(StationaryCount, LargeValues) {
    SpectrumSignature sig;
    sig.values.assign(20, 0.0);
    sig.multiplicities.assign(20, 1);
    EXPECT_EQ(count_diagonal_stationary(sig), 2432902008176640000ULL);
    sig.values.push_back(0.0);
    sig.multiplicities.push_back(1);
    EXPECT_THROW(count_diagonal_stationary(sig), std::overflow_error);
}

TEST(Sampling, PreservesSpectrumAndIsDeterministic) {
    const DensityMatrix rho(diag({0.1, 0.2, 0.3, 0.4}));
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 1ULL << 40}) {
        const DensityMatrix s = sample_isospectral(rho, seed);
        EXPECT_LT((s.eigenvalues() - rho.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
    }
    const CMatrix a = sample_isospectral(rho, 0).matrix();
    const CMatrix b = sample_isospectral(rho, 0).matrix();
    EXPECT_EQ(max_abs_entry(CMatrix(a - b)), 0.0);
    EXPECT_GT(max_abs_entry(CMatrix(a - sample_isospectral(rho, 1).matrix())), 1e-3);
}

TEST(Sampling, HaarBlochMeanIsZero) {
    const int n = 3;
    const int count = 10000;
    const GeneratorBasis b(n);
    const DensityMatrix rho(diag({1.0, 0.0, 0.0}));
    BlochVector mean = BlochVector::Zero(b.size());
    for (int i = 0; i < count; ++i) mean += bloch_of_density(sample_isospectral(rho, 1000 + i).matrix(), b);
    mean /= count;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 3.0 / std::sqrt(static_cast<double>(count)));
}

TEST(Exceptional, BellStateIsExceptional) {
    CVector bell = CVector::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const auto rep = is_pseudo_pure_exceptional(DensityMatrix::pure(bell).matrix());
    EXPECT_TRUE(rep.exceptional);
    ASSERT_TRUE(rep.pair.has_value());
    EXPECT_EQ(*rep.pair, (LevelPair{0, 3}));
    EXPECT_NEAR(rep.v_max, 1.0, 1e-12);
}

TEST(Exceptional, UnequalWeightsAndDiagonalAreNot) {
    CVector psi = CVector::Zero(4);
    psi(0) = 1.0;
    psi(3) = 2.0;
    EXPECT_FALSE(is_pseudo_pure_exceptional(DensityMatrix::pure(psi).matrix()).exceptional);
    const auto d = is_pseudo_pure_exceptional(diag({0.55, 0.15, 0.15, 0.15}));
    EXPECT_FALSE(d.exceptional);
    EXPECT_EQ(d.nonzero_pairs, 0);
    EXPECT_THROW(is_pseudo_pure_exceptional(diag({0.35, 0.35, 0.15, 0.15})), std::invalid_argument);
}

TEST(Exceptional, MixedPseudoPureBlock) {
    // w |psi><psi| + u (I - |psi><psi|) with psi on levels (2,3).
    const double w = 0.7, u = 0.1;
    CVector psi = CVector::Zero(4);
    psi(1) = 1.0 / std::sqrt(2.0);
    psi(2) = Complex(0.0, 1.0) / std::sqrt(2.0);
    const CMatrix p = psi * psi.adjoint();
    const CMatrix rho = w * p + u * (CMatrix::Identity(4, 4) - p);
    const auto rep = is_pseudo_pure_exceptional(rho);
    EXPECT_TRUE(rep.exceptional);
    EXPECT_EQ(*rep.pair, (LevelPair{1, 2}));
    EXPECT_NEAR(rep.phase, -M_PI / 2, 1e-12);
}

TEST(Exceptional, VerdictInvariantUnderDiagonalPhases) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> angle(-M_PI, M_PI);
    CVector bell = CVector::Zero(3);
    bell(0) = bell(2) = 1.0 / std::sqrt(2.0);
    const CVector generic = random_state_vector(3, rng);
    for (const CVector& v : {bell, generic}) {
        const CMatrix rho = DensityMatrix::pure(v).matrix();
        const bool base = is_pseudo_pure_exceptional(rho).exceptional;
        for (int i = 0; i < 20; ++i) {
            CVector phases(3);
            for (int k = 0; k < 3; ++k) phases(k) = std::exp(kI * angle(rng));
            const CMatrix u = phases.asDiagonal();
            EXPECT_EQ(is_pseudo_pure_exceptional(CMatrix(u * rho * u.adjoint())).exceptional, base);
        }
    }
}
