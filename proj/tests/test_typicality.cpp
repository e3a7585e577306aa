#include "mergesim/typicality.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mergesim;

namespace {

struct BinomialTypical {
    double dim = 0, mass = 0;
};

/// Typical set of a binary source by weight class.
BinomialTypical binomial_typical(double p0, std::size_t n, double delta) {
    const double h = oracle::h2(p0);
    BinomialTypical out;
    for (std::size_t j = 0; j <= n; ++j) {
        const double lp = static_cast<double>(n - j) * std::log2(p0) + static_cast<double>(j) * std::log2(1 - p0);
        if (std::abs(-lp / static_cast<double>(n) - h) <= delta + 1e-12) {
            out.dim += oracle::binomial(n, j);
            out.mass += oracle::binomial(n, j) * std::exp2(lp);
        }
    }
    return out;
}

StateVector schmidt_state(const std::vector<double> &p, std::size_t dim_b, std::mt19937_64 &rng) {
    // Σ_k sqrt(p_k)|k>^A|φ_k>^B with orthonormal φ_k from a random unitary
    const std::size_t da = p.size();
    const CMatrix g = CMatrix::Random(static_cast<Eigen::Index>(dim_b), static_cast<Eigen::Index>(dim_b));
    Eigen::HouseholderQR<CMatrix> qr(g);
    const CMatrix u = qr.householderQ();
    CVector v = CVector::Zero(static_cast<Eigen::Index>(da * dim_b));
    for (std::size_t k = 0; k < da; ++k)
        v.segment(static_cast<Eigen::Index>(k * dim_b), static_cast<Eigen::Index>(dim_b)) = std::sqrt(p[k]) * u.col(static_cast<Eigen::Index>(k));
    (void)rng;
    return {SubsystemLayout({{Label::A, da}, {Label::B, dim_b}}), v};
}

}  // namespace

TEST(TypicalSet, MatchesWeightClassCount) {
    for (double p0 : {0.9, 0.7}) {
        for (std::size_t n : {4u, 6u, 8u, 10u}) {
            for (double delta : {0.05, 0.1, 0.3}) {
                const auto ts = typical_set({p0, 1 - p0}, n, delta);
                const auto want = binomial_typical(p0, n, delta);
                EXPECT_EQ(static_cast<double>(ts.dim), want.dim);
                EXPECT_NEAR(ts.prob_mass, want.mass, 1e-12);
                EXPECT_LE(std::log2(std::max<double>(1, ts.dim)), ts.log2_dim_bound() + 1e-12);
            }
        }
    }
}

TEST(TypicalSet, UniformIsFullyTypical) {
    const auto ts = typical_set({0.5, 0.5}, 5, 0.01);
    EXPECT_EQ(ts.dim, 32u);
    EXPECT_NEAR(ts.prob_mass, 1.0, 1e-12);
}

TEST(TypicalSet, ZeroProbabilityStringsExcluded) {
    const auto ts = typical_set({1.0, 0.0}, 3, 0.5);
    ASSERT_EQ(ts.dim, 1u);
    EXPECT_EQ(ts.members[0], 0u);
}

TEST(TypicalSet, MembersSortedAndContained) {
    const auto ts = typical_set({0.6, 0.3, 0.1}, 4, 0.2);
    EXPECT_TRUE(std::is_sorted(ts.members.begin(), ts.members.end()));
    for (auto k : ts.members) EXPECT_TRUE(ts.contains(k));
}

TEST(TypicalSet, Errors) {
    EXPECT_THROW(typical_set({0.5, 0.4}, 3, 0.1), ArgumentError);
    EXPECT_THROW(typical_set({0.5, 0.5}, 0, 0.1), ArgumentError);
    EXPECT_THROW(typical_set({0.5, 0.5}, 3, 0.0), ArgumentError);
    EXPECT_THROW(typical_set({0.5, 0.5}, 30, 0.1, 1024), ResourceError);
}

TEST(Prune, OverlapIsSqrtMass) {
    std::mt19937_64 rng(3);
    for (double p0 : {0.9, 0.7}) {
        const auto psi = schmidt_state({p0, 1 - p0}, 2, rng);
        for (std::size_t n : {4u, 6u}) {
            const auto psin = tensor_power(psi, n);
            const auto ts = typical_set({p0, 1 - p0}, n, 0.15);
            if (ts.members.empty()) continue;
            const auto pr = prune(psin, ts, Label::A);
            EXPECT_NEAR(pr.probability, ts.prob_mass, 1e-10);
            EXPECT_NEAR(std::abs(psin.inner(pr.state)), std::sqrt(ts.prob_mass), 1e-10);
        }
    }
}

TEST(Prune, Errors) {
    std::mt19937_64 rng(4);
    const auto psi = tensor_power(schmidt_state({0.9, 0.1}, 2, rng), 3);
    const auto ts = typical_set({0.9, 0.1}, 4, 0.1);
    EXPECT_THROW(prune(psi, ts, Label::A), ArgumentError);
    TypicalSetDescriptor empty = typical_set({0.9, 0.1}, 3, 0.1);
    empty.members.clear();
    EXPECT_THROW(prune(psi, empty, Label::A), ArgumentError);
}

TEST(TypicalProjector, RankAndMassForDiagonalState) {
    CMatrix rho = CMatrix::Zero(2, 2);
    rho(0, 0) = 0.8;
    rho(1, 1) = 0.2;
    const auto tp = typical_projector(rho, 6, 0.2);
    const auto want = binomial_typical(0.8, 6, 0.2);
    EXPECT_EQ(static_cast<double>(tp.rank), want.dim);
    EXPECT_NEAR(tp.trapped_mass, want.mass, 1e-10);
    const CMatrix q = tp.projector();
    EXPECT_LT((q * q - q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TypicalProjector, RotatedStateSameSpectrumStats) {
    CMatrix d = CMatrix::Zero(2, 2);
    d(0, 0) = 0.8;
    d(1, 1) = 0.2;
    const CMatrix h = fourier(2);
    const CMatrix rho = h * d * h.adjoint();
    const auto tp = typical_projector(rho, 5, 0.25);
    const auto want = binomial_typical(0.8, 5, 0.25);
    EXPECT_EQ(static_cast<double>(tp.rank), want.dim);
    // Tr[ρ^{⊗n} Q] computed directly
    CMatrix rn = rho;
    for (int i = 1; i < 5; ++i) rn = kron(rn, rho);
    EXPECT_NEAR((rn * tp.projector()).trace().real(), want.mass, 1e-10);
}
