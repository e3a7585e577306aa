#include "mergesim/codes.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace mergesim;

namespace {

/// Rank by brute force: size of the row span enumerated over all
/// combinations (small matrices only).
std::size_t span_rank(const Gf2Matrix &m) {
    std::set<std::vector<std::uint8_t>> span;
    for (std::size_t mask = 0; mask < (std::size_t{1} << m.rows()); ++mask) {
        std::vector<std::uint8_t> v(m.cols(), 0);
        for (std::size_t r = 0; r < m.rows(); ++r)
            if ((mask >> r) & 1)
                for (std::size_t c = 0; c < m.cols(); ++c) v[c] ^= static_cast<std::uint8_t>(m.get(r, c));
        span.insert(v);
    }
    std::size_t r = 0;
    while ((std::size_t{1} << r) < span.size()) ++r;
    return r;
}

Gf2Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64 &rng) {
    Gf2Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m.set(r, c, rng() & 1);
    return m;
}

}  // namespace

TEST(Gf2, RankMatchesSpanEnumeration) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const auto m = random_matrix(1 + rng() % 6, 1 + rng() % 8, rng);
        EXPECT_EQ(gf2_rank(m), span_rank(m));
    }
    EXPECT_EQ(gf2_rank(Gf2Matrix::identity(70)), 70u);  // crosses a word boundary
}

TEST(Gf2, NullspaceIsKernelOfRightSize) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto m = random_matrix(1 + rng() % 5, 2 + rng() % 7, rng);
        const auto ns = gf2_nullspace(m);
        EXPECT_EQ(ns.rows(), m.cols() - gf2_rank(m));
        EXPECT_EQ(gf2_rank(ns), ns.rows());
        EXPECT_TRUE((m * ns.transpose()).is_zero());
    }
}

TEST(Gf2, SolveFindsSolutionOrReportsNone) {
    const auto m = Gf2Matrix::from_strings({"110", "011"}, 3);
    const auto x = gf2_solve(m, {1, 0});
    ASSERT_TRUE(x);
    EXPECT_EQ(m * *x, (BitVector{1, 0}));
    const auto singular = Gf2Matrix::from_strings({"11", "11"}, 2);
    EXPECT_FALSE(gf2_solve(singular, {1, 0}));
}

TEST(Gf2, StringRoundTripAndBadInput) {
    const auto m = Gf2Matrix::from_strings({"1010", "0111"}, 4);
    EXPECT_EQ(m.to_strings(), (std::vector<std::string>{"1010", "0111"}));
    EXPECT_THROW(Gf2Matrix::from_strings({"10x0"}, 4), ArgumentError);
    EXPECT_THROW(Gf2Matrix::from_strings({"101"}, 4), ArgumentError);
}

TEST(Css, SampledCodesAreValid) {
    for (std::uint64_t seed = 0; seed < 30; ++seed)
        for (std::size_t n : {2u, 4u, 6u})
            for (std::size_t mz = 0; mz <= n; ++mz)
                for (std::size_t mx = 0; mx + mz <= n; ++mx) {
                    const auto c = sample_css(n, mx, mz, seed);
                    EXPECT_NO_THROW(c.validate());
                    EXPECT_EQ(c.logical_count(), n - mx - mz);
                }
    EXPECT_THROW(sample_css(4, 3, 2, 0), ArgumentError);
}

TEST(Css, SameSeedSameCode) {
    const auto a = sample_css(6, 2, 2, 42), b = sample_css(6, 2, 2, 42);
    EXPECT_TRUE(a.h_x == b.h_x && a.h_z == b.h_z);
}

TEST(Css, ProjectorsCommuteAndPartition) {
    const auto c = sample_css(4, 1, 2, 3);
    const auto dim = 16;
    CMatrix sum_z = CMatrix::Zero(dim, dim), sum_x = CMatrix::Zero(dim, dim);
    for (std::size_t b = 0; b < 4; ++b) {
        const CMatrix pz = syndrome_projector(c, StabilizerKind::Z, b);
        EXPECT_LT((pz * pz - pz).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(pz.trace().real(), 4.0, 1e-12);  // 2^{n-m_z}
        sum_z += pz;
        for (std::size_t a = 0; a < 2; ++a) {
            const CMatrix px = syndrome_projector(c, StabilizerKind::X, a);
            EXPECT_LT((pz * px - px * pz).cwiseAbs().maxCoeff(), 1e-12);
            // joint rank 2^{n - m_x - m_z}
            EXPECT_NEAR((pz * px).trace().real(), 2.0, 1e-10);
        }
    }
    for (std::size_t a = 0; a < 2; ++a) sum_x += syndrome_projector(c, StabilizerKind::X, a);
    EXPECT_LT((sum_z - CMatrix::Identity(dim, dim)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sum_x - CMatrix::Identity(dim, dim)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(syndrome_projector(c, StabilizerKind::Z, BitVector{1}), ArgumentError);
}

TEST(Css, ZeroStabilizersGiveIdentity) {
    const auto c = sample_css(3, 0, 0, 0);
    EXPECT_LT((syndrome_projector(c, StabilizerKind::X, 0) - CMatrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hash, ManualEvaluation) {
    const auto f = hash_from_rows(3, 3, {{1, 2, 0}, {0, 1, 1}});
    EXPECT_EQ(f.apply({2, 2, 1}), (std::vector<std::size_t>{0, 0}));  // 2+4=6≡0, 2+1=3≡0
    EXPECT_EQ(f.apply({1, 0, 2}), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(f.syndrome_count(), 9u);
    EXPECT_THROW(hash_from_rows(3, 4, {{1, 1, 1}}), ArgumentError);
    EXPECT_THROW(sample_hash(3, 4, 2, 0), ArgumentError);
}

TEST(Hash, RowsAreNestedAcrossM) {
    const auto f2 = sample_hash(5, 2, 3, 9), f4 = sample_hash(5, 4, 3, 9);
    EXPECT_EQ(f2.rows[0], f4.rows[0]);
    EXPECT_EQ(f2.rows[1], f4.rows[1]);
}

TEST(Hash, ProjectorsPartitionIdentity) {
    const auto f = sample_hash(2, 1, 3, 5);
    CMatrix sum = CMatrix::Zero(9, 9);
    for (std::size_t t = 0; t < 3; ++t) sum += hash_projector(f, t);
    EXPECT_LT((sum - CMatrix::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Primes, Basics) {
    EXPECT_TRUE(is_prime(2));
    EXPECT_FALSE(is_prime(9));
    EXPECT_EQ(next_prime(8), 11u);
}

TEST(Json, CodeAndHashRoundTrip) {
    const auto c = sample_css(5, 2, 1, 4);
    const auto c2 = css_from_json(to_json(c));
    EXPECT_TRUE(c2.h_x == c.h_x && c2.h_z == c.h_z);
    const auto f = sample_hash(4, 2, 5, 4);
    EXPECT_EQ(hash_from_json(to_json(f)).rows, f.rows);
}
