#pragma once

// Brute-force reference computations for the tests. These avoid the library
// routines they are compared against.

#include "mergesim/codes.hpp"
#include "mergesim/linalg.hpp"

#include <cmath>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using mergesim::CMatrix;
using mergesim::Complex;
using mergesim::CVector;
using mergesim::CssCode;
using mergesim::Gf2Matrix;

/// Reduced density matrix of a pure state with dims `dims`, keeping the
/// axes in `keep` (ascending), by explicit index loops.
inline CMatrix reduce(const CVector &v, const std::vector<std::size_t> &dims, const std::vector<std::size_t> &keep) {
    const std::size_t n = dims.size();
    std::size_t total = 1, kd = 1;
    for (auto d : dims) total *= d;
    for (auto k : keep) kd *= dims[k];
    CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(kd), static_cast<Eigen::Index>(kd));
    auto digits = [&](std::size_t idx) {
        std::vector<std::size_t> dg(n);
        for (std::size_t i = n; i-- > 0;) {
            dg[i] = idx % dims[i];
            idx /= dims[i];
        }
        return dg;
    };
    auto keep_index = [&](const std::vector<std::size_t> &dg) {
        std::size_t r = 0;
        for (auto k : keep) r = r * dims[k] + dg[k];
        return r;
    };
    for (std::size_t i = 0; i < total; ++i) {
        const auto di = digits(i);
        for (std::size_t j = 0; j < total; ++j) {
            const auto dj = digits(j);
            bool same = true;
            for (std::size_t a = 0; a < n && same; ++a) {
                const bool kept = std::find(keep.begin(), keep.end(), a) != keep.end();
                if (!kept && di[a] != dj[a]) same = false;
            }
            if (!same) continue;
            out(static_cast<Eigen::Index>(keep_index(di)), static_cast<Eigen::Index>(keep_index(dj))) +=
                v(static_cast<Eigen::Index>(i)) * std::conj(v(static_cast<Eigen::Index>(j)));
        }
    }
    return out;
}

/// -Σ λ log2 λ from Eigen's generic complex eigensolver.
inline double entropy(const CMatrix &rho) {
    Eigen::ComplexEigenSolver<CMatrix> es(rho);
    double s = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double l = es.eigenvalues()(i).real();
        if (l > 1e-13) s -= l * std::log2(l);
    }
    return s;
}

inline double h2(double p) {
    if (p <= 0 || p >= 1) return 0;
    return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

inline CVector random_state(std::size_t dim, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    CVector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(g(rng), g(rng));
    return v / v.norm();
}

inline double binomial(std::size_t n, std::size_t k) {
    double r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

/// GF(2) rank of the first `cols` columns of h, by enumerating the row span.
inline std::size_t leading_rank(const Gf2Matrix &h, std::size_t cols) {
    std::set<std::vector<int>> span;
    for (std::size_t mask = 0; mask < (std::size_t{1} << h.rows()); ++mask) {
        std::vector<int> v(cols, 0);
        for (std::size_t r = 0; r < h.rows(); ++r)
            if ((mask >> r) & 1)
                for (std::size_t c = 0; c < cols; ++c) v[c] ^= static_cast<int>(h.get(r, c));
        span.insert(v);
    }
    std::size_t r = 0;
    while ((std::size_t{1} << r) < span.size()) ++r;
    return r;
}

/// A top-up code can merge |Φ>^{AR} exactly only if both check matrices
/// see every original A digit.
inline bool sees_original_digits(const CssCode &code, std::size_t n) {
    return leading_rank(code.h_z, n) == n && leading_rank(code.h_x, n) == n;
}

}  // namespace oracle
