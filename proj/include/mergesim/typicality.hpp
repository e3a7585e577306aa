#pragma once

// Entropic typical sets of i.i.d. sources, typical-subspace projectors, and
// pruning of an n-copy state onto the typical subspace of one part.

#include "mergesim/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mergesim {

inline constexpr std::size_t kDefaultEnumerationCap = std::size_t{1} << 22;

struct TypicalSetDescriptor {
    std::vector<double> p;             ///< base distribution
    std::size_t n = 0;
    double delta = 0.0;
    double entropy = 0.0;              ///< H(p) in bits
    std::vector<std::size_t> members;  ///< base-|p| indices (big-endian digits), ascending
    double prob_mass = 0.0;            ///< N = Σ_{k∈T} p_k
    std::size_t dim = 0;               ///< D = |T|

    bool contains(std::size_t k) const { return std::binary_search(members.begin(), members.end(), k); }
    double string_probability(std::size_t k) const {
        double pr = 1.0;
        for (auto d : digits_of(k, p.size(), n)) pr *= p[d];
        return pr;
    }
    /// log2 of the upper bound 2^{n(S+δ)} on D.
    double log2_dim_bound() const { return static_cast<double>(n) * (entropy + delta); }
};

namespace detail {
inline void check_distribution(const std::vector<double> &p) {
    if (p.empty()) throw ArgumentError("empty distribution");
    double total = 0.0;
    for (double x : p) {
        if (x < 0.0) throw ArgumentError("negative probability");
        total += x;
    }
    if (std::abs(total - 1.0) > tol::kNorm) throw ArgumentError("distribution does not sum to 1");
}

/// |-(1/n) log2 prob - center| <= delta, with zero-probability strings excluded.
inline bool is_typical_log(double log2_prob, std::size_t n, double center, double delta) {
    if (!std::isfinite(log2_prob)) return false;
    return std::abs(-log2_prob / static_cast<double>(n) - center) <= delta + 1e-12;
}
}  // namespace detail

inline TypicalSetDescriptor typical_set(const std::vector<double> &p, std::size_t n, double delta,
                                        std::size_t cap = kDefaultEnumerationCap) {
    detail::check_distribution(p);
    if (n == 0) throw ArgumentError("typical_set requires n >= 1");
    if (!(delta > 0.0)) throw ArgumentError("typical_set requires delta > 0");
    const std::size_t count = ipow_capped(p.size(), n, cap, "typical_set enumeration");

    TypicalSetDescriptor ts;
    ts.p = p;
    ts.n = n;
    ts.delta = delta;
    ts.entropy = shannon_entropy(p);
    std::vector<double> logp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) logp[i] = p[i] > 0 ? std::log2(p[i]) : -INFINITY;
    for (std::size_t k = 0; k < count; ++k) {
        double lp = 0.0;
        for (auto d : digits_of(k, p.size(), n)) lp += logp[d];
        if (detail::is_typical_log(lp, n, ts.entropy, delta)) {
            ts.members.push_back(k);
            ts.prob_mass += std::exp2(lp);
        }
    }
    ts.dim = ts.members.size();
    return ts;
}

struct PruneResult {
    double probability = 0.0;  ///< N_δ^n, the chance the typical projection succeeds
    StateVector state;         ///< Ψ0' (normalized)
};

/// Projects part `a` onto span{|k> : k ∈ T}. The computational basis of `a`
/// must be the n-fold Schmidt basis indexed as in the descriptor.
inline PruneResult prune(const StateVector &psi, const TypicalSetDescriptor &ts, Label a) {
    if (ts.members.empty()) throw ArgumentError("prune: typical set is empty");
    const std::size_t da = psi.layout().dim(a);
    if (da != ipow(ts.p.size(), ts.n))
        throw ArgumentError("prune: part dimension " + std::to_string(da) + " does not match |p|^n");
    CVector mask = CVector::Zero(static_cast<Eigen::Index>(da));
    for (auto k : ts.members) mask(static_cast<Eigen::Index>(k)) = 1.0;
    auto r = project(psi, CMatrix(mask.asDiagonal()), {a});
    if (!r.state) throw NumericError("prune: typical projection has zero probability");
    return {r.probability, *r.state};
}

struct TypicalProjector {
    CMatrix basis;              ///< orthonormal columns spanning the typical subspace
    std::size_t rank = 0;
    double trapped_mass = 0.0;  ///< Tr[ρ Q]
    double atypical_mass = 0.0; ///< 1 - Tr[ρ Q]

    CMatrix projector() const { return basis * basis.adjoint(); }
};

/// Typical subspace of ⊗_i factors[i]: products of eigenvectors whose
/// eigenvalue strings satisfy |-(1/n) log2 λ - center| <= delta.
inline TypicalProjector typical_product_projector(const std::vector<CMatrix> &factors, double center, double delta,
                                                  std::size_t cap = kDefaultEnumerationCap) {
    if (factors.empty()) throw ArgumentError("typical_product_projector: no factors");
    const std::size_t n = factors.size();
    std::vector<RVector> vals;
    std::vector<CMatrix> vecs;
    std::size_t total = 1;
    for (const auto &f : factors) {
        auto es = hermitian_eig(f);
        vals.push_back(es.eigenvalues());
        vecs.push_back(es.eigenvectors());
        const auto d = static_cast<std::size_t>(f.rows());
        if (total > cap / d) throw ResourceError("typical projector dimension exceeds cap");
        total *= d;
    }
    std::vector<std::size_t> dims;
    for (const auto &f : factors) dims.push_back(static_cast<std::size_t>(f.rows()));

    std::vector<std::size_t> idx(n, 0);
    std::vector<CVector> cols;
    TypicalProjector out;
    for (std::size_t s = 0; s < total; ++s) {
        double lp = 0.0, pr = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double lam = vals[i](static_cast<Eigen::Index>(idx[i]));
            lp += lam > 1e-15 ? std::log2(lam) : -INFINITY;
            pr *= std::max(lam, 0.0);
        }
        if (detail::is_typical_log(lp, n, center, delta)) {
            CVector v = vecs[0].col(static_cast<Eigen::Index>(idx[0]));
            for (std::size_t i = 1; i < n; ++i) v = kron(v, CVector(vecs[i].col(static_cast<Eigen::Index>(idx[i]))));
            cols.push_back(std::move(v));
            out.trapped_mass += pr;
        }
        for (std::size_t i = n; i-- > 0;) {
            if (++idx[i] < dims[i]) break;
            idx[i] = 0;
        }
    }
    out.rank = cols.size();
    out.basis = CMatrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.basis.col(static_cast<Eigen::Index>(c)) = cols[c];
    out.atypical_mass = std::max(0.0, 1.0 - out.trapped_mass);
    return out;
}

/// Typical projector of ρ^{⊗n}, centered at S(ρ).
inline TypicalProjector typical_projector(const CMatrix &rho, std::size_t n, double delta,
                                          std::size_t cap = kDefaultEnumerationCap) {
    if (n == 0) throw ArgumentError("typical_projector requires n >= 1");
    return typical_product_projector(std::vector<CMatrix>(n, rho), von_neumann_entropy(rho), delta, cap);
}

inline TypicalProjector typical_projector(const DensityOperator &rho, std::size_t n, double delta,
                                          std::size_t cap = kDefaultEnumerationCap) {
    return typical_projector(rho.matrix(), n, delta, cap);
}

}  // namespace mergesim
