#pragma once

// State-merging simulation.
//
// The n-copy input is held as a "source": Σ_i a_i |i>^A |φ_i>^{BR} over L
// binary digits of A, with |φ_i> stored as a (dim B x dim R) matrix. Plain
// mode uses the n-fold Schmidt basis (L = n); pruned mode re-indexes the
// typical strings into L = ⌈log2 D⌉ digits; top-up appends ebit digits.
//
// For each syndrome branch (α, β) of a random CSS code on the L digits:
//   1. Alice's projection Π = Π~_α Π_β, A kept in an orthonormal basis of
//      range(Π);
//   2. Bob's isometry |b> -> Σ_ℓ sqrt(Γ_{β,ℓ})|b>|ℓ>^C (+ abstain);
//   3. Bob's isometry on CB writing x into D via sqrt(Λ_{α,x}) (+ abstain);
//   4. the inverse controlled phase from D to C;
//   5. overlap with the target (Π ⊗ 1)|Φ~>^{AD} ⊗ |Ψ0>^{CBR}.
// Γ and Λ are square-root measurements (see hsw.hpp) over Bob's states
// p_i φ_i^B and over ϑ_x^{CB} = Z^x Ψ0^{CB} Z^x respectively.

#include "mergesim/codes.hpp"
#include "mergesim/hsw.hpp"
#include "mergesim/qstate.hpp"
#include "mergesim/typicality.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mergesim {

enum class MergeMode { Plain, Pruned };
enum class TopUpPolicy { Auto, Off };

inline std::string to_string(MergeMode m) { return m == MergeMode::Plain ? "plain" : "pruned"; }

/// Raised when S(A|B) > 0 and entanglement top-up is disabled.
struct EntanglementRequired : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Syndrome counts are ⌈·⌉ of entropy expressions; the tiny offset keeps
/// exact integers (e.g. n·1.0) from rounding up through float noise.
inline std::size_t ceil_count(double v) {
    const double c = std::ceil(v - 1e-9);
    return c <= 0 ? 0 : static_cast<std::size_t>(c);
}

// ---------------------------------------------------------------------------
// Single-copy entropies

struct CopyEntropies {
    std::vector<double> p;        ///< Schmidt probabilities of A
    double s_a = 0, s_b = 0, s_r = 0, s_ab = 0;
    double s_a_given_b = 0;       ///< S(A|B)
    double i_a_r = 0;             ///< I(A:R)
    double s_z_given_b = 0;       ///< S(Z^A|B) from the Z-dephased AB state
    double s_x_given_cb = 0;      ///< S(X^A|CB) from the X-dephased copy state
    double phase_information = 0; ///< S(ψ^R) - Σ_k p_k S(φ_k^R)
    double log2_dim_a = 1;
};

/// Reorders the parts of a state to (A, B, R); all three must be present.
inline StateVector canonical_abr(const StateVector &s) {
    const auto &l = s.layout();
    if (!l.has(Label::A) || !l.has(Label::B) || !l.has(Label::R) || l.size() != 3)
        throw ArgumentError("merge input must have exactly the parts A, B, R");
    const std::vector<std::size_t> perm{l.position(Label::A), l.position(Label::B), l.position(Label::R)};
    SubsystemLayout out({{Label::A, l.dim(Label::A)}, {Label::B, l.dim(Label::B)}, {Label::R, l.dim(Label::R)}});
    return {out, permute_axes(s.amplitudes(), l.dims(), perm)};
}

namespace detail {

/// Zeroes the off-diagonal blocks of `target` in the basis given by the
/// columns of `basis` (a complete dephasing measurement on that part).
inline CMatrix dephase(const DensityOperator &rho, Label target, const CMatrix &basis) {
    const auto &l = rho.layout();
    const auto d = static_cast<Eigen::Index>(l.dim(target));
    CMatrix out = CMatrix::Zero(rho.matrix().rows(), rho.matrix().cols());
    for (Eigen::Index k = 0; k < d; ++k) {
        const CMatrix proj = basis.col(k) * basis.col(k).adjoint();
        std::size_t inner = 1, outer = 1;
        const auto dims = l.dims();
        const std::size_t pos = l.position(target);
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i < pos) outer *= dims[i];
            if (i > pos) inner *= dims[i];
        }
        const CMatrix pk = kron(kron(CMatrix::Identity(static_cast<Eigen::Index>(outer), static_cast<Eigen::Index>(outer)), proj),
                                CMatrix::Identity(static_cast<Eigen::Index>(inner), static_cast<Eigen::Index>(inner)));
        out += pk * rho.matrix() * pk;
    }
    return out;
}

}  // namespace detail

inline CopyEntropies analyze_copy(const StateVector &input) {
    const StateVector s = canonical_abr(input);
    CopyEntropies e;
    const auto sf = schmidt_form(s, Label::A);
    e.p = sf.probabilities;
    e.log2_dim_a = std::log2(static_cast<double>(s.layout().dim(Label::A)));
    e.s_a = von_neumann_entropy(reduced_state(s, {Label::A}));
    e.s_b = von_neumann_entropy(reduced_state(s, {Label::B}));
    e.s_r = von_neumann_entropy(reduced_state(s, {Label::R}));
    e.s_ab = von_neumann_entropy(reduced_state(s, {Label::A, Label::B}));
    e.s_a_given_b = e.s_ab - e.s_b;
    e.i_a_r = e.s_a + e.s_r - von_neumann_entropy(reduced_state(s, {Label::A, Label::R}));

    // S(Z^A|B): dephase A in its Schmidt basis.
    const auto rho_ab = reduced_state(s, {Label::A, Label::B});
    e.s_z_given_b = von_neumann_entropy(detail::dephase(rho_ab, Label::A, sf.basis)) - e.s_b;

    // S(X^A|CB) on Σ_k sqrt(p_k)|k>^A|k>^C|φ_k>^{BR}, X-dephased in the
    // Fourier basis of the Schmidt basis.
    const std::size_t da = s.layout().dim(Label::A);
    const SubsystemLayout &rest = sf.rest_layout;  // (B, R)
    SubsystemLayout acbr({{Label::A, da}, {Label::C, da}, {Label::B, rest.dim(Label::B)}, {Label::R, rest.dim(Label::R)}});
    CVector v = CVector::Zero(static_cast<Eigen::Index>(acbr.total_dim()));
    for (std::size_t k = 0; k < da; ++k) {
        if (e.p[k] <= 0) continue;
        CVector kk = CVector::Zero(static_cast<Eigen::Index>(da * da));
        kk(static_cast<Eigen::Index>(k * da + k)) = 1.0;
        v += std::sqrt(e.p[k]) * kron(kk, CVector(sf.costates.col(static_cast<Eigen::Index>(k))));
    }
    const StateVector copy(acbr, v);
    const auto rho_acb = reduced_state(copy, {Label::A, Label::C, Label::B});
    const double s_cb = von_neumann_entropy(reduced_state(copy, {Label::C, Label::B}));
    e.s_x_given_cb = von_neumann_entropy(detail::dephase(rho_acb, Label::A, fourier(da))) - s_cb;

    // S(ψ^R) - Σ p_k S(φ_k^R)
    double avg = 0.0;
    for (std::size_t k = 0; k < da; ++k) {
        if (e.p[k] <= 0) continue;
        const StateVector phi(rest, sf.costates.col(static_cast<Eigen::Index>(k)));
        avg += e.p[k] * von_neumann_entropy(reduced_state(phi, {Label::R}));
    }
    e.phase_information = e.s_r - avg;
    return e;
}

// ---------------------------------------------------------------------------
// Rate identities and classical cost

struct RateAudit {
    CopyEntropies entropies;
    double m_z_rate = 0;       ///< S(Z^A|B)
    double m_x_pruned_rate = 0;///< S(ψ^R) - Σ p_k S(φ_k^R)
    double gap_communication = 0;  ///< |m_z + m_x' - I(A:R)|
    double gap_entanglement = 0;   ///< |S(A) - m_z - m_x' + S(A|B)|
    double gap_plain = 0;          ///< |log2 d_A - S(Z|B) - S(X|CB) + S(A|B)|
    double max_gap() const { return std::max({gap_communication, gap_entanglement, gap_plain}); }
};

inline RateAudit rate_audit(const StateVector &state) {
    RateAudit a;
    a.entropies = analyze_copy(state);
    const auto &e = a.entropies;
    a.m_z_rate = e.s_z_given_b;
    a.m_x_pruned_rate = e.phase_information;
    a.gap_communication = std::abs(a.m_z_rate + a.m_x_pruned_rate - e.i_a_r);
    a.gap_entanglement = std::abs(e.s_a - a.m_z_rate - a.m_x_pruned_rate + e.s_a_given_b);
    a.gap_plain = std::abs(e.log2_dim_a - e.s_z_given_b - e.s_x_given_cb + e.s_a_given_b);
    return a;
}

struct CostComparison {
    std::size_t k_plain = 0;   ///< ⌈n(S(Z|B)+δ)⌉ + ⌈n(S(X|CB)+δ)⌉
    std::size_t k_pruned = 0;  ///< ⌈n(S(Z|B)+δ)⌉ + ⌈n(S(R)-Σp S(φ^R)+δ)⌉
    double n_mutual_information = 0;
    double n_one_minus_conditional = 0;  ///< n(1 - S(A|B))
    bool pruned_not_worse = false;
};

inline CostComparison classical_cost_compare(const StateVector &state, std::size_t n, double delta) {
    if (n == 0) throw ArgumentError("classical_cost_compare: n must be >= 1");
    if (canonical_abr(state).layout().dim(Label::A) != 2) throw ArgumentError("classical_cost_compare: qubit A required");
    const auto e = analyze_copy(state);
    const double nn = static_cast<double>(n);
    CostComparison c;
    const std::size_t mz = ceil_count(nn * (e.s_z_given_b + delta));
    c.k_plain = mz + ceil_count(nn * (e.s_x_given_cb + delta));
    c.k_pruned = mz + ceil_count(nn * (e.phase_information + delta));
    c.n_mutual_information = nn * e.i_a_r;
    c.n_one_minus_conditional = nn * (1.0 - e.s_a_given_b);
    c.pruned_not_worse = c.k_pruned <= c.k_plain;
    return c;
}

// ---------------------------------------------------------------------------
// Entanglement top-up

struct TopUpResult {
    std::size_t ebits = 0;
    double conditional_entropy_per_copy = 0;  ///< S(A|B) of one copy
    double conditional_entropy_total = 0;     ///< n S(A|B) - ebits
    std::string diagnostic;
    std::optional<StateVector> state;         ///< ψ^{⊗n} ⊗ Φ^{⊗t}, parts A,B,R,A',B'
};

/// Appends ⌈n(S(A|B)+2δ)⌉ ebits when S(A|B) > 0; otherwise a no-op with a
/// diagnostic. The augmented state is materialized only within max_dim.
inline TopUpResult top_up(const StateVector &state, std::size_t n, double delta,
                          std::size_t max_dim = std::size_t{1} << 20) {
    const StateVector s = canonical_abr(state);
    TopUpResult r;
    r.conditional_entropy_per_copy = conditional_entropy(s, {Label::A}, {Label::B});
    const double nn = static_cast<double>(n);
    if (r.conditional_entropy_per_copy <= 1e-9) {
        r.diagnostic = "S(A|B) <= 0: no entanglement needed";
        r.conditional_entropy_total = nn * r.conditional_entropy_per_copy;
        return r;
    }
    r.ebits = ceil_count(nn * (r.conditional_entropy_per_copy + 2.0 * delta));
    r.conditional_entropy_total = nn * r.conditional_entropy_per_copy - static_cast<double>(r.ebits);
    r.diagnostic = "appended " + std::to_string(r.ebits) + " ebits";
    const std::size_t copies_dim = ipow(s.layout().total_dim(), n);
    const std::size_t ebit_dim = ipow(4, r.ebits);
    if (copies_dim <= max_dim && ebit_dim <= max_dim / copies_dim) {
        const std::size_t d = ipow(2, r.ebits);
        CVector phi = CVector::Zero(static_cast<Eigen::Index>(d * d));
        for (std::size_t j = 0; j < d; ++j) phi(static_cast<Eigen::Index>(j * d + j)) = 1.0 / std::sqrt(static_cast<double>(d));
        r.state = tensor(tensor_power(s, n, max_dim), StateVector(SubsystemLayout({{Label::Ap, d}, {Label::Bp, d}}), phi));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Source representation

struct MergeSource {
    std::size_t digits = 0;      ///< L binary digits of A
    std::vector<Complex> amp;    ///< a_i, size 2^L
    std::vector<CMatrix> phi;    ///< |φ_i> as (dim B x dim R); meaningful where a_i != 0
    std::size_t dim_b = 1, dim_r = 1;

    std::size_t size() const { return amp.size(); }
    double norm2() const {
        double t = 0;
        for (auto a : amp) t += std::norm(a);
        return t;
    }
};

/// Per-copy Schmidt data as matrices Φ_k (dim B x dim R).
inline std::vector<CMatrix> costate_matrices(const SchmidtForm &sf) {
    const auto db = static_cast<Eigen::Index>(sf.rest_layout.dim(Label::B));
    const auto dr = static_cast<Eigen::Index>(sf.rest_layout.dim(Label::R));
    std::vector<CMatrix> out;
    for (Eigen::Index k = 0; k < sf.costates.cols(); ++k) {
        CMatrix m(db, dr);
        for (Eigen::Index b = 0; b < db; ++b)
            for (Eigen::Index r = 0; r < dr; ++r) m(b, r) = sf.costates(b * dr + r, k);
        out.push_back(std::move(m));
    }
    return out;
}

inline CMatrix string_costate(const std::vector<CMatrix> &per_copy, const std::vector<std::size_t> &k) {
    CMatrix m = per_copy[k[0]];
    for (std::size_t i = 1; i < k.size(); ++i) m = kron(m, per_copy[k[i]]);
    return m;
}

inline MergeSource plain_source(const StateVector &state, std::size_t n, std::size_t max_dim) {
    const StateVector s = canonical_abr(state);
    if (s.layout().dim(Label::A) != 2) throw ArgumentError("merge requires a qubit A system");
    const auto sf = schmidt_form(s, Label::A);
    const auto per_copy = costate_matrices(sf);
    MergeSource src;
    src.digits = n;
    src.dim_b = ipow_capped(s.layout().dim(Label::B), n, max_dim, "merge B^n");
    src.dim_r = ipow_capped(s.layout().dim(Label::R), n, max_dim, "merge R^n");
    const std::size_t count = ipow(2, n);
    src.amp.resize(count);
    src.phi.assign(count, CMatrix::Zero(static_cast<Eigen::Index>(src.dim_b), static_cast<Eigen::Index>(src.dim_r)));
    for (std::size_t i = 0; i < count; ++i) {
        const auto k = digits_of(i, 2, n);
        double pr = 1.0;
        for (auto d : k) pr *= sf.probabilities[d];
        src.amp[i] = std::sqrt(pr);
        if (pr > 0) src.phi[i] = string_costate(per_copy, k);
    }
    return src;
}

struct PrunedSource {
    MergeSource source;
    TypicalSetDescriptor typical;
};

inline PrunedSource pruned_source(const StateVector &state, std::size_t n, double delta, std::size_t max_dim) {
    const StateVector s = canonical_abr(state);
    if (s.layout().dim(Label::A) != 2) throw ArgumentError("merge requires a qubit A system");
    const auto sf = schmidt_form(s, Label::A);
    const auto per_copy = costate_matrices(sf);
    PrunedSource out;
    out.typical = typical_set(sf.probabilities, n, delta);
    if (out.typical.members.empty()) throw ArgumentError("pruned merge: typical set is empty");
    std::size_t digits = 1;
    while (ipow(2, digits) < out.typical.dim) ++digits;
    auto &src = out.source;
    src.digits = digits;
    src.dim_b = ipow_capped(s.layout().dim(Label::B), n, max_dim, "merge B^n");
    src.dim_r = ipow_capped(s.layout().dim(Label::R), n, max_dim, "merge R^n");
    src.amp.assign(ipow(2, digits), 0.0);
    src.phi.assign(ipow(2, digits), CMatrix::Zero(static_cast<Eigen::Index>(src.dim_b), static_cast<Eigen::Index>(src.dim_r)));
    for (std::size_t i = 0; i < out.typical.members.size(); ++i) {
        const auto k = out.typical.members[i];
        src.amp[i] = std::sqrt(out.typical.string_probability(k) / out.typical.prob_mass);
        src.phi[i] = string_costate(per_copy, digits_of(k, 2, n));
    }
    return out;
}

/// Appends t maximally entangled digits: A gains t digits, B gains a copy.
inline MergeSource append_ebits(const MergeSource &src, std::size_t t) {
    if (t == 0) return src;
    MergeSource out;
    const std::size_t d = ipow(2, t);
    out.digits = src.digits + t;
    out.dim_b = src.dim_b * d;
    out.dim_r = src.dim_r;
    out.amp.assign(src.size() * d, 0.0);
    out.phi.assign(src.size() * d, CMatrix::Zero(static_cast<Eigen::Index>(out.dim_b), static_cast<Eigen::Index>(out.dim_r)));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src.amp[i] == Complex(0)) continue;
        for (std::size_t j = 0; j < d; ++j) {
            CMatrix ej = CMatrix::Zero(static_cast<Eigen::Index>(d), 1);
            ej(static_cast<Eigen::Index>(j), 0) = 1.0;
            out.amp[i * d + j] = src.amp[i] * scale;
            out.phi[i * d + j] = kron(src.phi[i], ej);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config and report

struct MergeConfig {
    StateVector state;  ///< one copy of ψ^{ABR}
    std::size_t n = 1;
    double delta = 0.1;
    MergeMode mode = MergeMode::Plain;
    std::optional<std::size_t> m_z;  ///< nullopt: entropy-derived
    std::optional<std::size_t> m_x;  ///< nullopt: entropy-derived
    TopUpPolicy top_up = TopUpPolicy::Auto;
    std::uint64_t seed = 1;
    bool exhaustive_branches = true;
    std::size_t max_exhaustive_branches = 4096;
    std::size_t mc_branch_samples = 256;
    std::size_t max_dim = std::size_t{1} << 20;
};

struct BranchRecord {
    std::size_t alpha = 0, beta = 0;
    double probability = 0;
    double distance = 0;        ///< ½||output - target||₁ of the normalized branch
    double gamma_success = 0;   ///< Σ_{i∈β} p_i Tr[Γ_i φ_i^B] / Σ_{i∈β} p_i
    double lambda_success = 0;  ///< mean over x∈α of Tr[Λ_x ϑ_x]
};

struct ProtocolReport {
    MergeMode mode = MergeMode::Plain;
    std::size_t n = 0;
    double delta = 0;
    std::uint64_t seed = 0;
    CopyEntropies entropies;

    std::size_t digits = 0;  ///< L
    std::size_t m_z = 0, m_x = 0, logical = 0;
    bool counts_clamped = false;
    CssCode code;

    double k_bits = 0;  ///< K_n
    double e_prod = 0, e_cons = 0;
    double rate_k = 0, rate_e = 0;  ///< K_n/n, (E_cons - E_prod)/n
    double target_rate_k = 0, target_rate_e = 0;  ///< I(A:R), S(A|B)

    double prune_probability = 1.0;
    std::size_t typical_dim = 0;

    double distance = 0;          ///< branch-weighted mean distance to the target
    double distance_worst = 0;    ///< worst branch with probability > 1e-12
    double distance_overall = 0;  ///< includes pruning abort and pruning distortion
    double merge_fidelity = 1;    ///< branch-weighted mean fidelity
    double branch_probability_total = 0;
    bool exhaustive = true;
    std::size_t branches_evaluated = 0;
    double r_marginal_deviation = std::numeric_limits<double>::quiet_NaN();

    std::vector<BranchRecord> branches;
    std::vector<std::string> diagnostics;
};

namespace detail {

inline double parity_sign(std::size_t a, std::size_t b) { return (std::popcount(a & b) & 1) ? -1.0 : 1.0; }

/// Multiplies C-blocks (rows c*dim_b .. ) of m by (-1)^{c·x}; the abstain
/// block (c = 2^L) is left untouched.
inline void apply_c_phase(CMatrix &m, std::size_t x, std::size_t cdim, std::size_t dim_b) {
    for (std::size_t c = 0; c < cdim; ++c)
        if (parity_sign(c, x) < 0)
            m.middleRows(static_cast<Eigen::Index>(c * dim_b), static_cast<Eigen::Index>(dim_b)) *= -1.0;
}

/// In-place Walsh-Hadamard transform over a vector of equal-shape matrices.
inline void walsh_hadamard(std::vector<CMatrix> &v) {
    for (std::size_t h = 1; h < v.size(); h <<= 1)
        for (std::size_t i = 0; i < v.size(); i += 2 * h)
            for (std::size_t j = i; j < i + h; ++j) {
                CMatrix a = v[j] + v[j + h];
                v[j + h] = v[j] - v[j + h];
                v[j] = std::move(a);
            }
}

}  // namespace detail

/// Square-root measurement for the signals Z^x Θ0, x in one coset of
/// ker h_x. The Gram matrix is a convolution over the kernel, so it is
/// diagonalized by a Walsh-Hadamard transform, and every element is
/// Λ_x = Z^x V0 V0† Z^x for one shared V0. All cosets share V0.
class CovariantRoot {
public:
    CovariantRoot() = default;

    CovariantRoot(const CMatrix &theta0, const Gf2Matrix &h_x, std::size_t cdim, std::size_t dim_b)
        : cdim_(cdim), dim_b_(dim_b) {
        const auto basis = gf2_nullspace(h_x);
        std::vector<std::size_t> gens;
        for (std::size_t r = 0; r < basis.rows(); ++r) gens.push_back(index_of_bits(basis.row(r)));
        const std::size_t nk = std::size_t{1} << gens.size();
        std::vector<std::size_t> y(nk, 0);
        for (std::size_t t = 1; t < nk; ++t) y[t] = y[t & (t - 1)] ^ gens[static_cast<std::size_t>(std::countr_zero(t))];

        std::vector<CMatrix> g(nk);
        for (std::size_t t = 0; t < nk; ++t) {
            CMatrix w = theta0;
            detail::apply_c_phase(w, y[t], cdim_, dim_b_);
            g[t] = theta0.adjoint() * w;
        }
        detail::walsh_hadamard(g);

        std::vector<Eigen::SelfAdjointEigenSolver<CMatrix>> eig;
        double top = 1e-300;
        for (const auto &m : g) {
            eig.push_back(hermitian_eig(m));
            top = std::max(top, eig.back().eigenvalues().cwiseAbs().maxCoeff());
        }
        const Eigen::Index dr = theta0.cols();
        std::vector<CMatrix> roots(nk);
        CMatrix pbar = CMatrix::Zero(dr, dr);
        for (std::size_t s = 0; s < nk; ++s) {
            const auto &es = eig[s];
            RVector inv = RVector::Zero(dr), keep = RVector::Zero(dr);
            for (Eigen::Index i = 0; i < dr; ++i)
                if (es.eigenvalues()(i) > 1e-11 * top) {
                    inv(i) = 1.0 / std::sqrt(es.eigenvalues()(i));
                    keep(i) = 1.0;
                }
            roots[s] = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().adjoint();
            pbar += es.eigenvectors() * keep.asDiagonal() * es.eigenvectors().adjoint();
        }
        detail::walsh_hadamard(roots);
        v0_ = CMatrix::Zero(theta0.rows(), dr);
        for (std::size_t t = 0; t < nk; ++t) {
            CMatrix w = theta0;
            detail::apply_c_phase(w, y[t], cdim_, dim_b_);
            v0_ += w * (roots[t] / static_cast<double>(nk));
        }
        core_ = psd_pinv_sqrt(pbar / static_cast<double>(nk));
    }

    /// sqrt(Λ_x) M
    CMatrix apply_sqrt(std::size_t x, const CMatrix &m) const {
        CMatrix w = m;
        detail::apply_c_phase(w, x, cdim_, dim_b_);
        CMatrix out = v0_ * (core_ * (v0_.adjoint() * w));
        detail::apply_c_phase(out, x, cdim_, dim_b_);
        return out;
    }

    /// sqrt(1 - Σ_{x in coset} Λ_x) M
    CMatrix apply_abstain(const std::vector<std::size_t> &coset, const CMatrix &m) const {
        CMatrix out = m;
        for (auto x : coset) {
            CMatrix w = m;
            detail::apply_c_phase(w, x, cdim_, dim_b_);
            CMatrix p = v0_ * (v0_.adjoint() * w);
            detail::apply_c_phase(p, x, cdim_, dim_b_);
            out -= p;
        }
        return out;
    }

    /// V0† Z^x M for every x in [0, cdim), by one Walsh-Hadamard transform
    /// over the C blocks.
    std::vector<CMatrix> coefficients(const CMatrix &m) const {
        const auto db = static_cast<Eigen::Index>(dim_b_);
        std::vector<CMatrix> a(cdim_);
        for (std::size_t c = 0; c < cdim_; ++c) {
            const auto off = static_cast<Eigen::Index>(c) * db;
            a[c] = v0_.middleRows(off, db).adjoint() * m.middleRows(off, db);
        }
        detail::walsh_hadamard(a);
        const auto rest = v0_.rows() - static_cast<Eigen::Index>(cdim_) * db;
        if (rest > 0) {
            const CMatrix tail = v0_.bottomRows(rest).adjoint() * m.bottomRows(rest);
            for (auto &x : a) x += tail;
        }
        return a;
    }

    const CMatrix &v0() const { return v0_; }
    const CMatrix &core() const { return core_; }

    /// Tr[Λ_x F F†]
    double probability(std::size_t x, const CMatrix &f) const {
        CMatrix w = f;
        detail::apply_c_phase(w, x, cdim_, dim_b_);
        return (v0_.adjoint() * w).squaredNorm();
    }

private:
    std::size_t cdim_ = 0, dim_b_ = 0;
    CMatrix v0_, core_;
};

/// Runs the merge for an explicit source and code; `report` gets counts and
/// branch results filled in. Exposed separately so tests can supply codes.
inline void simulate_branches(const MergeSource &src, const CssCode &code, const MergeConfig &cfg, ProtocolReport &rep) {
    const std::size_t L = src.digits;
    const std::size_t cdim = ipow(2, L);
    const auto db = static_cast<Eigen::Index>(src.dim_b);
    const auto dr = static_cast<Eigen::Index>(src.dim_r);
    const auto cb = static_cast<Eigen::Index>((cdim + 1) * src.dim_b);
    if (code.n != L) throw ArgumentError("code length does not match source digits");

    // Ψ0^{CBR} as a (CB x R) matrix, abstain block zero.
    CMatrix theta0 = CMatrix::Zero(cb, dr);
    for (std::size_t i = 0; i < cdim; ++i)
        if (src.amp[i] != Complex(0)) theta0.middleRows(static_cast<Eigen::Index>(i) * db, db) = src.amp[i] * src.phi[i];
    const double theta_norm2 = theta0.squaredNorm();

    // Hadamard columns |x~>, <i|x~> = (-1)^{i·x} / sqrt(2^L)
    const double hnorm = 1.0 / std::sqrt(static_cast<double>(cdim));

    // zb: populated strings per Z syndrome (Γ's hypotheses); zb_all: every
    // basis string, which is what Alice's projector acts on.
    std::vector<std::vector<std::size_t>> zb(ipow(2, code.m_z())), zb_all(zb.size()), xb(ipow(2, code.m_x()));
    for (std::size_t i = 0; i < cdim; ++i) {
        zb_all[code.z_syndrome(i)].push_back(i);
        if (src.amp[i] != Complex(0)) zb[code.z_syndrome(i)].push_back(i);
        xb[code.x_syndrome(i)].push_back(i);
    }

    std::map<std::size_t, SquareRootMeasurement> gamma;
    auto gamma_for = [&](std::size_t beta) -> const SquareRootMeasurement & {
        auto it = gamma.find(beta);
        if (it != gamma.end()) return it->second;
        std::vector<CMatrix> f;
        for (auto i : zb[beta]) f.push_back(src.amp[i] * src.phi[i]);
        return gamma.emplace(beta, SquareRootMeasurement(db, zb[beta], f)).first->second;
    };
    const CovariantRoot lam(theta0, code.h_x, cdim, src.dim_b);
    const CMatrix theta0_v0 = theta0.adjoint() * lam.v0();
    // Tr[Λ_x ϑ_x] does not depend on x
    const double lambda_success = lam.probability(0, theta0) / theta_norm2;
    const CMatrix out_gram = lam.core() * (lam.v0().adjoint() * lam.v0()) * lam.core();
    // V0 and Θ0 in an orthonormal basis of their joint span, so output
    // minus target is formed on dr-column matrices without cancellation.
    CMatrix span_v0, span_theta0;
    {
        CMatrix both(cb, 2 * dr);
        both << lam.v0(), theta0;
        const Eigen::HouseholderQR<CMatrix> qr(both);
        const CMatrix q = qr.householderQ() * CMatrix::Identity(cb, std::min(cb, 2 * dr));
        span_v0 = q.adjoint() * lam.v0();
        span_theta0 = q.adjoint() * theta0;
    }

    CMatrix r_marginal = CMatrix::Zero(dr, dr);

    auto run_branch = [&](std::size_t alpha, std::size_t beta) -> std::optional<BranchRecord> {
        const auto &xs = xb[alpha];
        if (zb[beta].empty()) return std::nullopt;
        const auto &zs = zb_all[beta];
        // range(Π) = span{P_β |x~> : x ∈ α}
        CMatrix y = CMatrix::Zero(static_cast<Eigen::Index>(cdim), static_cast<Eigen::Index>(xs.size()));
        for (std::size_t c = 0; c < xs.size(); ++c)
            for (auto i : zs) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = detail::parity_sign(i, xs[c]) * hnorm;
        Eigen::JacobiSVD<CMatrix> svd(y, Eigen::ComputeThinU);
        Eigen::Index rank = 0;
        while (rank < svd.singularValues().size() && svd.singularValues()(rank) > 1e-8) ++rank;
        if (rank == 0) return std::nullopt;
        const CMatrix e = svd.matrixU().leftCols(rank);

        // ψ1[j] = Σ_i <e_j|i> a_i Φ_i
        std::vector<CMatrix> psi1(static_cast<std::size_t>(rank), CMatrix::Zero(db, dr));
        double prob = 0.0;
        for (Eigen::Index j = 0; j < rank; ++j) {
            for (auto i : zb[beta]) psi1[static_cast<std::size_t>(j)] += std::conj(e(static_cast<Eigen::Index>(i), j)) * src.amp[i] * src.phi[i];
            prob += psi1[static_cast<std::size_t>(j)].squaredNorm();
        }
        if (prob < 1e-14) return std::nullopt;

        const auto &g = gamma_for(beta);

        // target coefficients T_{j,x} = <e_j|x~>
        CMatrix t(rank, static_cast<Eigen::Index>(xs.size()));
        for (Eigen::Index j = 0; j < rank; ++j)
            for (std::size_t c = 0; c < xs.size(); ++c) {
                Complex acc = 0;
                for (auto i : zs) acc += std::conj(e(static_cast<Eigen::Index>(i), j)) * detail::parity_sign(i, xs[c]) * hnorm;
                t(j, static_cast<Eigen::Index>(c)) = acc;
            }
        const double t_norm2 = t.squaredNorm() * theta_norm2;

        // Per j: b = core a_x for x in α (output V0 b after the phase
        // correction) and the abstain output's squared norm.
        std::vector<std::vector<CMatrix>> outs(static_cast<std::size_t>(rank));
        double abstain_norm2 = 0;
        Complex overlap = 0;
        for (Eigen::Index j = 0; j < rank; ++j) {
            CMatrix chi = CMatrix::Zero(cb, dr);
            const auto &p1 = psi1[static_cast<std::size_t>(j)];
            for (std::size_t l = 0; l < g.size(); ++l)
                chi.middleRows(static_cast<Eigen::Index>(g.labels()[l]) * db, db) = g.apply_sqrt(l, p1);
            chi.middleRows(static_cast<Eigen::Index>(cdim) * db, db) = g.apply_abstain(p1);

            const auto a = lam.coefficients(chi);
            auto &bj = outs[static_cast<std::size_t>(j)];
            std::vector<CMatrix> kept(cdim, CMatrix::Zero(dr, dr));
            for (std::size_t c = 0; c < xs.size(); ++c) {
                const auto &ax = a[xs[c]];
                bj.push_back(lam.core() * ax);
                overlap += std::conj(t(j, static_cast<Eigen::Index>(c))) * (theta0_v0 * bj.back()).trace();
                r_marginal += ax.adjoint() * out_gram * ax;
                kept[xs[c]] = ax;
            }
            // abstain output χ - Σ_x Z^x V0 a_x, block c holding V0_c Σ_x (-1)^{c·x} a_x
            const CMatrix kept_sum = std::accumulate(kept.begin(), kept.end(), CMatrix(CMatrix::Zero(dr, dr)));
            detail::walsh_hadamard(kept);
            CMatrix abstain = chi;
            for (std::size_t c = 0; c < cdim; ++c)
                abstain.middleRows(static_cast<Eigen::Index>(c) * db, db) -=
                    lam.v0().middleRows(static_cast<Eigen::Index>(c) * db, db) * kept[c];
            abstain.bottomRows(db) -= lam.v0().bottomRows(db) * kept_sum;
            r_marginal += abstain.adjoint() * abstain;
            abstain_norm2 += abstain.squaredNorm();
        }

        // 1 - F^2 as the squared norm of the output's component orthogonal
        // to the target, summed term by term.
        const Complex scale = t_norm2 > 0 ? overlap / t_norm2 : Complex(0);
        double residual = abstain_norm2;
        for (Eigen::Index j = 0; j < rank; ++j)
            for (std::size_t c = 0; c < xs.size(); ++c)
                residual += (span_v0 * outs[static_cast<std::size_t>(j)][c] -
                             scale * t(j, static_cast<Eigen::Index>(c)) * span_theta0)
                                .squaredNorm();
        const double dist2 = std::clamp(residual / prob, 0.0, 1.0);

        BranchRecord br;
        br.alpha = alpha;
        br.beta = beta;
        br.probability = prob;
        br.distance = std::sqrt(dist2);
        double wsum = 0;
        for (std::size_t l = 0; l < g.size(); ++l) {
            const auto i = g.labels()[l];
            br.gamma_success += g.probability(l, src.amp[i] * src.phi[i]);
            wsum += std::norm(src.amp[i]);
        }
        br.gamma_success = wsum > 0 ? br.gamma_success / wsum : 0.0;
        br.lambda_success = lambda_success;
        return br;
    };

    const std::size_t nx = xb.size(), nz = zb.size();
    const std::size_t total = nx * nz;
    rep.exhaustive = cfg.exhaustive_branches && total <= cfg.max_exhaustive_branches;
    double weighted_distance = 0, weighted_fidelity = 0, prob_total = 0;
    auto accumulate = [&](const BranchRecord &b, double scale) {
        weighted_distance += scale * b.probability * b.distance;
        weighted_fidelity += scale * b.probability * std::sqrt(std::max(0.0, 1.0 - b.distance * b.distance));
        prob_total += scale * b.probability;
        if (b.probability > 1e-12) rep.distance_worst = std::max(rep.distance_worst, b.distance);
        rep.branches.push_back(b);
    };
    if (rep.exhaustive) {
        for (std::size_t a = 0; a < nx; ++a)
            for (std::size_t b = 0; b < nz; ++b)
                if (auto br = run_branch(a, b)) accumulate(*br, 1.0);
        rep.branches_evaluated = total;
    } else {
        std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_int_distribution<std::size_t> pick(0, total - 1);
        const double scale = static_cast<double>(total) / static_cast<double>(cfg.mc_branch_samples);
        for (std::size_t s = 0; s < cfg.mc_branch_samples; ++s) {
            const std::size_t idx = pick(rng);
            if (auto br = run_branch(idx / nz, idx % nz)) accumulate(*br, scale);
        }
        rep.branches_evaluated = cfg.mc_branch_samples;
        rep.diagnostics.push_back("branch count " + std::to_string(total) + " above exhaustive cap; Monte Carlo over " +
                                  std::to_string(cfg.mc_branch_samples) + " branches");
    }
    rep.branch_probability_total = prob_total;
    rep.distance = prob_total > 0 ? weighted_distance / prob_total : 1.0;
    rep.merge_fidelity = prob_total > 0 ? weighted_fidelity / prob_total : 0.0;

    if (rep.exhaustive) {
        // Bob and Alice never touch R: the branch-summed R marginal must
        // equal the input one.
        const CMatrix input_r = theta0.adjoint() * theta0;
        rep.r_marginal_deviation = (r_marginal - input_r).cwiseAbs().maxCoeff();
    }
}

/// Full protocol: entropies, optional pruning and top-up, code sampling,
/// branch simulation and resource accounting.
inline ProtocolReport run_merge(const MergeConfig &cfg) {
    if (cfg.n == 0) throw ArgumentError("run_merge: n must be >= 1");
    if (!(cfg.delta >= 0)) throw ArgumentError("run_merge: delta must be >= 0");
    ProtocolReport rep;
    rep.mode = cfg.mode;
    rep.n = cfg.n;
    rep.delta = cfg.delta;
    rep.seed = cfg.seed;
    const StateVector state = canonical_abr(cfg.state);
    if (!state.is_normalized(1e-8)) throw ArgumentError("run_merge: input state is not normalized");
    rep.entropies = analyze_copy(state);
    const auto &e = rep.entropies;
    const double nn = static_cast<double>(cfg.n);
    rep.target_rate_k = e.i_a_r;
    rep.target_rate_e = e.s_a_given_b;

    std::size_t ebits = 0;
    if (e.s_a_given_b > 1e-9) {
        if (cfg.top_up == TopUpPolicy::Off)
            throw EntanglementRequired("entanglement required: S(A|B) = " + std::to_string(e.s_a_given_b) +
                                       " > 0 and top-up is off");
        ebits = ceil_count(nn * (e.s_a_given_b + 2.0 * cfg.delta));
        rep.diagnostics.push_back("top-up: appended " + std::to_string(ebits) + " ebits");
    }

    MergeSource src;
    if (cfg.mode == MergeMode::Plain) {
        src = plain_source(state, cfg.n, cfg.max_dim);
    } else {
        auto ps = pruned_source(state, cfg.n, cfg.delta, cfg.max_dim);
        rep.prune_probability = ps.typical.prob_mass;
        rep.typical_dim = ps.typical.dim;
        src = std::move(ps.source);
    }
    src = append_ebits(src, ebits);
    rep.digits = src.digits;
    {
        const std::size_t cdim = ipow_capped(2, src.digits, cfg.max_dim, "run_merge register C");
        const std::size_t work = (cdim + 1) * src.dim_b;
        if (work > cfg.max_dim / std::max<std::size_t>(1, src.dim_r) || src.dim_b > cfg.max_dim)
            throw ResourceError("run_merge: working dimension " + std::to_string(work) + " x " +
                                std::to_string(src.dim_r) + " exceeds cap " + std::to_string(cfg.max_dim));
    }

    const std::size_t L = src.digits;
    std::size_t mz = cfg.m_z.value_or(ceil_count(nn * (e.s_z_given_b + cfg.delta)));
    const double x_rate = cfg.mode == MergeMode::Plain ? e.s_x_given_cb : e.phase_information;
    std::size_t mx = cfg.m_x.value_or(ceil_count(nn * (x_rate + cfg.delta)));
    if (cfg.m_z || cfg.m_x) {
        if (mz + mx > L)
            throw ArgumentError("run_merge: m_x + m_z = " + std::to_string(mx + mz) + " exceeds " + std::to_string(L) +
                                " digits");
    } else if (mz + mx > L) {
        rep.counts_clamped = true;
        const std::size_t bz = ceil_count(nn * e.s_z_given_b), bx = ceil_count(nn * x_rate);
        if (bz + bx <= L) {
            const std::size_t slack = L - bz - bx;
            mz = bz + std::min(mz - std::min(mz, bz), (slack + 1) / 2);
            mx = L - mz;
        } else {
            mz = std::min(bz, L);
            mx = L - mz;
        }
        rep.diagnostics.push_back("syndrome counts clamped to the " + std::to_string(L) + " available digits");
    }
    rep.m_z = mz;
    rep.m_x = mx;
    rep.logical = L - mz - mx;
    rep.code = sample_css(L, mx, mz, cfg.seed);

    rep.k_bits = static_cast<double>(mz + mx);
    rep.e_prod = static_cast<double>(rep.logical);
    rep.e_cons = static_cast<double>(ebits);
    rep.rate_k = rep.k_bits / nn;
    rep.rate_e = (rep.e_cons - rep.e_prod) / nn;

    simulate_branches(src, rep.code, cfg, rep);

    // Pruned runs: the typical projection aborts with probability 1-N, and
    // the pruned target Ψ0' has fidelity sqrt(N) with the original Ψ0.
    const double pn = rep.prune_probability;
    double dist = 0;
    for (const auto &b : rep.branches) {
        const double f = std::sqrt(std::max(0.0, 1.0 - b.distance * b.distance)) * std::sqrt(pn);
        dist += b.probability * std::sqrt(std::max(0.0, 1.0 - f * f));
    }
    dist = rep.branch_probability_total > 0 ? dist / rep.branch_probability_total : 1.0;
    rep.distance_overall = cfg.mode == MergeMode::Plain ? rep.distance : (1.0 - pn) + pn * dist;
    return rep;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CopyEntropies &e) {
    return {{"p", e.p},
            {"S_A", e.s_a},
            {"S_B", e.s_b},
            {"S_R", e.s_r},
            {"S_AB", e.s_ab},
            {"S_A_given_B", e.s_a_given_b},
            {"I_A_R", e.i_a_r},
            {"S_Z_given_B", e.s_z_given_b},
            {"S_X_given_CB", e.s_x_given_cb},
            {"phase_information", e.phase_information}};
}

inline nlohmann::json to_json(const ProtocolReport &r) {
    nlohmann::json branches = nlohmann::json::array();
    for (const auto &b : r.branches)
        branches.push_back({{"alpha", b.alpha},
                            {"beta", b.beta},
                            {"probability", b.probability},
                            {"distance", b.distance},
                            {"gamma_success", b.gamma_success},
                            {"lambda_success", b.lambda_success}});
    nlohmann::json j = {{"mode", to_string(r.mode)},
                        {"n", r.n},
                        {"delta", r.delta},
                        {"seed", r.seed},
                        {"entropies", to_json(r.entropies)},
                        {"digits", r.digits},
                        {"m_z", r.m_z},
                        {"m_x", r.m_x},
                        {"logical", r.logical},
                        {"counts_clamped", r.counts_clamped},
                        {"code", to_json(r.code)},
                        {"K_n", r.k_bits},
                        {"E_prod", r.e_prod},
                        {"E_cons", r.e_cons},
                        {"R_K", r.rate_k},
                        {"R_E", r.rate_e},
                        {"target_R_K", r.target_rate_k},
                        {"target_R_E", r.target_rate_e},
                        {"prune_probability", r.prune_probability},
                        {"typical_dim", r.typical_dim},
                        {"distance", r.distance},
                        {"distance_worst", r.distance_worst},
                        {"distance_overall", r.distance_overall},
                        {"merge_fidelity", r.merge_fidelity},
                        {"branch_probability_total", r.branch_probability_total},
                        {"exhaustive", r.exhaustive},
                        {"branches_evaluated", r.branches_evaluated},
                        {"branches", branches},
                        {"diagnostics", r.diagnostics}};
    j["r_marginal_deviation"] = std::isnan(r.r_marginal_deviation) ? nlohmann::json(nullptr) : nlohmann::json(r.r_marginal_deviation);
    return j;
}

}  // namespace mergesim
