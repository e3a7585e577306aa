#pragma once

// Static-HSW side-information measurements.
//
// A measurement for one syndrome bucket is the square-root ("pretty good")
// measurement built from signal operators σ_y = W_y W_y†:
//
//     Λ_y = S^{-1/2} σ_y S^{-1/2},   S = Σ_y σ_y,
//
// completed by an abstain element 1 - Σ_y Λ_y. Everything is evaluated in
// factored form: with W = [W_0 .. W_{Y-1}] and G = W†W, the columns of
// U = W G^{+1/2} span supp(S) orthonormally and Λ_y = U_y U_y†, so no
// operator on the full space is ever square-rooted.

#include "mergesim/codes.hpp"
#include "mergesim/qstate.hpp"
#include "mergesim/typicality.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace mergesim {

struct PovmElement {
    std::size_t syndrome = 0;
    std::optional<std::size_t> guess;  ///< empty for the abstain outcome
    CMatrix op;
};

struct Povm {
    std::size_t dim = 0;
    std::vector<PovmElement> elements;

    /// max |Σ_i E_i - 1|
    double completeness_defect() const {
        CMatrix sum = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (const auto &e : elements) sum += e.op;
        return (sum - CMatrix::Identity(sum.rows(), sum.cols())).cwiseAbs().maxCoeff();
    }

    double min_eigenvalue() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto &e : elements) m = std::min(m, mergesim::min_eigenvalue(e.op));
        return m;
    }
};

class SquareRootMeasurement {
public:
    SquareRootMeasurement() = default;

    /// factors[i] is W_i (dim x r_i); labels[i] names outcome i.
    SquareRootMeasurement(Eigen::Index dim, std::vector<std::size_t> labels, const std::vector<CMatrix> &factors)
        : dim_(dim), labels_(std::move(labels)) {
        if (labels_.size() != factors.size()) throw ArgumentError("labels/factors size mismatch");
        Eigen::Index total = 0;
        for (const auto &w : factors) {
            if (w.rows() != dim) throw ArgumentError("signal factor has wrong dimension");
            offsets_.push_back(total);
            total += w.cols();
        }
        CMatrix w_all(dim, total);
        for (std::size_t i = 0; i < factors.size(); ++i)
            w_all.middleCols(offsets_[i], factors[i].cols()) = factors[i];
        // W G^{+1/2} = (W W†)^{+1/2} W; factor whichever side is smaller
        if (dim < total) u_ = psd_pinv_sqrt(w_all * w_all.adjoint()) * w_all;
        else u_ = w_all * psd_pinv_sqrt(w_all.adjoint() * w_all);
        for (std::size_t i = 0; i < factors.size(); ++i) {
            const auto uy = u_.middleCols(offsets_[i], factors[i].cols());
            root_core_.push_back(psd_pinv_sqrt(uy.adjoint() * uy));
            sizes_.push_back(factors[i].cols());
        }
    }

    Eigen::Index dim() const { return dim_; }
    std::size_t size() const { return labels_.size(); }
    const std::vector<std::size_t> &labels() const { return labels_; }

    CMatrix element(std::size_t i) const {
        const auto uy = block(i);
        return uy * uy.adjoint();
    }

    CMatrix abstain_element() const {
        return CMatrix::Identity(dim_, dim_) - u_ * u_.adjoint();
    }

    /// sqrt(Λ_i) X, with X of shape (dim x k).
    CMatrix apply_sqrt(std::size_t i, const CMatrix &x) const {
        const auto uy = block(i);
        return uy * (root_core_[i] * (uy.adjoint() * x));
    }

    /// sqrt(1 - ΣΛ) X = (1 - UU†) X.
    CMatrix apply_abstain(const CMatrix &x) const {
        if (u_.cols() == 0) return x;
        return x - u_ * (u_.adjoint() * x);
    }

    /// Tr[Λ_i ρ] for ρ = F F†.
    double probability(std::size_t i, const CMatrix &state_factor) const {
        return (block(i).adjoint() * state_factor).squaredNorm();
    }

    Povm to_povm(std::size_t syndrome = 0) const {
        Povm p;
        p.dim = static_cast<std::size_t>(dim_);
        for (std::size_t i = 0; i < size(); ++i) p.elements.push_back({syndrome, labels_[i], element(i)});
        p.elements.push_back({syndrome, std::nullopt, abstain_element()});
        return p;
    }

private:
    Eigen::Block<const CMatrix, Eigen::Dynamic, Eigen::Dynamic, true> block(std::size_t i) const {
        return u_.middleCols(offsets_[i], sizes_[i]);
    }

    Eigen::Index dim_ = 0;
    std::vector<std::size_t> labels_;
    std::vector<Eigen::Index> offsets_, sizes_;
    CMatrix u_;
    std::vector<CMatrix> root_core_;
};

/// F with F F† = ρ, keeping only eigenvalues above cutoff.
inline CMatrix psd_factor(const CMatrix &rho, double cutoff = 1e-14) {
    auto es = hermitian_eig(rho);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) > cutoff) keep.push_back(i);
    CMatrix f(rho.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        f.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(es.eigenvalues()(keep[c]));
    return f;
}

// ---------------------------------------------------------------------------
// i.i.d. ensembles

/// n-fold i.i.d. extension: entry k (base-|base| digits) has weight Π p_{k_i}
/// and state ⊗ ρ_{k_i}.
inline Ensemble iid_ensemble(const Ensemble &base, std::size_t n, std::size_t cap = std::size_t{1} << 16) {
    base.validate();
    const std::size_t a = base.size();
    const std::size_t count = ipow_capped(a, n, cap, "iid_ensemble");
    const std::size_t d = base.entries.front().state.layout().total_dim();
    (void)ipow_capped(d, n, 4096, "iid_ensemble state dimension");
    std::vector<Part> parts;
    for (const auto &p : base.entries.front().state.layout().parts()) parts.push_back({p.label, ipow(p.dim, n)});
    const SubsystemLayout layout(parts);
    Ensemble out;
    for (std::size_t k = 0; k < count; ++k) {
        const auto dg = digits_of(k, a, n);
        double w = 1.0;
        CMatrix rho = CMatrix::Identity(1, 1);
        for (auto j : dg) {
            w *= base.entries[j].weight;
            rho = kron(rho, base.entries[j].state.matrix());
        }
        out.entries.push_back({w, DensityOperator(layout, rho)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Projector conditions

struct ConditionBounds {
    double epsilon = 1.0, r = 0.0, d = 0.0, lambda = 0.0;
};

struct ConditionReport {
    double epsilon = 0.0;         ///< max of the two mass defects
    double epsilon_average = 0.0; ///< Tr[<ρ>(1-Q)]
    double epsilon_states = 0.0;  ///< <Tr[ρ_k(1-Q_k)]>
    double r = 0.0, d = 0.0, lambda = 0.0;
    std::array<bool, 5> satisfied{};
    std::array<double, 5> margin{};

    /// log2(r d λ)
    double log2_rdl() const { return std::log2(r) + std::log2(d) + std::log2(lambda); }
    /// ⌊(1/γ) log2(r d λ)⌋, the side-information size the conditions allow.
    double side_information(double gamma) const { return std::floor(log2_rdl() / gamma); }
    bool all_satisfied() const {
        return std::all_of(satisfied.begin(), satisfied.end(), [](bool b) { return b; });
    }
};

namespace detail {
inline double slack(double bound) { return 1e-9 * std::max(1.0, std::abs(bound)); }
}  // namespace detail

/// Measures the smallest (ε, r, d, λ) for which
///   Tr[<ρ>(1-Q)] ≤ ε, <Tr[ρ_k(1-Q_k)]> ≤ ε, Q_k ≤ r ρ_k,
///   Σ_{k typical} ρ_k ≤ d <ρ>, ||Q<ρ>Q||_∞ ≤ λ
/// and compares them against optional bounds (margins carry a 1e-9 relative
/// slack). Without bounds the measured values are their own targets.
inline ConditionReport check_conditions(const std::vector<CMatrix> &q_k, const CMatrix &q, const Ensemble &ens,
                                        const std::vector<bool> &typical = {},
                                        std::optional<ConditionBounds> bounds = std::nullopt) {
    ens.validate();
    if (q_k.size() != ens.size()) throw ArgumentError("check_conditions: one Q_k per ensemble member required");
    const CMatrix avg = ens.average().matrix();
    const auto dim = avg.rows();
    if (q.rows() != dim) throw ArgumentError("check_conditions: Q has wrong dimension");
    const CMatrix id = CMatrix::Identity(dim, dim);
    ConditionReport rep;

    rep.epsilon_average = std::max(0.0, (avg * (id - q)).trace().real());
    CMatrix typical_sum = CMatrix::Zero(dim, dim);
    for (std::size_t k = 0; k < ens.size(); ++k) {
        const CMatrix &rho = ens.entries[k].state.matrix();
        const CMatrix &qk = q_k[k];
        rep.epsilon_states += ens.entries[k].weight * std::max(0.0, (rho * (id - qk)).trace().real());
        if (typical.empty() || typical[k]) typical_sum += rho;
        if (qk.cwiseAbs().maxCoeff() < 1e-14) continue;
        // smallest r with Q_k ≤ r ρ_k
        const CMatrix supp = support_basis(rho, 1e-12);
        const CMatrix outside = qk - supp * (supp.adjoint() * qk);
        if (outside.cwiseAbs().maxCoeff() > 1e-8) {
            rep.r = std::numeric_limits<double>::infinity();
            continue;
        }
        const CMatrix rinv = psd_pinv_sqrt(rho, 1e-12);
        rep.r = std::max(rep.r, max_eigenvalue(rinv * qk * rinv));
    }
    rep.epsilon = std::max(rep.epsilon_average, rep.epsilon_states);
    {
        const CMatrix supp = support_basis(avg, 1e-12);
        const CMatrix outside = typical_sum - supp * (supp.adjoint() * typical_sum);
        if (outside.cwiseAbs().maxCoeff() > 1e-8) {
            rep.d = std::numeric_limits<double>::infinity();
        } else {
            const CMatrix ainv = psd_pinv_sqrt(avg, 1e-12);
            rep.d = max_eigenvalue(ainv * typical_sum * ainv);
        }
    }
    rep.lambda = max_eigenvalue(q * avg * q);

    const ConditionBounds b = bounds.value_or(ConditionBounds{rep.epsilon, rep.r, rep.d, rep.lambda});
    const std::array<double, 5> bound{b.epsilon, b.epsilon, b.r, b.d, b.lambda};
    const std::array<double, 5> measured{rep.epsilon_average, rep.epsilon_states, rep.r, rep.d, rep.lambda};
    for (std::size_t i = 0; i < 5; ++i) {
        rep.margin[i] = std::isinf(measured[i]) ? -std::numeric_limits<double>::infinity()
                                                : bound[i] - measured[i] + detail::slack(bound[i]);
        rep.satisfied[i] = rep.margin[i] >= 0.0;
    }
    return rep;
}

/// Typical projectors for an n-fold i.i.d. ensemble built from `base`:
/// Q projects onto the typical subspace of ρ^{⊗n} (ρ the base average);
/// for typical k, Q_k projects onto the eigen-strings of ρ_k typical around
/// Σ_j p_j S(ρ_j); atypical k get Q_k = 0.
struct HswProjectors {
    TypicalSetDescriptor typical_set;
    TypicalProjector q;
    std::vector<CMatrix> q_k_basis;  ///< orthonormal columns (0 columns when atypical)
    std::vector<bool> typical;

    std::vector<CMatrix> q_k() const {
        std::vector<CMatrix> out;
        for (const auto &b : q_k_basis) {
            const auto d = q.basis.rows();
            out.push_back(b.cols() == 0 ? CMatrix::Zero(d, d) : CMatrix(b * b.adjoint()));
        }
        return out;
    }
};

inline double average_conditional_entropy(const Ensemble &base) {
    double s = 0.0;
    for (const auto &e : base.entries) s += e.weight * von_neumann_entropy(e.state);
    return s;
}

inline HswProjectors hsw_projectors(const Ensemble &base, std::size_t n, double delta) {
    base.validate();
    HswProjectors out;
    std::vector<double> p;
    for (const auto &e : base.entries) p.push_back(e.weight);
    out.typical_set = typical_set(p, n, delta);
    out.q = typical_projector(base.average(), n, delta);
    const double center = average_conditional_entropy(base);
    const std::size_t count = ipow(base.size(), n);
    const auto dim = out.q.basis.rows();
    for (std::size_t k = 0; k < count; ++k) {
        const bool typ = out.typical_set.contains(k);
        out.typical.push_back(typ);
        if (!typ) {
            out.q_k_basis.emplace_back(dim, 0);
            continue;
        }
        std::vector<CMatrix> factors;
        for (auto j : digits_of(k, base.size(), n)) factors.push_back(base.entries[j].state.matrix());
        out.q_k_basis.push_back(typical_product_projector(factors, center, delta).basis);
    }
    return out;
}

/// r = 2^{n[Σp S(ρ_k)+δ]}, d = 2^{n[H(p)+δ]}, λ = 2^{-n[S(ρ)-δ]}. ε has no
/// closed form at fixed n (its constant is unspecified) and is left at 1.
inline ConditionBounds iid_condition_bounds(const Ensemble &base, std::size_t n, double delta) {
    std::vector<double> p;
    for (const auto &e : base.entries) p.push_back(e.weight);
    const double nn = static_cast<double>(n);
    return {1.0, std::exp2(nn * (average_conditional_entropy(base) + delta)), std::exp2(nn * (shannon_entropy(p) + delta)),
            std::exp2(-nn * (von_neumann_entropy(base.average()) - delta))};
}

// ---------------------------------------------------------------------------
// Measurements keyed by hash syndrome

enum class SignalKind {
    Smoothed,  ///< σ_k = Q Q_k Q (unweighted; atypical k never guessed)
    Weighted,  ///< σ_k = p_k ρ_k (plain pretty-good measurement)
};

/// Signal factors W_k with W_k W_k† = σ_k.
inline std::vector<CMatrix> smoothed_factors(const HswProjectors &proj) {
    std::vector<CMatrix> out;
    const CMatrix qb = proj.q.basis;
    for (const auto &b : proj.q_k_basis) out.push_back(qb * (qb.adjoint() * b));
    return out;
}

inline std::vector<CMatrix> weighted_factors(const Ensemble &ens) {
    std::vector<CMatrix> out;
    for (const auto &e : ens.entries) out.push_back(std::sqrt(e.weight) * psd_factor(e.state.matrix()));
    return out;
}

struct SyndromeMeasurement {
    HashFunction f;
    std::vector<std::vector<std::size_t>> buckets;   ///< members per syndrome
    std::vector<SquareRootMeasurement> measurements; ///< one per syndrome

    Povm povm(std::size_t syndrome) const { return measurements.at(syndrome).to_povm(syndrome); }
};

/// For each syndrome t, the square-root measurement over {σ_k : f(k) = t}
/// plus abstain. The ensemble is indexed by base-q strings of length f.n.
inline SyndromeMeasurement build_measurement(const Ensemble &ens, const HashFunction &f,
                                             const std::vector<CMatrix> &signal_factors) {
    if (ens.size() != ipow(f.q, f.n))
        throw ArgumentError("build_measurement: ensemble size must be q^n for the hash domain");
    if (signal_factors.size() != ens.size()) throw ArgumentError("build_measurement: one factor per member");
    const auto dim = ens.entries.front().state.matrix().rows();
    SyndromeMeasurement out{f, std::vector<std::vector<std::size_t>>(f.syndrome_count()), {}};
    for (std::size_t k = 0; k < ens.size(); ++k) out.buckets[f.apply_index(k)].push_back(k);
    for (const auto &bucket : out.buckets) {
        std::vector<CMatrix> fac;
        for (auto k : bucket) fac.push_back(signal_factors[k]);
        out.measurements.emplace_back(dim, bucket, fac);
    }
    return out;
}

inline SyndromeMeasurement build_measurement(const Ensemble &ens, const HashFunction &f, const HswProjectors &proj) {
    return build_measurement(ens, f, smoothed_factors(proj));
}

/// Σ_k p_k (1 - Tr[Λ_{f(k),k} ρ_k]); abstaining counts as an error.
inline double exact_error(const Ensemble &ens, const SyndromeMeasurement &m,
                          const std::vector<CMatrix> &state_factors) {
    double pe = 0.0;
    for (std::size_t t = 0; t < m.buckets.size(); ++t) {
        const auto &bucket = m.buckets[t];
        for (std::size_t i = 0; i < bucket.size(); ++i) {
            const auto k = bucket[i];
            const double ok = m.measurements[t].probability(i, state_factors[k]);
            pe += ens.entries[k].weight * std::max(0.0, 1.0 - ok);
        }
    }
    return pe;
}

struct ErrorEstimate {
    double mean = 0.0;
    double standard_error = 0.0;  ///< Monte Carlo standard error over hash samples
    std::vector<double> per_hash;
};

/// Averages the exact error over hash functions sample_hash(n, m, q, seed_i).
inline ErrorEstimate error_probability(const Ensemble &ens, std::size_t n, std::size_t m, std::size_t q,
                                       const std::vector<std::uint64_t> &seeds,
                                       const std::vector<CMatrix> &signal_factors) {
    if (seeds.empty()) throw ArgumentError("error_probability: no hash seeds");
    std::vector<CMatrix> state_factors;
    for (const auto &e : ens.entries) state_factors.push_back(psd_factor(e.state.matrix()));
    ErrorEstimate est;
    for (auto s : seeds) {
        const auto f = sample_hash(n, m, q, s);
        est.per_hash.push_back(exact_error(ens, build_measurement(ens, f, signal_factors), state_factors));
    }
    const double cnt = static_cast<double>(seeds.size());
    for (double v : est.per_hash) est.mean += v / cnt;
    if (seeds.size() > 1) {
        double var = 0.0;
        for (double v : est.per_hash) var += (v - est.mean) * (v - est.mean);
        est.standard_error = std::sqrt(var / (cnt - 1.0) / cnt);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Covariant projectors on C ⊗ B

/// P_x = (Z^x ⊗ 1) P_0 (Z^x ⊗ 1)† for every x ∈ Z_q^L, Z acting digit-wise
/// on C of dimension q^L.
inline std::vector<CMatrix> covariant_projectors(const CMatrix &p0, std::size_t q, std::size_t digits,
                                                 std::size_t dim_b) {
    const std::size_t dc = ipow(q, digits);
    if (static_cast<std::size_t>(p0.rows()) != dc * dim_b || p0.rows() != p0.cols())
        throw ArgumentError("covariant_projectors: P_0 dimension does not match q^L * dim(B)");
    std::vector<CMatrix> out;
    for (std::size_t x = 0; x < dc; ++x) {
        const CVector zc = z_digits_diagonal(q, digits_of(x, q, digits));
        CVector diag(static_cast<Eigen::Index>(dc * dim_b));
        for (std::size_t c = 0; c < dc; ++c)
            diag.segment(static_cast<Eigen::Index>(c * dim_b), static_cast<Eigen::Index>(dim_b)).setConstant(zc(static_cast<Eigen::Index>(c)));
        out.push_back(diag.asDiagonal() * p0 * diag.conjugate().asDiagonal());
    }
    return out;
}

/// ϑ̄ = Σ_k p_k |k><k|^C ⊗ φ_k^B and its pruned form ϑ̄' = Σ_{k∈T} (p_k/N) |k><k| ⊗ φ_k^B
/// as dense matrices, for per-copy probabilities p and Bob states φ_j^B.
struct PhaseAverages {
    CMatrix average;
    CMatrix average_pruned;
    double prune_probability = 0.0;
};

inline PhaseAverages phase_averages(const std::vector<double> &p, const std::vector<CMatrix> &phi_b, std::size_t n,
                                    double delta, std::size_t max_dim = 4096) {
    if (p.size() != phi_b.size()) throw ArgumentError("phase_averages: one Bob state per probability");
    const auto ts = typical_set(p, n, delta);
    const std::size_t dc = ipow(p.size(), n);
    const std::size_t db = ipow_capped(static_cast<std::size_t>(phi_b.front().rows()), n, max_dim, "phase_averages B");
    if (dc * db > max_dim) throw ResourceError("phase_averages: dimension " + std::to_string(dc * db) + " exceeds cap");
    const auto dim = static_cast<Eigen::Index>(dc * db);
    PhaseAverages out{CMatrix::Zero(dim, dim), CMatrix::Zero(dim, dim), ts.prob_mass};
    for (std::size_t k = 0; k < dc; ++k) {
        CMatrix phi = CMatrix::Identity(1, 1);
        for (auto j : digits_of(k, p.size(), n)) phi = kron(phi, phi_b[j]);
        const auto at = static_cast<Eigen::Index>(k * db);
        const auto b = static_cast<Eigen::Index>(db);
        const double pk = ts.string_probability(k);
        out.average.block(at, at, b, b) = pk * phi;
        if (ts.contains(k)) out.average_pruned.block(at, at, b, b) = pk / ts.prob_mass * phi;
    }
    return out;
}

/// Smallest eigenvalue of (1/N)ϑ̄ - ϑ̄' using its block structure: typical
/// blocks vanish, atypical blocks are (p_k/N) ⊗_i φ_{k_i}^B with spectra
/// given by products of per-copy eigenvalues. No dense n-copy matrices.
inline double phase_average_gap(const std::vector<double> &p, const std::vector<CMatrix> &phi_b, std::size_t n,
                                double delta) {
    if (p.size() != phi_b.size()) throw ArgumentError("phase_average_gap: one Bob state per probability");
    const auto ts = typical_set(p, n, delta);
    std::vector<double> lo, hi;
    for (const auto &f : phi_b) {
        lo.push_back(min_eigenvalue(f));
        hi.push_back(max_eigenvalue(f));
    }
    double gap = ts.dim > 0 ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ipow(p.size(), n); ++k) {
        if (ts.contains(k)) continue;
        double lo_prod = 1.0;
        for (auto j : digits_of(k, p.size(), n)) lo_prod *= lo[j];
        gap = std::min(gap, ts.string_probability(k) / ts.prob_mass * lo_prod);
    }
    return gap;
}

/// Quantities transferred from the i.i.d. conditions to the pruned state.
struct CovariantReport {
    double epsilon = 0.0;            ///< max(Tr[(1-P_0)Ψ0], Tr[ϑ̄(1-P)], 1-N)
    double base_mass_defect = 0.0;   ///< Tr[(1-P_0)Ψ0^{CB}]
    double pruned_mass_defect = 0.0; ///< Tr[(1-P_0)Ψ0'^{CB}]
    double pruned_mass_bound = 0.0;  ///< ε + sqrt(ε)
    double average_trace_norm = 0.0; ///< ||ϑ̄' - ϑ̄||₁
    double average_trace_norm_bound = 0.0; ///< 2(1-N)
    double lambda = 0.0;             ///< ||P ϑ̄ P||_∞
    double lambda_pruned = 0.0;      ///< ||P ϑ̄' P||_∞
    double lambda_over_n = 0.0;      ///< λ / N
    double lambda_relaxed = 0.0;     ///< λ(1+2ε)
    double gap_min_eigenvalue = 0.0; ///< min eig of (1/N)ϑ̄ - ϑ̄'
};

inline CovariantReport covariant_report(const CMatrix &psi0_cb, const CMatrix &psi0p_cb, const CMatrix &avg,
                                        const CMatrix &avg_pruned, double prune_probability, const CMatrix &p0,
                                        const CMatrix &p) {
    const auto dim = psi0_cb.rows();
    const CMatrix id = CMatrix::Identity(dim, dim);
    CovariantReport r;
    r.base_mass_defect = std::max(0.0, (psi0_cb * (id - p0)).trace().real());
    r.pruned_mass_defect = std::max(0.0, (psi0p_cb * (id - p0)).trace().real());
    const double avg_defect = std::max(0.0, (avg * (id - p)).trace().real());
    r.epsilon = std::max({r.base_mass_defect, avg_defect, 1.0 - prune_probability});
    r.pruned_mass_bound = r.epsilon + std::sqrt(r.epsilon);
    r.average_trace_norm = 2.0 * trace_distance(avg_pruned, avg);
    r.average_trace_norm_bound = 2.0 * (1.0 - prune_probability);
    r.lambda = max_eigenvalue(p * avg * p);
    r.lambda_pruned = max_eigenvalue(p * avg_pruned * p);
    r.lambda_over_n = r.lambda / prune_probability;
    r.lambda_relaxed = r.lambda * (1.0 + 2.0 * r.epsilon);
    r.gap_min_eigenvalue = min_eigenvalue(avg / prune_probability - avg_pruned);
    return r;
}

}  // namespace mergesim
