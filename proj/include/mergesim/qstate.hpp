#pragma once

// Dense multipartite states: layouts, reduced states, entropies, distances
// and local operator application. All amplitudes are stored big-endian in
// layout order (first part is the most significant index).

#include "mergesim/linalg.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mergesim {

enum class Label { A, B, C, D, R, Ap, Bp };

inline std::string to_string(Label l) {
    switch (l) {
        case Label::A: return "A";
        case Label::B: return "B";
        case Label::C: return "C";
        case Label::D: return "D";
        case Label::R: return "R";
        case Label::Ap: return "A'";
        case Label::Bp: return "B'";
    }
    return "?";
}

inline Label label_from_string(std::string_view s) {
    if (s == "A") return Label::A;
    if (s == "B") return Label::B;
    if (s == "C") return Label::C;
    if (s == "D") return Label::D;
    if (s == "R") return Label::R;
    if (s == "A'") return Label::Ap;
    if (s == "B'") return Label::Bp;
    throw ArgumentError("unknown subsystem label '" + std::string(s) + "'");
}

using LabelSet = std::vector<Label>;

struct Part {
    Label label;
    std::size_t dim;
    bool operator==(const Part &) const = default;
};

class SubsystemLayout {
public:
    SubsystemLayout() = default;
    SubsystemLayout(std::initializer_list<Part> parts) : SubsystemLayout(std::vector<Part>(parts)) {}
    explicit SubsystemLayout(std::vector<Part> parts) : parts_(std::move(parts)) {
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            if (parts_[i].dim < 2)
                throw ArgumentError("part " + to_string(parts_[i].label) + " has dimension < 2");
            for (std::size_t j = 0; j < i; ++j)
                if (parts_[j].label == parts_[i].label)
                    throw ArgumentError("duplicate label " + to_string(parts_[i].label));
        }
    }

    const std::vector<Part> &parts() const { return parts_; }
    std::size_t size() const { return parts_.size(); }

    std::size_t total_dim() const {
        std::size_t d = 1;
        for (const auto &p : parts_) d *= p.dim;
        return d;
    }

    bool has(Label l) const {
        return std::any_of(parts_.begin(), parts_.end(), [&](const Part &p) { return p.label == l; });
    }

    std::size_t position(Label l) const {
        for (std::size_t i = 0; i < parts_.size(); ++i)
            if (parts_[i].label == l) return i;
        throw ArgumentError("label " + to_string(l) + " not in layout");
    }

    std::size_t dim(Label l) const { return parts_[position(l)].dim; }

    /// Product of dimensions of the given labels; 1 for absent labels is not allowed.
    std::size_t dim(const LabelSet &ls) const {
        std::size_t d = 1;
        for (auto l : ls) d *= dim(l);
        return d;
    }

    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d;
        for (const auto &p : parts_) d.push_back(p.dim);
        return d;
    }

    /// Sub-layout with the given labels, in layout order.
    SubsystemLayout subset(const LabelSet &ls) const {
        std::vector<Part> out;
        for (const auto &p : parts_)
            if (std::find(ls.begin(), ls.end(), p.label) != ls.end()) out.push_back(p);
        return SubsystemLayout(std::move(out));
    }

    bool operator==(const SubsystemLayout &) const = default;

private:
    std::vector<Part> parts_;
};

class StateVector {
public:
    StateVector() = default;
    StateVector(SubsystemLayout layout, CVector amplitudes)
        : layout_(std::move(layout)), amps_(std::move(amplitudes)) {
        if (static_cast<std::size_t>(amps_.size()) != layout_.total_dim())
            throw ArgumentError("amplitude count " + std::to_string(amps_.size()) +
                                " does not match layout dimension " + std::to_string(layout_.total_dim()));
    }

    static StateVector basis(SubsystemLayout layout, std::size_t index) {
        CVector v = CVector::Zero(static_cast<Eigen::Index>(layout.total_dim()));
        v(static_cast<Eigen::Index>(index)) = 1.0;
        return {std::move(layout), std::move(v)};
    }

    const SubsystemLayout &layout() const { return layout_; }
    const CVector &amplitudes() const { return amps_; }
    double norm() const { return amps_.norm(); }
    bool is_normalized(double tolerance = tol::kNorm) const {
        return std::abs(amps_.squaredNorm() - 1.0) <= tolerance;
    }

    StateVector normalized() const {
        const double nrm = norm();
        if (nrm == 0.0) throw NumericError("cannot normalize the zero vector");
        return {layout_, amps_ / nrm};
    }

    Complex inner(const StateVector &other) const {
        if (!(layout_ == other.layout_)) throw ArgumentError("inner product of states on different layouts");
        return amps_.dot(other.amps_);
    }

private:
    SubsystemLayout layout_;
    CVector amps_;
};

class DensityOperator {
public:
    DensityOperator() = default;
    DensityOperator(SubsystemLayout layout, CMatrix matrix) : layout_(std::move(layout)), m_(std::move(matrix)) {
        const auto d = static_cast<Eigen::Index>(layout_.total_dim());
        if (m_.rows() != d || m_.cols() != d)
            throw ArgumentError("density matrix shape does not match layout dimension " + std::to_string(d));
    }

    static DensityOperator from_pure(const StateVector &s) {
        return {s.layout(), s.amplitudes() * s.amplitudes().adjoint()};
    }

    const SubsystemLayout &layout() const { return layout_; }
    const CMatrix &matrix() const { return m_; }

    /// Throws NumericError unless Hermitian, PSD and unit trace within tolerance.
    void validate() const {
        if (hermiticity_defect(m_) > tol::kHermitian) throw NumericError("density operator is not Hermitian");
        if (std::abs(m_.trace() - Complex(1.0)) > tol::kNorm) throw NumericError("density operator trace != 1");
        if (min_eigenvalue(m_) < tol::kPsdFloor) throw NumericError("density operator is not PSD");
    }

private:
    SubsystemLayout layout_;
    CMatrix m_;
};

struct Ensemble {
    struct Entry {
        double weight;
        DensityOperator state;
    };
    std::vector<Entry> entries;

    void validate() const {
        if (entries.empty()) throw ArgumentError("empty ensemble");
        double total = 0.0;
        for (const auto &e : entries) {
            if (e.weight < 0) throw ArgumentError("negative ensemble weight");
            if (!(e.state.layout() == entries.front().state.layout()))
                throw ArgumentError("ensemble states on different layouts");
            total += e.weight;
        }
        if (std::abs(total - 1.0) > tol::kNorm) throw ArgumentError("ensemble weights do not sum to 1");
    }

    std::size_t size() const { return entries.size(); }

    DensityOperator average() const {
        CMatrix m = CMatrix::Zero(entries.front().state.matrix().rows(), entries.front().state.matrix().cols());
        for (const auto &e : entries) m += e.weight * e.state.matrix();
        return {entries.front().state.layout(), m};
    }
};

// ---------------------------------------------------------------------------
// Construction

/// |a> ⊗ |b>; label sets must be disjoint.
inline StateVector tensor(const StateVector &a, const StateVector &b) {
    std::vector<Part> parts = a.layout().parts();
    for (const auto &p : b.layout().parts()) parts.push_back(p);
    return {SubsystemLayout(std::move(parts)), kron(a.amplitudes(), b.amplitudes())};
}

/// n-fold tensor power with all copies of each label grouped into one part
/// of dimension d^n (copy 1 most significant).
inline StateVector tensor_power(const StateVector &s, std::size_t n, std::size_t max_dim = std::size_t{1} << 20) {
    if (n == 0) throw ArgumentError("tensor_power requires n >= 1");
    const std::size_t total = ipow_capped(s.layout().total_dim(), n, max_dim, "tensor_power");
    CVector v = s.amplitudes();
    for (std::size_t i = 1; i < n; ++i) v = kron(v, s.amplitudes());

    // Axes currently ordered (copy, part); regroup to (part, copy).
    const std::size_t k = s.layout().size();
    std::vector<std::size_t> dims, perm;
    for (std::size_t c = 0; c < n; ++c)
        for (const auto &p : s.layout().parts()) dims.push_back(p.dim);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t c = 0; c < n; ++c) perm.push_back(c * k + p);
    std::vector<Part> parts;
    for (const auto &p : s.layout().parts()) parts.push_back({p.label, ipow(p.dim, n)});
    (void)total;
    return {SubsystemLayout(std::move(parts)), permute_axes(v, dims, perm)};
}

namespace detail {

inline void check_labels(const SubsystemLayout &layout, const LabelSet &ls) {
    for (std::size_t i = 0; i < ls.size(); ++i) {
        (void)layout.position(ls[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (ls[i] == ls[j]) throw ArgumentError("label " + to_string(ls[i]) + " repeated");
    }
}

/// Amplitudes reshaped to a (rest x front) column-major matrix after moving
/// `front` labels (in the given order) to the most significant positions.
struct Split {
    std::vector<std::size_t> perm;
    std::vector<std::size_t> permuted_dims;
    std::size_t front_dim = 1, rest_dim = 1;
};

inline Split split_for(const SubsystemLayout &layout, const LabelSet &front) {
    Split s;
    for (auto l : front) {
        s.perm.push_back(layout.position(l));
        s.front_dim *= layout.dim(l);
    }
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (std::find(s.perm.begin(), s.perm.end(), i) == s.perm.end()) {
            s.perm.push_back(i);
            s.rest_dim *= layout.parts()[i].dim;
        }
    for (auto p : s.perm) s.permuted_dims.push_back(layout.parts()[p].dim);
    return s;
}

inline std::vector<std::size_t> inverse_perm(const std::vector<std::size_t> &perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

}  // namespace detail

/// Matrix M with M(a, r) = <a|<r|psi>, rows indexed by `front` labels.
inline CMatrix amplitude_matrix(const StateVector &s, const LabelSet &front) {
    detail::check_labels(s.layout(), front);
    const auto sp = detail::split_for(s.layout(), front);
    CVector v = permute_axes(s.amplitudes(), s.layout().dims(), sp.perm);
    // big-endian (front, rest): column-major (rest x front) view, transposed.
    Eigen::Map<CMatrix> m(v.data(), static_cast<Eigen::Index>(sp.rest_dim), static_cast<Eigen::Index>(sp.front_dim));
    return m.transpose();
}

// ---------------------------------------------------------------------------
// Reduced states

inline DensityOperator partial_trace(const DensityOperator &rho, const LabelSet &keep) {
    if (keep.empty()) throw ArgumentError("partial_trace: keep set is empty");
    detail::check_labels(rho.layout(), keep);
    const auto &layout = rho.layout();
    const SubsystemLayout kept = layout.subset(keep);
    LabelSet kept_ordered;
    for (const auto &p : kept.parts()) kept_ordered.push_back(p.label);
    const auto sp = detail::split_for(layout, kept_ordered);

    // full index for each (kept, traced) pair
    const auto dims = layout.dims();
    std::vector<std::size_t> stride(dims.size());
    std::size_t s = 1;
    for (std::size_t i = dims.size(); i-- > 0;) {
        stride[i] = s;
        s *= dims[i];
    }
    const auto kd = static_cast<Eigen::Index>(sp.front_dim);
    CMatrix out = CMatrix::Zero(kd, kd);
    std::vector<Eigen::Index> idx(sp.front_dim);
    for (std::size_t t = 0; t < sp.rest_dim; ++t) {
        for (std::size_t k = 0; k < sp.front_dim; ++k) {
            std::size_t combined = k * sp.rest_dim + t, full = 0;
            for (std::size_t a = sp.perm.size(); a-- > 0;) {
                full += (combined % sp.permuted_dims[a]) * stride[sp.perm[a]];
                combined /= sp.permuted_dims[a];
            }
            idx[k] = static_cast<Eigen::Index>(full);
        }
        out += rho.matrix()(idx, idx);
    }
    return {kept, out};
}

/// Reduced state of a pure state without forming the full density matrix.
inline DensityOperator reduced_state(const StateVector &s, const LabelSet &keep) {
    if (keep.empty()) throw ArgumentError("reduced_state: keep set is empty");
    const SubsystemLayout kept = s.layout().subset(keep);
    LabelSet ordered;
    for (const auto &p : kept.parts()) ordered.push_back(p.label);
    const CMatrix m = amplitude_matrix(s, ordered);
    return {kept, m * m.adjoint()};
}

// ---------------------------------------------------------------------------
// Entropies (bits)

inline double entropy_of_spectrum(const RVector &eigenvalues) {
    double h = 0.0;
    for (double x : eigenvalues) {
        if (x < tol::kPsdFloor) throw NumericError("negative eigenvalue " + std::to_string(x) + " in entropy");
        if (x > 0.0) h -= x * std::log2(x);
    }
    return std::max(h, 0.0);
}

inline double shannon_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log2(x);
    return h;
}

inline double von_neumann_entropy(const CMatrix &rho) {
    if (rho.rows() == 0) return 0.0;
    return entropy_of_spectrum(hermitian_eig(rho).eigenvalues());
}

inline double von_neumann_entropy(const DensityOperator &rho) { return von_neumann_entropy(rho.matrix()); }

namespace detail {
inline void check_disjoint(const LabelSet &a, const LabelSet &b) {
    for (auto x : a)
        if (std::find(b.begin(), b.end(), x) != b.end())
            throw ArgumentError("label sets overlap on " + to_string(x));
}
inline LabelSet join(LabelSet a, const LabelSet &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}
}  // namespace detail

/// S(a|b) = S(ab) - S(b). Empty b gives S(a).
inline double conditional_entropy(const DensityOperator &rho, const LabelSet &a, const LabelSet &b) {
    detail::check_disjoint(a, b);
    const double sab = von_neumann_entropy(partial_trace(rho, detail::join(a, b)));
    const double sb = b.empty() ? 0.0 : von_neumann_entropy(partial_trace(rho, b));
    return sab - sb;
}

inline double conditional_entropy(const StateVector &s, const LabelSet &a, const LabelSet &b) {
    detail::check_disjoint(a, b);
    const double sab = von_neumann_entropy(reduced_state(s, detail::join(a, b)));
    const double sb = b.empty() ? 0.0 : von_neumann_entropy(reduced_state(s, b));
    return sab - sb;
}

inline double mutual_information(const DensityOperator &rho, const LabelSet &a, const LabelSet &r) {
    detail::check_disjoint(a, r);
    return von_neumann_entropy(partial_trace(rho, a)) + von_neumann_entropy(partial_trace(rho, r)) -
           von_neumann_entropy(partial_trace(rho, detail::join(a, r)));
}

inline double mutual_information(const StateVector &s, const LabelSet &a, const LabelSet &r) {
    detail::check_disjoint(a, r);
    return von_neumann_entropy(reduced_state(s, a)) + von_neumann_entropy(reduced_state(s, r)) -
           von_neumann_entropy(reduced_state(s, detail::join(a, r)));
}

// ---------------------------------------------------------------------------
// Distances. trace_distance is the normalized T = ½||ρ-σ||₁; trace_norm_distance
// is the unnormalized ||ρ-σ||₁ used for ε-conditions of the form ||·||₁ ≤ ε.

inline double fidelity(const CMatrix &rho, const CMatrix &sigma) {
    const CMatrix prod = psd_sqrt(rho) * psd_sqrt(sigma);
    Eigen::JacobiSVD<CMatrix> svd(prod);
    return std::min(1.0, svd.singularValues().sum());
}

inline double trace_distance(const CMatrix &rho, const CMatrix &sigma) {
    const RVector ev = hermitian_eig(rho - sigma).eigenvalues();
    return std::min(1.0, 0.5 * ev.cwiseAbs().sum());
}

namespace detail {
inline void check_same_layout(const DensityOperator &a, const DensityOperator &b) {
    if (!(a.layout() == b.layout())) throw ArgumentError("operators on different layouts");
}
}  // namespace detail

inline double fidelity(const DensityOperator &rho, const DensityOperator &sigma) {
    detail::check_same_layout(rho, sigma);
    return fidelity(rho.matrix(), sigma.matrix());
}

inline double trace_distance(const DensityOperator &rho, const DensityOperator &sigma) {
    detail::check_same_layout(rho, sigma);
    return trace_distance(rho.matrix(), sigma.matrix());
}

inline double trace_norm_distance(const DensityOperator &rho, const DensityOperator &sigma) {
    return 2.0 * trace_distance(rho, sigma);
}

/// Pure-state shortcuts: F = |<φ|ψ>|, T = sqrt(1 - F²).
inline double fidelity(const StateVector &a, const StateVector &b) {
    return std::min(1.0, std::abs(a.inner(b)) / (a.norm() * b.norm()));
}

inline double trace_distance(const StateVector &a, const StateVector &b) {
    const double f = fidelity(a, b);
    return std::sqrt(std::max(0.0, 1.0 - f * f));
}

// ---------------------------------------------------------------------------
// Schmidt form across one part

struct SchmidtForm {
    std::vector<double> probabilities;  ///< p_k, descending
    CMatrix basis;                      ///< column k = |k> on the split part
    SubsystemLayout rest_layout;        ///< remaining parts, layout order
    CMatrix costates;                   ///< column k = |φ_k> on rest (zero when p_k = 0)

    /// Σ_k sqrt(p_k) |k>|φ_k>, with the split part moved to the front.
    CVector rebuild() const {
        CVector v = CVector::Zero(basis.rows() * costates.rows());
        for (Eigen::Index k = 0; k < basis.cols(); ++k)
            v += std::sqrt(probabilities[static_cast<std::size_t>(k)]) * kron(CVector(basis.col(k)), CVector(costates.col(k)));
        return v;
    }
};

/// Schmidt decomposition with respect to part `a`. When the reduced state on
/// `a` is already diagonal, the computational basis is kept (stable ordering
/// by descending probability) so degenerate spectra give the natural basis.
inline SchmidtForm schmidt_form(const StateVector &s, Label a) {
    const CMatrix m = amplitude_matrix(s, {a});  // rows: a, cols: rest
    const auto da = m.rows();
    const auto dr = m.cols();
    const CMatrix rho = m * m.adjoint();

    SchmidtForm out;
    LabelSet rest;
    for (const auto &p : s.layout().parts())
        if (p.label != a) rest.push_back(p.label);
    if (!rest.empty()) out.rest_layout = s.layout().subset(rest);
    out.basis = CMatrix::Zero(da, da);
    out.costates = CMatrix::Zero(dr, da);
    out.probabilities.assign(static_cast<std::size_t>(da), 0.0);

    const double off = (rho - CMatrix(rho.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
    if (off < 1e-12) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(da));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](auto i, auto j) { return rho(i, i).real() > rho(j, j).real(); });
        for (Eigen::Index k = 0; k < da; ++k) {
            const auto src = order[static_cast<std::size_t>(k)];
            const double p = std::max(0.0, rho(src, src).real());
            out.probabilities[static_cast<std::size_t>(k)] = p;
            out.basis(src, k) = 1.0;
            if (p > 1e-300) out.costates.col(k) = m.row(src).transpose() / std::sqrt(p);
        }
        return out;
    }

    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto &sv = svd.singularValues();
    out.basis = svd.matrixU();
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        out.probabilities[static_cast<std::size_t>(k)] = sv(k) * sv(k);
        if (sv(k) > 0) out.costates.col(k) = svd.matrixV().col(k).conjugate();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Operators

/// Z|k> = ω^{power·k}|k>, ω = e^{2πi/q}.
inline CMatrix z_operator(std::size_t q, std::int64_t power = 1) {
    CMatrix z = CMatrix::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    for (std::size_t k = 0; k < q; ++k) z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = root_of_unity(q, power * static_cast<std::int64_t>(k));
    return z;
}

/// X|k> = |k+power mod q>.
inline CMatrix x_operator(std::size_t q, std::int64_t power = 1) {
    CMatrix x = CMatrix::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    const auto qq = static_cast<std::int64_t>(q);
    for (std::int64_t k = 0; k < qq; ++k) x(((k + power) % qq + qq) % qq, k) = 1.0;
    return x;
}

/// F|x> = |x~> = q^{-1/2} Σ_k ω^{-k·x}|k>. Then X|x~> = ω^x|x~> and
/// Σ_k sqrt(p_k)|k>|k>|φ_k> = q^{-1/2} Σ_x |x~> Z^x(Σ_k sqrt(p_k)|k>|φ_k>).
inline CMatrix fourier(std::size_t q) {
    const auto d = static_cast<Eigen::Index>(q);
    CMatrix f(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index x = 0; x < d; ++x) f(k, x) = root_of_unity(q, -k * x) / std::sqrt(static_cast<double>(q));
    return f;
}

/// Digit-wise ⊗_i Z^{x_i} on L digits of radix q (diagonal).
inline CVector z_digits_diagonal(std::size_t q, const std::vector<std::size_t> &x) {
    const std::size_t dim = ipow(q, x.size());
    CVector d(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
        const auto kd = digits_of(k, q, x.size());
        std::int64_t dot = 0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += static_cast<std::int64_t>(kd[i] * x[i]);
        d(static_cast<Eigen::Index>(k)) = root_of_unity(q, dot);
    }
    return d;
}

/// ⊗^L F for L digits of radix q.
inline CMatrix fourier_digits(std::size_t q, std::size_t digits) {
    CMatrix f = CMatrix::Identity(1, 1);
    const CMatrix f1 = fourier(q);
    for (std::size_t i = 0; i < digits; ++i) f = kron(f, f1);
    return f;
}

/// Applies op to the target parts (in the given order); op dimension must
/// equal the product of the target dimensions.
inline StateVector apply_on(const StateVector &s, const CMatrix &op, const LabelSet &targets) {
    detail::check_labels(s.layout(), targets);
    const auto sp = detail::split_for(s.layout(), targets);
    if (op.rows() != static_cast<Eigen::Index>(sp.front_dim) || op.cols() != op.rows())
        throw ArgumentError("operator dimension " + std::to_string(op.rows()) + " does not match target dimension " +
                            std::to_string(sp.front_dim));
    CVector v = permute_axes(s.amplitudes(), s.layout().dims(), sp.perm);
    Eigen::Map<CMatrix> m(v.data(), static_cast<Eigen::Index>(sp.rest_dim), static_cast<Eigen::Index>(sp.front_dim));
    CMatrix applied = m * op.transpose();
    CVector w = Eigen::Map<CVector>(applied.data(), applied.size());
    return {s.layout(), permute_axes(w, sp.permuted_dims, detail::inverse_perm(sp.perm))};
}

/// Controlled phase |x>^control |k>^target -> ω^{±k·x} (digit-wise dot
/// product for grouped parts of dimension q^L). inverse selects ω^{-k·x}.
inline StateVector controlled_z(const StateVector &s, Label control, Label target, std::size_t q, bool inverse = false) {
    if (control == target) throw ArgumentError("controlled_z: control equals target");
    const std::size_t dc = s.layout().dim(control), dt = s.layout().dim(target);
    std::size_t lc = 0, lt = 0;
    for (std::size_t d = 1; d < dc; d *= q) ++lc;
    for (std::size_t d = 1; d < dt; d *= q) ++lt;
    if (ipow(q, lc) != dc || ipow(q, lt) != dt || lc != lt)
        throw ArgumentError("controlled_z: parts must both have dimension q^L");
    CMatrix phase = CMatrix::Zero(static_cast<Eigen::Index>(dc * dt), static_cast<Eigen::Index>(dc * dt));
    for (std::size_t x = 0; x < dc; ++x) {
        const auto xd = digits_of(x, q, lc);
        const CVector diag = z_digits_diagonal(q, xd);
        for (std::size_t k = 0; k < dt; ++k) {
            const auto i = static_cast<Eigen::Index>(x * dt + k);
            const Complex ph = diag(static_cast<Eigen::Index>(k));
            phase(i, i) = inverse ? std::conj(ph) : ph;
        }
    }
    return apply_on(s, phase, {control, target});
}

struct ProjectionResult {
    double probability = 0.0;
    std::optional<StateVector> state;  ///< empty when probability is zero
};

/// Applies a projector and renormalizes.
inline ProjectionResult project(const StateVector &s, const CMatrix &projector, const LabelSet &targets,
                                double zero_cutoff = 1e-300) {
    StateVector post = apply_on(s, projector, targets);
    ProjectionResult r;
    r.probability = post.amplitudes().squaredNorm();
    if (r.probability > zero_cutoff) r.state = post.normalized();
    return r;
}

// ---------------------------------------------------------------------------
// JSON form: {"layout": [["A",2],...], "amplitudes": [[re,im],...]}

inline nlohmann::json layout_to_json(const SubsystemLayout &l) {
    auto j = nlohmann::json::array();
    for (const auto &p : l.parts()) j.push_back({to_string(p.label), p.dim});
    return j;
}

inline SubsystemLayout layout_from_json(const nlohmann::json &j) {
    if (!j.is_array()) throw ArgumentError("layout must be an array of [label, dim] pairs");
    std::vector<Part> parts;
    for (const auto &e : j) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_unsigned())
            throw ArgumentError("layout entry must be [label, dim]");
        parts.push_back({label_from_string(e[0].get<std::string>()), e[1].get<std::size_t>()});
    }
    return SubsystemLayout(std::move(parts));
}

inline nlohmann::json amplitudes_to_json(const CVector &v) {
    auto a = nlohmann::json::array();
    for (const auto &z : v) a.push_back({z.real(), z.imag()});
    return a;
}

inline CVector amplitudes_from_json(const nlohmann::json &j) {
    if (!j.is_array()) throw ArgumentError("amplitudes must be an array of [re, im] pairs");
    CVector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto &e = j[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            throw ArgumentError("amplitude " + std::to_string(i) + " must be [re, im]");
        v(static_cast<Eigen::Index>(i)) = Complex(e[0].get<double>(), e[1].get<double>());
    }
    return v;
}

inline nlohmann::json to_json(const StateVector &s) {
    return {{"layout", layout_to_json(s.layout())}, {"amplitudes", amplitudes_to_json(s.amplitudes())}};
}

inline StateVector state_from_json(const nlohmann::json &j) {
    if (!j.is_object() || !j.contains("layout") || !j.contains("amplitudes"))
        throw ArgumentError("state requires 'layout' and 'amplitudes'");
    return {layout_from_json(j.at("layout")), amplitudes_from_json(j.at("amplitudes"))};
}

}  // namespace mergesim
