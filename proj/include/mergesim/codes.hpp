#pragma once

// GF(2) linear algebra on packed bit matrices, random CSS codes and their
// syndrome projectors, and the linear 2-universal hash family over Z_q.

#include "mergesim/qstate.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mergesim {

using BitVector = std::vector<std::uint8_t>;

class Gf2Matrix {
public:
    Gf2Matrix() = default;
    Gf2Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), wpr_((cols + 63) / 64), words_(rows * wpr_, 0) {}

    static Gf2Matrix identity(std::size_t n) {
        Gf2Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
        return m;
    }

    /// Rows given as strings of '0'/'1'; all rows must have length cols.
    static Gf2Matrix from_strings(const std::vector<std::string> &rows, std::size_t cols) {
        Gf2Matrix m(rows.size(), cols);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != cols) throw ArgumentError("row " + std::to_string(r) + " has wrong length");
            for (std::size_t c = 0; c < cols; ++c) {
                if (rows[r][c] != '0' && rows[r][c] != '1') throw ArgumentError("row strings must be binary");
                m.set(r, c, rows[r][c] == '1');
            }
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool get(std::size_t r, std::size_t c) const { return (words_[r * wpr_ + c / 64] >> (c % 64)) & 1u; }
    void set(std::size_t r, std::size_t c, bool v) {
        auto &w = words_[r * wpr_ + c / 64];
        const std::uint64_t bit = std::uint64_t{1} << (c % 64);
        w = v ? (w | bit) : (w & ~bit);
    }

    void xor_row(std::size_t dst, std::size_t src) {
        for (std::size_t k = 0; k < wpr_; ++k) words_[dst * wpr_ + k] ^= words_[src * wpr_ + k];
    }
    void swap_rows(std::size_t a, std::size_t b) {
        for (std::size_t k = 0; k < wpr_; ++k) std::swap(words_[a * wpr_ + k], words_[b * wpr_ + k]);
    }

    BitVector row(std::size_t r) const {
        BitVector v(cols_);
        for (std::size_t c = 0; c < cols_; ++c) v[c] = get(r, c);
        return v;
    }

    void append_row(const BitVector &v) {
        if (v.size() != cols_) throw ArgumentError("append_row: length mismatch");
        words_.resize((rows_ + 1) * wpr_, 0);
        ++rows_;
        for (std::size_t c = 0; c < cols_; ++c) set(rows_ - 1, c, v[c]);
    }

    Gf2Matrix transpose() const {
        Gf2Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c)
                if (get(r, c)) t.set(c, r, true);
        return t;
    }

    Gf2Matrix operator*(const Gf2Matrix &o) const {
        if (cols_ != o.rows_) throw ArgumentError("GF(2) product: shape mismatch");
        Gf2Matrix out(rows_, o.cols_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = 0; k < cols_; ++k)
                if (get(r, k))
                    for (std::size_t w = 0; w < o.wpr_; ++w) out.words_[r * out.wpr_ + w] ^= o.words_[k * o.wpr_ + w];
        return out;
    }

    BitVector operator*(const BitVector &v) const {
        if (v.size() != cols_) throw ArgumentError("GF(2) matrix-vector: length mismatch");
        BitVector out(rows_, 0);
        for (std::size_t r = 0; r < rows_; ++r) {
            std::uint8_t acc = 0;
            for (std::size_t c = 0; c < cols_; ++c) acc ^= static_cast<std::uint8_t>(get(r, c) & (v[c] & 1u));
            out[r] = acc;
        }
        return out;
    }

    bool is_zero() const {
        return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
    }

    std::vector<std::string> to_strings() const {
        std::vector<std::string> out;
        for (std::size_t r = 0; r < rows_; ++r) {
            std::string s(cols_, '0');
            for (std::size_t c = 0; c < cols_; ++c)
                if (get(r, c)) s[c] = '1';
            out.push_back(std::move(s));
        }
        return out;
    }

    bool operator==(const Gf2Matrix &) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0, wpr_ = 0;
    std::vector<std::uint64_t> words_;
};

struct Gf2Rref {
    Gf2Matrix reduced;
    std::vector<std::size_t> pivots;  ///< pivot column of each nonzero row
};

inline Gf2Rref gf2_rref(Gf2Matrix m) {
    Gf2Rref out;
    std::size_t r = 0;
    for (std::size_t c = 0; c < m.cols() && r < m.rows(); ++c) {
        std::size_t p = r;
        while (p < m.rows() && !m.get(p, c)) ++p;
        if (p == m.rows()) continue;
        m.swap_rows(r, p);
        for (std::size_t i = 0; i < m.rows(); ++i)
            if (i != r && m.get(i, c)) m.xor_row(i, r);
        out.pivots.push_back(c);
        ++r;
    }
    out.reduced = std::move(m);
    return out;
}

inline std::size_t gf2_rank(const Gf2Matrix &m) { return gf2_rref(m).pivots.size(); }

/// Basis of {v : m v = 0} as the rows of the returned matrix.
inline Gf2Matrix gf2_nullspace(const Gf2Matrix &m) {
    const auto rr = gf2_rref(m);
    std::vector<bool> is_pivot(m.cols(), false);
    for (auto p : rr.pivots) is_pivot[p] = true;
    Gf2Matrix basis(0, m.cols());
    for (std::size_t f = 0; f < m.cols(); ++f) {
        if (is_pivot[f]) continue;
        BitVector v(m.cols(), 0);
        v[f] = 1;
        for (std::size_t i = 0; i < rr.pivots.size(); ++i)
            if (rr.reduced.get(i, f)) v[rr.pivots[i]] = 1;
        basis.append_row(v);
    }
    return basis;
}

/// One solution of m x = b, or nullopt when inconsistent.
inline std::optional<BitVector> gf2_solve(const Gf2Matrix &m, const BitVector &b) {
    if (b.size() != m.rows()) throw ArgumentError("gf2_solve: rhs length mismatch");
    Gf2Matrix aug(m.rows(), m.cols() + 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) aug.set(r, c, m.get(r, c));
        aug.set(r, m.cols(), b[r] & 1u);
    }
    const auto rr = gf2_rref(aug);
    if (!rr.pivots.empty() && rr.pivots.back() == m.cols()) return std::nullopt;
    BitVector x(m.cols(), 0);
    for (std::size_t i = 0; i < rr.pivots.size(); ++i) x[rr.pivots[i]] = rr.reduced.get(i, m.cols());
    return x;
}

// ---------------------------------------------------------------------------
// CSS codes

/// Bits of a basis index, big-endian (bit 0 is the first copy).
inline BitVector bits_of(std::size_t index, std::size_t n) {
    BitVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>((index >> (n - 1 - i)) & 1u);
    return v;
}

inline std::size_t index_of_bits(const BitVector &v) {
    std::size_t r = 0;
    for (auto b : v) r = (r << 1) | (b & 1u);
    return r;
}

struct CssCode {
    std::size_t n = 0;
    Gf2Matrix h_x;  ///< m_X x n, rows are X-type stabilizer supports
    Gf2Matrix h_z;  ///< m_Z x n, rows are Z-type stabilizer supports

    std::size_t m_x() const { return h_x.rows(); }
    std::size_t m_z() const { return h_z.rows(); }
    std::size_t logical_count() const { return n - m_x() - m_z(); }

    void validate() const {
        if (h_x.cols() != n || h_z.cols() != n) throw ArgumentError("CSS matrices must have n columns");
        if (m_x() + m_z() > n) throw ArgumentError("m_x + m_z exceeds n");
        if (gf2_rank(h_x) != m_x() || gf2_rank(h_z) != m_z()) throw ArgumentError("CSS matrices must be full rank");
        if (!(h_x * h_z.transpose()).is_zero()) throw ArgumentError("CSS constraint h_x h_z^T = 0 violated");
    }

    /// β = h_z k for the computational-basis string k.
    std::size_t z_syndrome(std::size_t k) const { return index_of_bits(h_z * bits_of(k, n)); }
    /// α = h_x x for the Fourier-basis string x.
    std::size_t x_syndrome(std::size_t x) const { return index_of_bits(h_x * bits_of(x, n)); }
};

namespace detail {
inline BitVector random_bits(std::mt19937_64 &rng, std::size_t n) {
    BitVector v(n);
    for (auto &b : v) b = static_cast<std::uint8_t>(rng() & 1u);
    return v;
}
}  // namespace detail

/// Uniform full-rank h_z, then h_x drawn row by row from the dual space
/// {v : h_z v = 0}; rows that would be dependent are redrawn.
inline CssCode sample_css(std::size_t n, std::size_t m_x, std::size_t m_z, std::uint64_t seed) {
    if (m_z > n || m_x > n - m_z)
        throw ArgumentError("sample_css: need m_x + m_z <= n (got n=" + std::to_string(n) + ", m_x=" +
                            std::to_string(m_x) + ", m_z=" + std::to_string(m_z) + ")");
    std::mt19937_64 rng(seed);
    CssCode code{n, Gf2Matrix(0, n), Gf2Matrix(0, n)};
    while (code.h_z.rows() < m_z) {
        Gf2Matrix trial = code.h_z;
        trial.append_row(detail::random_bits(rng, n));
        if (gf2_rank(trial) == trial.rows()) code.h_z = std::move(trial);
    }
    const Gf2Matrix dual = gf2_nullspace(code.h_z);
    while (code.h_x.rows() < m_x) {
        const BitVector coeff = detail::random_bits(rng, dual.rows());
        BitVector row(n, 0);
        for (std::size_t i = 0; i < dual.rows(); ++i)
            if (coeff[i])
                for (std::size_t c = 0; c < n; ++c) row[c] ^= static_cast<std::uint8_t>(dual.get(i, c));
        Gf2Matrix trial = code.h_x;
        trial.append_row(row);
        if (gf2_rank(trial) == trial.rows()) code.h_x = std::move(trial);
    }
    return code;
}

enum class StabilizerKind { Z, X };

/// Projector onto syndrome `syndrome` (as an integer of m bits, big-endian).
/// Z-kind is diagonal in the computational basis; X-kind is the same
/// construction for h_x conjugated by the n-fold Fourier transform.
inline CMatrix syndrome_projector(const CssCode &code, StabilizerKind kind, std::size_t syndrome) {
    const std::size_t m = kind == StabilizerKind::Z ? code.m_z() : code.m_x();
    if (syndrome >= (std::size_t{1} << m)) throw ArgumentError("syndrome does not fit in m bits");
    const std::size_t dim = std::size_t{1} << code.n;
    CVector mask = CVector::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t s = kind == StabilizerKind::Z ? code.z_syndrome(k) : code.x_syndrome(k);
        if (s == syndrome) mask(static_cast<Eigen::Index>(k)) = 1.0;
    }
    CMatrix diag = mask.asDiagonal();
    if (kind == StabilizerKind::Z) return diag;
    const CMatrix f = fourier_digits(2, code.n);
    return f * diag * f.adjoint();
}

/// Overload accepting the syndrome as bits; length must equal m.
inline CMatrix syndrome_projector(const CssCode &code, StabilizerKind kind, const BitVector &syndrome) {
    const std::size_t m = kind == StabilizerKind::Z ? code.m_z() : code.m_x();
    if (syndrome.size() != m)
        throw ArgumentError("syndrome length " + std::to_string(syndrome.size()) + " != " + std::to_string(m));
    return syndrome_projector(code, kind, index_of_bits(syndrome));
}

// ---------------------------------------------------------------------------
// Linear hash family f(x) = M x over Z_q

inline bool is_prime(std::size_t q) {
    if (q < 2) return false;
    for (std::size_t d = 2; d * d <= q; ++d)
        if (q % d == 0) return false;
    return true;
}

inline std::size_t next_prime(std::size_t at_least) {
    std::size_t q = std::max<std::size_t>(at_least, 2);
    while (!is_prime(q)) ++q;
    return q;
}

struct HashFunction {
    std::size_t n = 0, m = 0, q = 2;
    std::vector<std::vector<std::size_t>> rows;  ///< m rows of n residues

    std::vector<std::size_t> apply(const std::vector<std::size_t> &x) const {
        if (x.size() != n) throw ArgumentError("hash input length mismatch");
        std::vector<std::size_t> out(m, 0);
        for (std::size_t r = 0; r < m; ++r) {
            std::size_t acc = 0;
            for (std::size_t c = 0; c < n; ++c) acc = (acc + rows[r][c] * (x[c] % q)) % q;
            out[r] = acc;
        }
        return out;
    }

    /// Syndrome of the base-q index k as an integer in [0, q^m).
    std::size_t apply_index(std::size_t k) const { return index_of(apply(digits_of(k, q, n)), q); }
    std::size_t syndrome_count() const { return ipow(q, m); }
};

inline HashFunction hash_from_rows(std::size_t n, std::size_t q, std::vector<std::vector<std::size_t>> rows) {
    if (!is_prime(q)) throw ArgumentError("hash modulus " + std::to_string(q) + " is not prime");
    for (const auto &r : rows)
        if (r.size() != n) throw ArgumentError("hash row length mismatch");
    HashFunction f{n, rows.size(), q, std::move(rows)};
    for (auto &r : f.rows)
        for (auto &e : r) e %= q;
    return f;
}

/// Uniform m x n matrix over Z_q. Rows are drawn in order from one seeded
/// stream, so the first m rows for a seed equal sample_hash(n, m, q, seed)
/// for every larger m (nested side information).
inline HashFunction sample_hash(std::size_t n, std::size_t m, std::size_t q, std::uint64_t seed) {
    if (!is_prime(q)) throw ArgumentError("hash modulus " + std::to_string(q) + " is not prime");
    if (m > n) throw ArgumentError("sample_hash: m > n");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> digit(0, q - 1);
    HashFunction f{n, m, q, {}};
    for (std::size_t r = 0; r < m; ++r) {
        std::vector<std::size_t> row(n);
        for (auto &e : row) e = digit(rng);
        f.rows.push_back(std::move(row));
    }
    return f;
}

/// Σ_{k: f(k)=t} |k><k| on q^n.
inline CMatrix hash_projector(const HashFunction &f, std::size_t syndrome) {
    const std::size_t dim = ipow(f.q, f.n);
    CVector mask = CVector::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k)
        if (f.apply_index(k) == syndrome) mask(static_cast<Eigen::Index>(k)) = 1.0;
    return mask.asDiagonal();
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CssCode &c) {
    return {{"n", c.n}, {"h_x", c.h_x.to_strings()}, {"h_z", c.h_z.to_strings()}};
}

inline CssCode css_from_json(const nlohmann::json &j) {
    CssCode c;
    c.n = j.at("n").get<std::size_t>();
    c.h_x = Gf2Matrix::from_strings(j.at("h_x").get<std::vector<std::string>>(), c.n);
    c.h_z = Gf2Matrix::from_strings(j.at("h_z").get<std::vector<std::string>>(), c.n);
    c.validate();
    return c;
}

inline nlohmann::json to_json(const HashFunction &f) {
    return {{"n", f.n}, {"m", f.m}, {"q", f.q}, {"rows", f.rows}};
}

inline HashFunction hash_from_json(const nlohmann::json &j) {
    return hash_from_rows(j.at("n").get<std::size_t>(), j.at("q").get<std::size_t>(),
                          j.at("rows").get<std::vector<std::vector<std::size_t>>>());
}

}  // namespace mergesim
