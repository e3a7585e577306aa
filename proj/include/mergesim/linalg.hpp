#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mergesim {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Bad input: unknown label, shape mismatch, violated precondition.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A computation would exceed the configured dimension/enumeration cap.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical input outside tolerance (non-PSD operator, bad normalization).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace tol {
inline constexpr double kNorm = 1e-10;
inline constexpr double kHermitian = 1e-10;
inline constexpr double kPsdFloor = -1e-10;
inline constexpr double kRank = 1e-10;
}  // namespace tol

inline std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    while (exp--) r *= base;
    return r;
}

/// Checked ipow: throws ResourceError if the result exceeds cap.
inline std::size_t ipow_capped(std::size_t base, std::size_t exp, std::size_t cap, const char *what) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (base != 0 && r > cap / base)
            throw ResourceError(std::string(what) + ": dimension " + std::to_string(base) + "^" +
                                std::to_string(exp) + " exceeds cap " + std::to_string(cap));
        r *= base;
    }
    if (r > cap)
        throw ResourceError(std::string(what) + ": dimension " + std::to_string(r) + " exceeds cap " +
                            std::to_string(cap));
    return r;
}

/// Big-endian mixed-radix digits of index (digit 0 most significant).
inline std::vector<std::size_t> digits_of(std::size_t index, std::size_t radix, std::size_t count) {
    std::vector<std::size_t> d(count);
    for (std::size_t i = count; i-- > 0;) {
        d[i] = index % radix;
        index /= radix;
    }
    return d;
}

inline std::size_t index_of(const std::vector<std::size_t> &digits, std::size_t radix) {
    std::size_t r = 0;
    for (auto d : digits) r = r * radix + d;
    return r;
}

inline Complex root_of_unity(std::size_t q, std::int64_t power) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(power) / static_cast<double>(q);
    return {std::cos(angle), std::sin(angle)};
}

inline CMatrix kron(const CMatrix &a, const CMatrix &b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline CVector kron(const CVector &a, const CVector &b) {
    CVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

inline double hermiticity_defect(const CMatrix &m) {
    if (m.size() == 0) return 0.0;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

/// Eigen-decomposition of the Hermitian part of m; eigenvalues ascending.
inline Eigen::SelfAdjointEigenSolver<CMatrix> hermitian_eig(const CMatrix &m) {
    const CMatrix h = 0.5 * (m + m.adjoint());
    return Eigen::SelfAdjointEigenSolver<CMatrix>(h);
}

/// Applies f to the spectrum of a Hermitian matrix.
template <typename F>
CMatrix hermitian_function(const CMatrix &m, F &&f) {
    if (m.rows() == 0) return m;
    auto es = hermitian_eig(m);
    RVector v = es.eigenvalues().unaryExpr(std::forward<F>(f));
    return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMatrix psd_sqrt(const CMatrix &m) {
    return hermitian_function(m, [](double x) { return x > 0 ? std::sqrt(x) : 0.0; });
}

/// Square root of the Moore-Penrose pseudo-inverse; eigenvalues below the
/// relative cutoff are treated as zero.
inline CMatrix psd_pinv_sqrt(const CMatrix &m, double rel_cutoff = 1e-11) {
    if (m.rows() == 0) return m;
    auto es = hermitian_eig(m);
    const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    RVector v = es.eigenvalues().unaryExpr(
        [&](double x) { return x > rel_cutoff * top ? 1.0 / std::sqrt(x) : 0.0; });
    return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().adjoint();
}

/// Orthonormal basis (columns) of the eigenspace with eigenvalue above cutoff.
inline CMatrix support_basis(const CMatrix &m, double cutoff = 1e-9) {
    auto es = hermitian_eig(m);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) > cutoff) keep.push_back(i);
    CMatrix out(m.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
    return out;
}

inline double min_eigenvalue(const CMatrix &m) {
    if (m.rows() == 0) return 0.0;
    return hermitian_eig(m).eigenvalues()(0);
}

inline double max_eigenvalue(const CMatrix &m) {
    if (m.rows() == 0) return 0.0;
    auto ev = hermitian_eig(m).eigenvalues();
    return ev(ev.size() - 1);
}

/// Permutes tensor axes of a vector with the given (big-endian) dims;
/// axis perm[i] of the input becomes axis i of the output.
inline CVector permute_axes(const CVector &v, const std::vector<std::size_t> &dims,
                            const std::vector<std::size_t> &perm) {
    const std::size_t k = dims.size();
    std::vector<std::size_t> in_stride(k), out_dims(k), out_stride(k);
    std::size_t s = 1;
    for (std::size_t i = k; i-- > 0;) {
        in_stride[i] = s;
        s *= dims[i];
    }
    for (std::size_t i = 0; i < k; ++i) out_dims[i] = dims[perm[i]];
    s = 1;
    for (std::size_t i = k; i-- > 0;) {
        out_stride[i] = s;
        s *= out_dims[i];
    }
    CVector out(v.size());
    std::vector<std::size_t> idx(k, 0);
    for (Eigen::Index o = 0; o < out.size(); ++o) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < k; ++i) src += idx[i] * in_stride[perm[i]];
        out(o) = v(static_cast<Eigen::Index>(src));
        for (std::size_t i = k; i-- > 0;) {
            if (++idx[i] < out_dims[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

}  // namespace mergesim
