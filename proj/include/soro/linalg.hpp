#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace soro {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

template <int D>
using Veci = Eigen::Matrix<int, D, 1>;

template <int D>
using VecList = std::vector<Vec<D>, Eigen::aligned_allocator<Vec<D>>>;

template <int D>
using MatList = std::vector<Mat<D>, Eigen::aligned_allocator<Mat<D>>>;

/// Deviatoric part, dev(A) = A - tr(A)/D I.
template <typename Derived>
auto dev(const Eigen::MatrixBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    constexpr int D = Derived::RowsAtCompileTime;
    Eigen::Matrix<Scalar, D, D> out = a;
    const Scalar mean = a.trace() / Scalar(D);
    for (int i = 0; i < D; ++i) out(i, i) -= mean;
    return out;
}

/// Frobenius inner product A : B.
template <typename A, typename B>
auto ddot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    return a.cwiseProduct(b).sum();
}

/// Determinant and inverse written out for D = 2, 3 so that they work for any
/// scalar type (including Eigen::AutoDiffScalar).
template <typename Scalar, int D>
Scalar det(const Eigen::Matrix<Scalar, D, D>& m) {
    static_assert(D == 2 || D == 3);
    if constexpr (D == 2) {
        return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    } else {
        return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
               m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
               m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    }
}

template <typename Scalar, int D>
Eigen::Matrix<Scalar, D, D> inverse(const Eigen::Matrix<Scalar, D, D>& m) {
    static_assert(D == 2 || D == 3);
    Eigen::Matrix<Scalar, D, D> out;
    const Scalar inv_det = Scalar(1) / det(m);
    if constexpr (D == 2) {
        out(0, 0) = m(1, 1) * inv_det;
        out(0, 1) = -m(0, 1) * inv_det;
        out(1, 0) = -m(1, 0) * inv_det;
        out(1, 1) = m(0, 0) * inv_det;
    } else {
        out(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) * inv_det;
        out(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) * inv_det;
        out(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) * inv_det;
        out(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) * inv_det;
        out(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) * inv_det;
        out(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) * inv_det;
        out(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) * inv_det;
        out(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) * inv_det;
        out(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) * inv_det;
    }
    return out;
}

inline bool all_finite(double v) { return std::isfinite(v); }

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace soro
