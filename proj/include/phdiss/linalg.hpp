/*
 Copyright 2026 The phdiss Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef PHDISS_LINALG_HPP
#define PHDISS_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "phdiss/errors.hpp"

namespace phdiss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Shortest round-trip decimal text of v.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_size(const Vector& v, Eigen::Index n, const char* what) {
    if (v.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dimension " + std::to_string(v.size()) +
                                                      ", expected " + std::to_string(n));
    }
}

/// Dense LU with partial pivoting plus the smallest pivot magnitude, which is
/// what singularity checks are phrased in.
class LuFactorization {
public:
    LuFactorization() = default;
    explicit LuFactorization(const Matrix& a) : lu_(a) {
        const auto diag = lu_.matrixLU().diagonal();
        min_pivot_ = diag.size() == 0 ? 0.0 : diag.cwiseAbs().minCoeff();
    }

    double min_pivot() const noexcept { return min_pivot_; }
    Vector solve(const Vector& b) const { return lu_.solve(b); }
    Matrix solve(const Matrix& b) const { return lu_.solve(b); }
    Matrix inverse() const { return lu_.inverse(); }

private:
    Eigen::PartialPivLU<Matrix> lu_;
    double min_pivot_ = 0.0;
};

/// Symmetric PSD square root through an eigendecomposition. Eigenvalues in
/// [-neg_tol, 0) are clamped to zero; anything below -neg_tol is reported.
/// Eigenvalues at rounding level relative to the largest one are zeroed so
/// that exact kernels of R stay exact kernels of the root.
inline Matrix psd_square_root(const Matrix& r, double neg_tol = 1e-10) {
    if (r.rows() != r.cols()) throw Error(ErrorCode::DimensionMismatch, "square root of a non-square matrix");
    if (r.size() == 0) return r;
    const Matrix sym = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    Vector lambda = eig.eigenvalues();
    if (lambda.minCoeff() < -neg_tol) {
        throw Error(ErrorCode::NonPSDR, "matrix has eigenvalue " + std::to_string(lambda.minCoeff()));
    }
    const double noise = 16.0 * static_cast<double>(r.rows()) * std::numeric_limits<double>::epsilon() *
                         lambda.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = lambda(i) <= noise ? 0.0 : std::sqrt(lambda(i));
    return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

inline double min_symmetric_eigenvalue(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// Orthonormal basis of the row space of g (columns of the result), using
/// singular values above rel_tol * sigma_max.
inline Matrix row_space_basis(const Matrix& g, double rel_tol = 1e-10) {
    if (g.size() == 0) return Matrix(g.cols(), 0);
    Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? rel_tol * s(0) : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) ++rank;
    }
    return svd.matrixV().leftCols(rank);
}

/// Smallest singular value that exceeds rel_tol * sigma_max (0 for a zero matrix).
inline double smallest_nonzero_singular_value(const Matrix& g, double rel_tol = 1e-10) {
    if (g.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(g);
    const Vector& s = svd.singularValues();
    double best = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0) && s(i) > 0.0) best = s(i);
    }
    return best;
}

/// Central-difference Jacobian of a vector map.
template <class F>
Matrix numerical_jacobian(F&& f, const Vector& x, double rel_step = 1e-6) {
    const Vector f0 = f(x);
    Matrix jac(f0.size(), x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = rel_step * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + step;
        const Vector fp = f(xp);
        xp(i) = x(i) - step;
        const Vector fm = f(xp);
        xp(i) = x(i);
        jac.col(i) = (fp - fm) / (2.0 * step);
    }
    return jac;
}

}  // namespace phdiss

#endif  // PHDISS_LINALG_HPP
