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
#ifndef PHDISS_REGISTRY_HPP
#define PHDISS_REGISTRY_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phdiss/dissipativity.hpp"

namespace phdiss {

/// A built-in system with its default problem and manifold description.
struct RegisteredProblem {
    std::string name;
    std::string description;
    OCProblem problem;
    ManifoldSpec manifold;
    Vector sampling_lo;
    Vector sampling_hi;
    std::vector<std::pair<std::string, double>> checks;  // load-time consistency checks, max error each
};

namespace detail {

inline MatrixField expression_field(Eigen::Index rows, Eigen::Index cols, const std::vector<std::string>& entries, int n) {
    std::vector<Expression> e;
    e.reserve(entries.size());
    for (const std::string& s : entries) e.push_back(parse_expression(s, n));
    return MatrixField(rows, cols, std::move(e), n);
}

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) out(i++) = d;
    return out;
}

inline Matrix mat(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> v) {
    Matrix out(rows, cols);
    auto it = v.begin();
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = *it++;
    return out;
}

inline void require_check(const std::string& what, double err, double tol) {
    if (!(err <= tol)) {
        throw Error(ErrorCode::InvalidArgument, "registry check '" + what + "' failed with error " + format_double(err));
    }
}

/// Three-state stand-in with Q = I and a rank-one R chosen so that
/// R^{1/2} Q J-^{-1} has row space span{a}, a = [1, -1, 1], at h = 1.
/// With v = a + J a / 2 and R = v v' / |v|^2 one gets J-' a = (3/2) v / |v|^2 + v,
/// hence a' J-^{-1} is parallel to v' and the kernel is {a'x = 0}.
inline RegisteredProblem example1_standin() {
    const Vector a = vec({1.0, -1.0, 1.0});
    const Matrix j = mat(3, 3, {0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0});
    const Vector v = a + 0.5 * j * a;
    const Matrix r = v * v.transpose() / v.squaredNorm();
    PHSystem sys("example1_standin", j, r, Matrix::Identity(3, 3), vec({0.0, 0.0, 1.0}));
    RegisteredProblem p;
    p.name = sys.name();
    p.description = "3-state linear stand-in, manifold x1 - x2 + x3 = 0";
    const Matrix k = manifold_operator(sys, 1.0);
    const Vector ahat = a / a.norm();
    const double kernel_err = (k - k * ahat * ahat.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, max_abs(k));
    require_check("kernel of R^{1/2} Q J-^{-1} is a'x = 0", kernel_err, 1e-10);
    p.checks.emplace_back("kernel", kernel_err);
    p.problem = OCProblem::make(sys, SchemeKind::DDR, 40, vec({1.0, 1.0, 1.0}), vec({-1.2, -0.7, -1.0}));
    p.manifold = ManifoldSpec::linear(a.transpose(), sys, 1.0);
    p.sampling_lo = Vector::Constant(3, -3.0);
    p.sampling_hi = Vector::Constant(3, 3.0);
    return p;
}

/// Two-state nonlinear system with J = [[0, 1], [-1, 0]],
/// R = diag((4|x|^2 + 1)^2 / 4, 0), Q = diag(2, 1), B = [1, 0]'. At h = 1 this
/// gives J-(x) = [[1 + (4|x|^2 + 1)^2 / 4, -1/2], [1, 1]] and
/// R^{1/2} Q J-^{-1} x = (8|x|^2 + 2) / (16|x|^4 + 8|x|^2 + 7) [2 x1 + x2, 0]'.
inline RegisteredProblem example2() {
    const MatrixField j(mat(2, 2, {0.0, 1.0, -1.0, 0.0}));
    const MatrixField r = expression_field(2, 2, {"(4*norm2(x)+1)^2/4", "0", "0", "0"}, 2);
    PHSystem sys("example2", j, r, mat(2, 2, {2.0, 0.0, 0.0, 1.0}), vec({1.0, 0.0}));
    RegisteredProblem p;
    p.name = sys.name();
    p.description = "2-state nonlinear system, manifold 2 x1 + x2 = 0";
    const Expression jm11 = parse_expression("1+0.25*(4*norm2(x)+1)^2", 2);
    double jm_err = 0.0, g_err = 0.0;
    for (int i = 0; i <= 12; ++i) {
        for (int l = 0; l <= 12; ++l) {
            const Vector x = vec({-3.0 + 0.5 * i, -3.0 + 0.5 * l});
            const StructurePair pair = structure_pair(sys, x, 1.0);
            const double j11 = jm11.evaluate(std::span<const double>(x.data(), 2));
            const Matrix jm_ref = mat(2, 2, {j11, -0.5, 1.0, 1.0});
            jm_err = std::max(jm_err, (pair.jminus - jm_ref).cwiseAbs().maxCoeff() / (1.0 + j11));
            const double rr = x.squaredNorm();
            const double scale = (8.0 * rr + 2.0) / (16.0 * rr * rr + 8.0 * rr + 7.0);
            const Vector g_ref = vec({scale * (2.0 * x(0) + x(1)), 0.0});
            g_err = std::max(g_err, (manifold_residual(sys, x, 1.0) - g_ref).norm());
        }
    }
    require_check("J- closed form", jm_err, 1e-8);
    require_check("manifold residual closed form", g_err, 1e-8);
    p.checks.emplace_back("jminus", jm_err);
    p.checks.emplace_back("residual", g_err);
    p.problem = OCProblem::make(sys, SchemeKind::DDR, 60, vec({2.0, 1.0}), vec({1.0, 1.0}));
    p.manifold = ManifoldSpec::linear(mat(1, 2, {2.0, 1.0}), sys, 1.0);
    p.sampling_lo = Vector::Constant(2, -3.0);
    p.sampling_hi = Vector::Constant(2, 3.0);
    return p;
}

/// dx/dt = -x + u with H = x^2 / 2; the manifold is {0}.
inline RegisteredProblem scalar_damper() {
    PHSystem sys("scalar_damper", Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    RegisteredProblem p;
    p.name = sys.name();
    p.description = "1-state damper J = 0, R = Q = B = 1";
    p.problem = OCProblem::make(sys, SchemeKind::Midpoint, 1, vec({1.0}), vec({-1.0}));
    p.manifold = ManifoldSpec::linear(Matrix::Ones(1, 1), sys, 1.0);
    p.sampling_lo = Vector::Constant(1, -3.0);
    p.sampling_hi = Vector::Constant(1, 3.0);
    return p;
}

/// Lossless rotation, R = 0; every state is on the manifold.
inline RegisteredProblem rotation() {
    PHSystem sys("rotation", mat(2, 2, {0.0, 1.0, -1.0, 0.0}), Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                 vec({0.0, 1.0}));
    RegisteredProblem p;
    p.name = sys.name();
    p.description = "2-state conservative rotation";
    p.problem = OCProblem::make(sys, SchemeKind::DDR, 10, vec({1.0, 0.0}), vec({0.0, 1.0}));
    p.manifold = ManifoldSpec::residual(sys, 1.0);
    p.sampling_lo = Vector::Constant(2, -3.0);
    p.sampling_hi = Vector::Constant(2, 3.0);
    return p;
}

/// Oscillator with state-dependent interconnection and damping on x2.
inline RegisteredProblem nonlinear_oscillator() {
    const MatrixField j = expression_field(2, 2, {"0", "1+0.5*x1^2", "-(1+0.5*x1^2)", "0"}, 2);
    const MatrixField r = expression_field(2, 2, {"0", "0", "0", "0.2+0.1*norm2(x)"}, 2);
    PHSystem sys("nonlinear_oscillator", j, r, mat(2, 2, {1.0, 0.0, 0.0, 2.0}), vec({0.0, 1.0}));
    RegisteredProblem p;
    p.name = sys.name();
    p.description = "2-state oscillator with state-dependent J and R";
    p.problem = OCProblem::make(sys, SchemeKind::DDR, 20, vec({1.0, 0.0}), vec({0.0, 0.0}));
    p.manifold = ManifoldSpec::residual(sys, 1.0);
    p.sampling_lo = Vector::Constant(2, -2.0);
    p.sampling_hi = Vector::Constant(2, 2.0);
    return p;
}

}  // namespace detail

inline std::vector<std::string> registry_names() {
    return {"example1_standin", "example2", "nonlinear_oscillator", "rotation", "scalar_damper"};
}

inline RegisteredProblem registry_problem(std::string_view name) {
    if (name == "example1_standin") return detail::example1_standin();
    if (name == "example2") return detail::example2();
    if (name == "scalar_damper") return detail::scalar_damper();
    if (name == "rotation") return detail::rotation();
    if (name == "nonlinear_oscillator") return detail::nonlinear_oscillator();
    throw Error(ErrorCode::UnknownIdentifier, "unknown registry system '" + std::string(name) + "'");
}

inline PHSystem registry_system(std::string_view name) { return registry_problem(name).problem.sys; }

}  // namespace phdiss

#endif  // PHDISS_REGISTRY_HPP
