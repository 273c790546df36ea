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
#ifndef PHDISS_SYSTEM_HPP
#define PHDISS_SYSTEM_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "phdiss/expression.hpp"
#include "phdiss/linalg.hpp"

namespace phdiss {

/// A matrix whose entries are either constants or expressions in the state.
/// Partial derivatives of expression entries are formed symbolically once.
class MatrixField {
public:
    MatrixField() = default;

    explicit MatrixField(Matrix constant) : rows_(constant.rows()), cols_(constant.cols()), constant_(std::move(constant)) {}

    /// Row-major expression entries over a state of dimension n_state.
    MatrixField(Eigen::Index rows, Eigen::Index cols, std::vector<Expression> entries, int n_state)
        : rows_(rows), cols_(cols), n_state_(n_state), entries_(std::move(entries)) {
        if (static_cast<Eigen::Index>(entries_.size()) != rows_ * cols_) {
            throw Error(ErrorCode::DimensionMismatch, "matrix field entry count does not match its shape");
        }
        bool all_constant = true;
        for (const Expression& e : entries_) {
            if (e.max_variable() >= n_state_) {
                throw Error(ErrorCode::UnknownIdentifier, "entry '" + e.to_string() + "' references a variable beyond x" +
                                                              std::to_string(n_state_));
            }
            all_constant = all_constant && e.is_constant();
        }
        if (all_constant) {
            constant_ = Matrix(rows_, cols_);
            const std::vector<double> none;
            for (Eigen::Index r = 0; r < rows_; ++r)
                for (Eigen::Index c = 0; c < cols_; ++c) constant_(r, c) = entries_[idx(r, c)].evaluate(none);
            entries_.clear();
            return;
        }
        partials_.resize(static_cast<std::size_t>(n_state_));
        for (int i = 0; i < n_state_; ++i) {
            partials_[static_cast<std::size_t>(i)].reserve(entries_.size());
            for (const Expression& e : entries_) partials_[static_cast<std::size_t>(i)].push_back(e.derivative(i));
        }
    }

    Eigen::Index rows() const noexcept { return rows_; }
    Eigen::Index cols() const noexcept { return cols_; }
    bool is_constant() const noexcept { return entries_.empty(); }

    Matrix operator()(const Vector& x) const {
        if (is_constant()) return constant_;
        return evaluate(entries_, x);
    }

    /// d/dx_i of the field at x.
    Matrix partial(const Vector& x, int i) const {
        if (is_constant()) return Matrix::Zero(rows_, cols_);
        return evaluate(partials_.at(static_cast<std::size_t>(i)), x);
    }

    /// Entry as an expression (constants are wrapped).
    Expression entry(Eigen::Index r, Eigen::Index c) const {
        if (is_constant()) return Expression::constant(constant_(r, c));
        return entries_[idx(r, c)];
    }

    const Matrix& constant_value() const { return constant_; }

private:
    std::size_t idx(Eigen::Index r, Eigen::Index c) const { return static_cast<std::size_t>(r * cols_ + c); }

    Matrix evaluate(const std::vector<Expression>& entries, const Vector& x) const {
        Matrix out(rows_, cols_);
        const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        for (Eigen::Index r = 0; r < rows_; ++r)
            for (Eigen::Index c = 0; c < cols_; ++c) out(r, c) = entries[idx(r, c)].evaluate(xs);
        return out;
    }

    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    int n_state_ = 0;
    Matrix constant_;
    std::vector<Expression> entries_;
    std::vector<std::vector<Expression>> partials_;
};

/// Port-Hamiltonian system x' = (J(x) - R(x)) Q x + B u with H(x) = 1/2 x'Qx.
class PHSystem {
public:
    PHSystem() = default;

    PHSystem(std::string name, MatrixField j, MatrixField r, Matrix q, Matrix b)
        : name_(std::move(name)), j_(std::move(j)), r_(std::move(r)), q_(std::move(q)), b_(std::move(b)) {
        const Eigen::Index n = q_.rows();
        auto bad = [&](const std::string& what) {
            throw Error(ErrorCode::DimensionMismatch, "system '" + name_ + "': " + what);
        };
        if (n == 0) bad("empty state");
        if (q_.cols() != n) bad("Q must be n x n");
        if (j_.rows() != n || j_.cols() != n) bad("J must be n x n");
        if (r_.rows() != n || r_.cols() != n) bad("R must be n x n");
        if (b_.rows() != n || b_.cols() == 0) bad("B must be n x m with m >= 1");
    }

    PHSystem(std::string name, Matrix j, Matrix r, Matrix q, Matrix b)
        : PHSystem(std::move(name), MatrixField(std::move(j)), MatrixField(std::move(r)), std::move(q), std::move(b)) {}

    const std::string& name() const noexcept { return name_; }
    int n() const noexcept { return static_cast<int>(q_.rows()); }
    int m() const noexcept { return static_cast<int>(b_.cols()); }
    const MatrixField& j_field() const noexcept { return j_; }
    const MatrixField& r_field() const noexcept { return r_; }
    const Matrix& Q() const noexcept { return q_; }
    const Matrix& B() const noexcept { return b_; }
    bool is_linear() const noexcept { return j_.is_constant() && r_.is_constant(); }

    Matrix J(const Vector& x) const { return j_(x); }
    Matrix R(const Vector& x) const { return r_(x); }

    /// d/dx_i of J(x) - R(x).
    Matrix structure_partial(const Vector& x, int i) const { return j_.partial(x, i) - r_.partial(x, i); }

private:
    std::string name_;
    MatrixField j_;
    MatrixField r_;
    Matrix q_;
    Matrix b_;
};

/// Stored-energy function: quadratic in a constant Q, or a parsed scalar
/// expression with symbolic gradient and Hessian.
class HamiltonianSpec {
public:
    static HamiltonianSpec quadratic(Matrix q) {
        HamiltonianSpec s;
        s.n_ = static_cast<int>(q.rows());
        s.q_ = std::move(q);
        return s;
    }

    static HamiltonianSpec expression(Expression h, int n) {
        if (h.max_variable() >= n) {
            throw Error(ErrorCode::UnknownIdentifier, "Hamiltonian references a variable beyond x" + std::to_string(n));
        }
        HamiltonianSpec s;
        s.n_ = n;
        s.expr_ = std::move(h);
        s.gradient_.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) s.gradient_.push_back(s.expr_->derivative(i));
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) s.hessian_.push_back(s.gradient_[static_cast<std::size_t>(i)].derivative(k));
        return s;
    }

    bool is_quadratic() const noexcept { return !expr_.has_value(); }
    bool has_gradient() const noexcept { return true; }
    int n() const noexcept { return n_; }
    const Matrix& Q() const { return q_; }

    double value(const Vector& x) const {
        require_size(x, n_, "state");
        if (is_quadratic()) return 0.5 * x.dot(q_ * x);
        return expr_->evaluate(span(x));
    }

    Vector gradient(const Vector& x) const {
        require_size(x, n_, "state");
        if (is_quadratic()) return q_ * x;
        Vector g(n_);
        for (int i = 0; i < n_; ++i) g(i) = gradient_[static_cast<std::size_t>(i)].evaluate(span(x));
        return g;
    }

    Matrix hessian(const Vector& x) const {
        require_size(x, n_, "state");
        if (is_quadratic()) return q_;
        Matrix h(n_, n_);
        for (int i = 0; i < n_; ++i)
            for (int k = 0; k < n_; ++k) h(i, k) = hessian_[static_cast<std::size_t>(i * n_ + k)].evaluate(span(x));
        return h;
    }

private:
    static std::span<const double> span(const Vector& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }

    int n_ = 0;
    Matrix q_;
    std::optional<Expression> expr_;
    std::vector<Expression> gradient_;
    std::vector<Expression> hessian_;
};

inline double hamiltonian(const HamiltonianSpec& spec, const Vector& x) { return spec.value(x); }

inline double hamiltonian(const PHSystem& sys, const Vector& x) {
    require_size(x, sys.n(), "state");
    return 0.5 * x.dot(sys.Q() * x);
}

namespace detail {

/// Gauss-Legendre rule of order N on [0, 1], computed once by Newton
/// iteration on the Legendre polynomial.
template <int N>
struct GaussLegendre {
    std::array<double, N> nodes{};
    std::array<double, N> weights{};

    GaussLegendre() {
        constexpr double pi = 3.14159265358979323846;
        for (int i = 0; i < (N + 1) / 2; ++i) {
            double z = std::cos(pi * (i + 0.75) / (N + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 1; j <= N; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
                }
                dp = N * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            const double w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
            nodes[static_cast<std::size_t>(N - 1 - i)] = 0.5 * (1.0 + z);
            weights[static_cast<std::size_t>(i)] = 0.5 * w;
            weights[static_cast<std::size_t>(N - 1 - i)] = 0.5 * w;
        }
    }

    static const GaussLegendre& instance() {
        static const GaussLegendre rule;
        return rule;
    }
};

inline constexpr int kQuadratureOrder = 10;

}  // namespace detail

/// Discrete gradient between v and w. Closed form 1/2 Q (v + w) for quadratic
/// H; mean-value integral of grad H along the segment otherwise. The secant
/// identity (w - v)' dg = H(w) - H(v) is checked on every call.
inline Vector discrete_gradient(const HamiltonianSpec& spec, const Vector& v, const Vector& w) {
    require_size(v, spec.n(), "v");
    require_size(w, spec.n(), "w");
    if (spec.is_quadratic()) return 0.5 * spec.Q() * (v + w);
    const auto& rule = detail::GaussLegendre<detail::kQuadratureOrder>::instance();
    Vector acc = Vector::Zero(spec.n());
    const Vector d = w - v;
    for (int i = 0; i < detail::kQuadratureOrder; ++i) {
        acc += rule.weights[static_cast<std::size_t>(i)] * spec.gradient(v + rule.nodes[static_cast<std::size_t>(i)] * d);
    }
    const double hv = spec.value(v), hw = spec.value(w);
    const double secant = std::abs(d.dot(acc) - (hw - hv));
    if (secant > 1e-8 * (1.0 + std::abs(hv) + std::abs(hw))) {
        throw Error(ErrorCode::QuadratureFailure,
                    "secant identity residual " + std::to_string(secant) + " exceeds tolerance");
    }
    return acc;
}

/// d/dw of the discrete gradient: integral of s * Hess H(v + s (w - v)).
inline Matrix discrete_gradient_jacobian_w(const HamiltonianSpec& spec, const Vector& v, const Vector& w) {
    if (spec.is_quadratic()) return 0.5 * spec.Q();
    const auto& rule = detail::GaussLegendre<detail::kQuadratureOrder>::instance();
    Matrix acc = Matrix::Zero(spec.n(), spec.n());
    const Vector d = w - v;
    for (int i = 0; i < detail::kQuadratureOrder; ++i) {
        const double s = rule.nodes[static_cast<std::size_t>(i)];
        acc += rule.weights[static_cast<std::size_t>(i)] * s * spec.hessian(v + s * d);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Validation

struct SampleCheck {
    std::size_t index = 0;
    Vector x;
    double j_skew_defect = 0.0;
    double r_sym_defect = 0.0;
    double r_min_eigenvalue = 0.0;
    bool ok = true;
};

struct ValidationReport {
    double q_sym_defect = 0.0;
    double q_min_eigenvalue = 0.0;
    std::vector<SampleCheck> samples;
    std::optional<Error> failure;

    bool passed() const noexcept { return !failure.has_value(); }
    void throw_if_failed() const {
        if (failure) throw *failure;
    }
};

inline constexpr double kSkewTolerance = 1e-12;
inline constexpr double kPsdTolerance = 1e-10;

inline std::string describe_state(const Vector& x) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(x(i));
    }
    return s + "]";
}

/// Checks skew-symmetry of J, symmetry and PSD-ness of R at every sample and
/// positive definiteness of Q. The first violation is kept in `failure`.
inline ValidationReport validate_system(const PHSystem& sys, std::span<const Vector> samples) {
    if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "validation needs at least one sample state");
    ValidationReport rep;
    const Matrix& q = sys.Q();
    rep.q_sym_defect = max_abs(q - q.transpose());
    rep.q_min_eigenvalue = min_symmetric_eigenvalue(q);
    if (rep.q_sym_defect > kSkewTolerance * (1.0 + max_abs(q)) || !(rep.q_min_eigenvalue > 0.0)) {
        rep.failure = Error(ErrorCode::NonPDQ, "Q is not symmetric positive definite (smallest eigenvalue " +
                                                   std::to_string(rep.q_min_eigenvalue) + ")");
    }
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const Vector& x = samples[k];
        require_size(x, sys.n(), "validation sample");
        SampleCheck c;
        c.index = k;
        c.x = x;
        const Matrix j = sys.J(x);
        const Matrix r = sys.R(x);
        c.j_skew_defect = max_abs(j + j.transpose());
        c.r_sym_defect = max_abs(r - r.transpose());
        c.r_min_eigenvalue = min_symmetric_eigenvalue(r);
        const bool j_ok = c.j_skew_defect <= kSkewTolerance * (1.0 + max_abs(j));
        const bool r_ok = c.r_sym_defect <= kSkewTolerance * (1.0 + max_abs(r)) && c.r_min_eigenvalue >= -kPsdTolerance;
        c.ok = j_ok && r_ok;
        if (!rep.failure && !j_ok) {
            rep.failure = Error(ErrorCode::NonSkewJ, "J is not skew-symmetric at sample " + std::to_string(k) + " x = " +
                                                         describe_state(x));
        } else if (!rep.failure && !r_ok) {
            rep.failure = Error(ErrorCode::NonPSDR, "R is not symmetric PSD at sample " + std::to_string(k) + " x = " +
                                                        describe_state(x) + " (smallest eigenvalue " +
                                                        std::to_string(c.r_min_eigenvalue) + ")");
        }
        rep.samples.push_back(std::move(c));
    }
    return rep;
}

/// Origin plus uniform samples from the box [-radius, radius]^n.
inline std::vector<Vector> default_validation_samples(int n, std::uint64_t seed = 0, int count = 64,
                                                      double radius = 3.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-radius, radius);
    std::vector<Vector> out;
    out.push_back(Vector::Zero(n));
    for (int k = 1; k < count; ++k) {
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = dist(rng);
        out.push_back(std::move(x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structure matrices

/// J-(x) = I - h/2 (J(x) - R(x)) Q and J+(x) = I + h/2 (J(x) - R(x)) Q, with
/// the LU factorization of J-(x) kept for repeated solves.
struct StructurePair {
    Matrix jminus;
    Matrix jplus;
    double h = 1.0;
    LuFactorization lu;

    Vector solve(const Vector& b) const { return lu.solve(b); }
    Matrix solve(const Matrix& b) const { return lu.solve(b); }
};

inline constexpr double kPivotTolerance = 1e-14;

inline StructurePair structure_pair(const PHSystem& sys, const Vector& x, double h = 1.0) {
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
    require_size(x, sys.n(), "state");
    const Matrix a = (sys.J(x) - sys.R(x)) * sys.Q();
    const Matrix eye = Matrix::Identity(sys.n(), sys.n());
    StructurePair p;
    p.h = h;
    p.jminus = eye - 0.5 * h * a;
    p.jplus = eye + 0.5 * h * a;
    p.lu = LuFactorization(p.jminus);
    if (!(p.lu.min_pivot() > kPivotTolerance)) {
        throw Error(ErrorCode::SingularJminus, "J- is singular at x = " + describe_state(x) + " (pivot " +
                                                   std::to_string(p.lu.min_pivot()) + ")");
    }
    return p;
}

/// Symmetric PSD square root of R(x).
inline Matrix dissipation_root(const PHSystem& sys, const Vector& x) {
    require_size(x, sys.n(), "state");
    try {
        return psd_square_root(sys.R(x), kPsdTolerance);
    } catch (const Error& e) {
        throw Error(ErrorCode::NonPSDR, "R(x) at x = " + describe_state(x) + ": " + e.what());
    }
}

/// g(x) = R(x)^{1/2} Q J-(x)^{-1} x; its zero set is the dissipation-free manifold.
inline Vector manifold_residual(const PHSystem& sys, const Vector& x, double h = 1.0) {
    const StructurePair p = structure_pair(sys, x, h);
    return dissipation_root(sys, x) * (sys.Q() * p.solve(x));
}

/// Constant R^{1/2} Q J-^{-1} of a linear system.
inline Matrix manifold_operator(const PHSystem& sys, double h = 1.0) {
    if (!sys.is_linear()) throw Error(ErrorCode::NotApplicable, "manifold operator is constant only for linear systems");
    const Vector zero = Vector::Zero(sys.n());
    const StructurePair p = structure_pair(sys, zero, h);
    return dissipation_root(sys, zero) * sys.Q() * p.lu.inverse();
}

}  // namespace phdiss

#endif  // PHDISS_SYSTEM_HPP
