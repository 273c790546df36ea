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
#ifndef PHDISS_STEPPER_HPP
#define PHDISS_STEPPER_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phdiss/system.hpp"

namespace phdiss {

enum class SchemeKind { Midpoint, DDR };

constexpr std::string_view to_string(SchemeKind s) noexcept { return s == SchemeKind::Midpoint ? "midpoint" : "ddr"; }

inline SchemeKind parse_scheme(std::string_view s) {
    if (s == "midpoint") return SchemeKind::Midpoint;
    if (s == "ddr" || s == "DDR") return SchemeKind::DDR;
    throw Error(ErrorCode::InvalidArgument, "unknown scheme '" + std::string(s) + "' (expected midpoint or ddr)");
}

/// One step of either scheme together with its energy bookkeeping.
///
/// `output` approximates the collocated output B'Qx: for the midpoint rule it
/// is 1/2 B'Q J-^{-1}(2x + hBu), for the DDR the u-average output
/// B' dgH(x_aut, x_next). Both supplied and dissipated energy carry the step
/// size, so H(x_next) - H(x) = supplied - dissipated for every h.
struct StepResult {
    Vector x;
    Vector x_next;
    std::optional<Vector> x_aut;
    Vector output;
    double stored_delta = 0.0;
    double supplied = 0.0;
    double dissipated = 0.0;
};

namespace detail {

inline void require_input(const PHSystem& sys, const Vector& u) {
    require_size(u, sys.m(), "input");
    if (!u.allFinite()) throw Error(ErrorCode::InvalidArgument, "input is not finite");
}

inline void require_ddr(const PHSystem& sys) {
    if (sys.m() != 1) {
        throw Error(ErrorCode::Unsupported, "DDR is implemented for single-input systems (m = 1), got m = " +
                                                std::to_string(sys.m()));
    }
}

}  // namespace detail

/// Implicit midpoint step J- x_next = J+ x + h B u with J(x), R(x) frozen at x.
inline StepResult midpoint_step(const PHSystem& sys, const StructurePair& pair, const Vector& x, const Vector& u) {
    detail::require_input(sys, u);
    const double h = pair.h;
    const Vector hbu = h * (sys.B() * u);
    StepResult s;
    s.x = x;
    s.x_next = pair.solve(Vector(pair.jplus * x + hbu));
    const Vector mid = pair.solve(Vector(2.0 * x + hbu));  // x + x_next
    const Vector qmid = sys.Q() * mid;
    s.output = 0.5 * sys.B().transpose() * qmid;
    s.supplied = h * u.dot(s.output);
    const Vector rq = dissipation_root(sys, x) * qmid;
    s.dissipated = 0.25 * h * rq.squaredNorm();
    s.stored_delta = hamiltonian(sys, s.x_next) - hamiltonian(sys, x);
    return s;
}

inline StepResult midpoint_step(const PHSystem& sys, const Vector& x, const Vector& u, double h = 1.0) {
    return midpoint_step(sys, structure_pair(sys, x, h), x, u);
}

/// Autonomous DDR step in explicit form, x_aut = J-(x)^{-1} J+(x) x.
inline Vector ddr_autonomous_explicit(const PHSystem& /*sys*/, const StructurePair& pair, const Vector& x) {
    return pair.solve(Vector(pair.jplus * x));
}

inline Vector ddr_autonomous_explicit(const PHSystem& sys, const Vector& x, double h = 1.0) {
    return ddr_autonomous_explicit(sys, structure_pair(sys, x, h), x);
}

/// Overload that refuses non-quadratic Hamiltonians, for callers holding a spec.
inline Vector ddr_autonomous_explicit(const HamiltonianSpec& spec, const PHSystem& sys, const Vector& x,
                                      double h = 1.0) {
    if (!spec.is_quadratic()) {
        throw Error(ErrorCode::NonQuadraticHamiltonian, "the explicit DDR map needs a quadratic Hamiltonian");
    }
    const PHSystem with_q(sys.name(), sys.j_field(), sys.r_field(), spec.Q(), sys.B());
    return ddr_autonomous_explicit(with_q, x, h);
}

struct NewtonResult {
    Vector state;
    int iterations = 0;
    double residual = 0.0;
};

inline constexpr int kNewtonMaxIterations = 50;
inline constexpr double kNewtonTolerance = 1e-10;

/// Implicit autonomous DDR step: solves z = x + h (J(x) - R(x)) dgH(x, z) by
/// Newton's method. Starts from the explicit prediction for quadratic H.
inline NewtonResult ddr_autonomous_implicit(const HamiltonianSpec& spec, const PHSystem& sys, const Vector& x,
                                            double h = 1.0, std::optional<Vector> initial_guess = std::nullopt) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
    require_size(x, sys.n(), "state");
    if (spec.n() != sys.n()) throw Error(ErrorCode::DimensionMismatch, "Hamiltonian and system dimensions differ");
    const Matrix a = h * (sys.J(x) - sys.R(x));
    const Matrix eye = Matrix::Identity(sys.n(), sys.n());
    Vector z;
    if (initial_guess) {
        z = *initial_guess;
    } else if (spec.is_quadratic()) {
        z = ddr_autonomous_explicit(spec, sys, x, h);
    } else {
        z = x;
    }
    const double tol = kNewtonTolerance * std::max(1.0, x.norm());
    NewtonResult res;
    for (int it = 0; it <= kNewtonMaxIterations; ++it) {
        const Vector f = z - x - a * discrete_gradient(spec, x, z);
        res.residual = f.norm();
        res.iterations = it;
        if (res.residual <= tol) {
            res.state = z;
            return res;
        }
        if (it == kNewtonMaxIterations) break;
        const Matrix jac = eye - a * discrete_gradient_jacobian_w(spec, x, z);
        const LuFactorization lu(jac);
        if (!(lu.min_pivot() > kPivotTolerance * std::max(1.0, max_abs(jac)))) {
            throw Error(ErrorCode::SingularJacobian, "Newton Jacobian is singular at iteration " + std::to_string(it));
        }
        z -= lu.solve(f);
        if (!z.allFinite()) break;
    }
    throw Error(ErrorCode::NewtonDivergence, "no convergence after " + std::to_string(kNewtonMaxIterations) +
                                                 " iterations, last residual " + std::to_string(res.residual));
}

/// Controlled DDR step for quadratic H: x_aut = J-^{-1} J+ x, x_next = x_aut + h B u,
/// Y = B' Q (x_aut + x_next) / 2.
inline StepResult ddr_step(const PHSystem& sys, const StructurePair& pair, const Vector& x, const Vector& u) {
    detail::require_ddr(sys);
    detail::require_input(sys, u);
    const double h = pair.h;
    StepResult s;
    s.x = x;
    const Vector x_aut = ddr_autonomous_explicit(sys, pair, x);
    s.x_next = x_aut + h * (sys.B() * u);
    s.output = 0.5 * sys.B().transpose() * (sys.Q() * (x_aut + s.x_next));
    s.supplied = h * u.dot(s.output);
    const Vector dg = 0.5 * sys.Q() * (x + x_aut);
    s.dissipated = h * dg.dot(sys.R(x) * dg);
    s.stored_delta = hamiltonian(sys, s.x_next) - hamiltonian(sys, x);
    s.x_aut = x_aut;
    return s;
}

inline StepResult ddr_step(const PHSystem& sys, const Vector& x, const Vector& u, double h = 1.0) {
    return ddr_step(sys, structure_pair(sys, x, h), x, u);
}

inline StepResult scheme_step(const PHSystem& sys, SchemeKind scheme, const Vector& x, const Vector& u, double h) {
    return scheme == SchemeKind::Midpoint ? midpoint_step(sys, x, u, h) : ddr_step(sys, x, u, h);
}

/// |H(x_next) - H(x) - supplied + dissipated|, recomputing the stored energy
/// from the states so that tampered steps are detected.
inline double energy_balance_residual(const PHSystem& sys, const StepResult& step) {
    const double delta = hamiltonian(sys, step.x_next) - hamiltonian(sys, step.x);
    return std::abs(delta - step.supplied + step.dissipated);
}

/// Simulated trajectory. stage_costs[k] is the supplied energy of step k,
/// which is the stage cost of the energy-optimal control problem.
struct Trajectory {
    SchemeKind scheme = SchemeKind::DDR;
    double h = 1.0;
    std::vector<Vector> states;
    std::vector<Vector> inputs;
    std::vector<Vector> outputs;
    std::vector<double> energies;
    std::vector<double> stage_costs;
    std::vector<double> dissipated;
    std::vector<double> residuals;

    int horizon() const noexcept { return static_cast<int>(inputs.size()); }

    double total_cost() const {
        double s = 0.0;
        for (double c : stage_costs) s += c;
        return s;
    }
};

inline Trajectory simulate(const PHSystem& sys, const Vector& x0, const std::vector<Vector>& inputs, SchemeKind scheme,
                           double h = 1.0) {
    require_size(x0, sys.n(), "initial state");
    if (!x0.allFinite()) throw Error(ErrorCode::InvalidArgument, "initial state is not finite");
    Trajectory t;
    t.scheme = scheme;
    t.h = h;
    t.states.reserve(inputs.size() + 1);
    t.states.push_back(x0);
    t.energies.push_back(hamiltonian(sys, x0));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        StepResult s;
        try {
            s = scheme_step(sys, scheme, t.states.back(), inputs[k], h);
        } catch (const Error& e) {
            throw Error(e.code(), "step k = " + std::to_string(k) + ": " + e.what());
        }
        t.inputs.push_back(inputs[k]);
        t.outputs.push_back(s.output);
        t.stage_costs.push_back(s.supplied);
        t.dissipated.push_back(s.dissipated);
        t.residuals.push_back(energy_balance_residual(sys, s));
        t.states.push_back(s.x_next);
        t.energies.push_back(hamiltonian(sys, s.x_next));
    }
    return t;
}

/// Derivatives of one step, used by the discrete adjoint.
struct StepSensitivity {
    Vector x_next;
    double cost = 0.0;
    Matrix fx;  // d x_next / d x
    Matrix fu;  // d x_next / d u
    Vector lx;  // d cost / d x
    Vector lu;  // d cost / d u
};

/// Exact derivatives of the one-step map and the stage cost. With
/// A(x) = (J(x) - R(x)) Q, both schemes satisfy
///   J- dz/dx_i = J+ e_i + h/2 (dA/dx_i) (x + z),
/// where z is x_next (midpoint) or x_aut (DDR).
inline StepSensitivity linearize_step(const PHSystem& sys, SchemeKind scheme, const Vector& x, const Vector& u,
                                      double h) {
    if (scheme == SchemeKind::DDR) detail::require_ddr(sys);
    detail::require_input(sys, u);
    const StructurePair pair = structure_pair(sys, x, h);
    const int n = sys.n();
    const Matrix& q = sys.Q();
    const Matrix& b = sys.B();
    StepSensitivity s;
    const Vector hbu = h * (b * u);
    const Vector z = scheme == SchemeKind::Midpoint ? pair.solve(Vector(pair.jplus * x + hbu))
                                                    : pair.solve(Vector(pair.jplus * x));
    Matrix rhs = pair.jplus;
    if (!sys.is_linear()) {
        const Vector qs = q * (x + z);
        for (int i = 0; i < n; ++i) rhs.col(i) += 0.5 * h * (sys.structure_partial(x, i) * qs);
    }
    const Matrix dz = pair.solve(rhs);
    if (scheme == SchemeKind::Midpoint) {
        s.x_next = z;
        s.fx = dz;
        s.fu = pair.solve(Matrix(h * b));
        // cost = h/2 u' B' Q (x + x_next)
        const Vector qbu = q * (b * u);
        s.cost = 0.5 * h * qbu.dot(x + z);
        s.lx = 0.5 * h * (qbu + dz.transpose() * qbu);
        s.lu = 0.5 * h * (b.transpose() * (q * (x + z)) + s.fu.transpose() * qbu);
    } else {
        s.x_next = z + hbu;
        s.fx = dz;
        s.fu = h * b;
        // cost = h u' (B'Q x_aut + h/2 B'QB u)
        const Matrix bq = b.transpose() * q;
        s.cost = h * u.dot(bq * z + 0.5 * h * (bq * b) * u);
        s.lx = h * dz.transpose() * (bq.transpose() * u);
        s.lu = h * (bq * z) + h * h * (bq * b) * u;
    }
    return s;
}

}  // namespace phdiss

#endif  // PHDISS_STEPPER_HPP
