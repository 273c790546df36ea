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
#ifndef PHDISS_OCP_HPP
#define PHDISS_OCP_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "phdiss/detail/projected_lbfgs.hpp"
#include "phdiss/stepper.hpp"

namespace phdiss {

inline constexpr double kDefaultInputBound = 50.0;

struct SolverOptions {
    int max_outer = 12;
    int max_inner = 3000;
    int lbfgs_memory = 20;
    double penalty_initial = 10.0;
    double penalty_factor = 10.0;
    double penalty_max = 1e9;
    double inner_tolerance = 1e-9;
    double terminal_tolerance = 1e-9;
    double stationarity_tolerance = 1e-6;
    int starts = 8;
    std::uint64_t seed = 0;
};

/// Energy-optimal transfer from x0 to xN in N steps with box-bounded inputs.
struct OCProblem {
    PHSystem sys;
    SchemeKind scheme = SchemeKind::DDR;
    int N = 1;
    double h = 1.0;
    Vector x0;
    Vector xN;
    Vector u_min;
    Vector u_max;
    SolverOptions options;

    /// Fills unset bounds with +/- kDefaultInputBound.
    static OCProblem make(PHSystem sys, SchemeKind scheme, int n_steps, Vector x0, Vector xN, double h = 1.0) {
        OCProblem p;
        p.u_min = Vector::Constant(sys.m(), -kDefaultInputBound);
        p.u_max = Vector::Constant(sys.m(), kDefaultInputBound);
        p.sys = std::move(sys);
        p.scheme = scheme;
        p.N = n_steps;
        p.h = h;
        p.x0 = std::move(x0);
        p.xN = std::move(xN);
        return p;
    }

    void validate() const {
        if (N < 1) throw Error(ErrorCode::InvalidArgument, "horizon N must be at least 1");
        if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
        require_size(x0, sys.n(), "x0");
        require_size(xN, sys.n(), "xN");
        require_size(u_min, sys.m(), "u_min");
        require_size(u_max, sys.m(), "u_max");
        for (int i = 0; i < sys.m(); ++i) {
            if (!(u_min(i) <= u_max(i))) throw Error(ErrorCode::InvalidArgument, "u_min must not exceed u_max");
        }
        if (scheme == SchemeKind::DDR) detail::require_ddr(sys);
    }
};

enum class SolveStatus { Converged, MaxIter, Infeasible };

constexpr std::string_view to_string(SolveStatus s) noexcept {
    switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

struct OCPSolution {
    Trajectory trajectory;
    double cost = 0.0;
    double terminal_defect = 0.0;
    double kkt_residual = 0.0;
    SolveStatus status = SolveStatus::MaxIter;
    int outer_iterations = 0;
    int inner_iterations = 0;
    int start_index = -1;
    int starts_tried = 0;

    const std::vector<Vector>& inputs() const { return trajectory.inputs; }
};

/// u' times the scheme output at (x, u), scaled by h: the supplied energy.
inline double stage_cost(const PHSystem& sys, const Vector& x, const Vector& u, SchemeKind scheme, double h = 1.0) {
    return scheme_step(sys, scheme, x, u, h).supplied;
}

// ---------------------------------------------------------------------------
// Single shooting

/// Single-shooting transcription: the decision vector stacks u_0..u_{N-1};
/// the objective is the summed stage cost along the simulated trajectory and
/// the terminal condition x(N) = xN is the only equality constraint.
class ShootingProgram {
public:
    explicit ShootingProgram(OCProblem problem) : p_(std::move(problem)) {
        p_.validate();
        const int m = p_.sys.m();
        lower_.resize(p_.N * m);
        upper_.resize(p_.N * m);
        for (int k = 0; k < p_.N; ++k) {
            lower_.segment(k * m, m) = p_.u_min;
            upper_.segment(k * m, m) = p_.u_max;
        }
    }

    const OCProblem& problem() const noexcept { return p_; }
    int dimension() const noexcept { return static_cast<int>(lower_.size()); }
    const Vector& lower() const noexcept { return lower_; }
    const Vector& upper() const noexcept { return upper_; }

    std::vector<Vector> unpack(const Vector& z) const {
        const int m = p_.sys.m();
        std::vector<Vector> u(static_cast<std::size_t>(p_.N));
        for (int k = 0; k < p_.N; ++k) u[static_cast<std::size_t>(k)] = z.segment(k * m, m);
        return u;
    }

    Vector pack(const std::vector<Vector>& u) const {
        const int m = p_.sys.m();
        if (static_cast<int>(u.size()) != p_.N) throw Error(ErrorCode::DimensionMismatch, "input sequence length differs from N");
        Vector z(p_.N * m);
        for (int k = 0; k < p_.N; ++k) {
            require_size(u[static_cast<std::size_t>(k)], m, "input");
            z.segment(k * m, m) = u[static_cast<std::size_t>(k)];
        }
        return z;
    }

    Trajectory trajectory(const Vector& z) const { return simulate(p_.sys, p_.x0, unpack(z), p_.scheme, p_.h); }

    struct Evaluation {
        double cost = 0.0;
        Vector terminal_residual;
    };

    Evaluation evaluate(const Vector& z) const {
        Evaluation ev;
        const int m = p_.sys.m();
        Vector x = p_.x0;
        for (int k = 0; k < p_.N; ++k) {
            const StepResult s = scheme_step(p_.sys, p_.scheme, x, z.segment(k * m, m), p_.h);
            ev.cost += s.supplied;
            x = s.x_next;
        }
        ev.terminal_residual = x - p_.xN;
        return ev;
    }

    /// cost + lambda' c + rho/2 |c|^2 with c = x(N) - xN. The gradient comes
    /// from a backward adjoint sweep over the exact step derivatives.
    double augmented(const Vector& z, const Vector& lambda, double rho, Vector* gradient) const {
        if (!gradient) {
            Evaluation ev;
            try {
                ev = evaluate(z);
            } catch (const Error&) {
                return std::numeric_limits<double>::infinity();
            }
            return ev.cost + lambda.dot(ev.terminal_residual) + 0.5 * rho * ev.terminal_residual.squaredNorm();
        }
        const int m = p_.sys.m();
        std::vector<StepSensitivity> sens;
        sens.reserve(static_cast<std::size_t>(p_.N));
        Vector x = p_.x0;
        double cost = 0.0;
        for (int k = 0; k < p_.N; ++k) {
            sens.push_back(linearize_step(p_.sys, p_.scheme, x, z.segment(k * m, m), p_.h));
            cost += sens.back().cost;
            x = sens.back().x_next;
        }
        const Vector c = x - p_.xN;
        Vector adj = lambda + rho * c;
        gradient->resize(z.size());
        for (int k = p_.N - 1; k >= 0; --k) {
            const StepSensitivity& s = sens[static_cast<std::size_t>(k)];
            gradient->segment(k * m, m) = s.lu + s.fu.transpose() * adj;
            adj = s.lx + s.fx.transpose() * adj;
        }
        return cost + lambda.dot(c) + 0.5 * rho * c.squaredNorm();
    }

    Vector objective_gradient(const Vector& z) const {
        Vector g;
        augmented(z, Vector::Zero(p_.sys.n()), 0.0, &g);
        return g;
    }

    /// Transposed Jacobian of x(N) with respect to z, one adjoint sweep per state.
    Matrix terminal_jacobian_transpose(const Vector& z, const Vector& cost_gradient) const {
        const int n = p_.sys.n();
        Matrix jt(z.size(), n);
        Vector g;
        for (int i = 0; i < n; ++i) {
            augmented(z, Vector::Unit(n, i), 0.0, &g);
            jt.col(i) = g - cost_gradient;
        }
        return jt;
    }

    /// Gauss-Newton steps on x(N) = xN over the variables off their bounds.
    /// Removes the feasibility floor left by the line search at large penalties.
    Vector polish_feasibility(Vector z, int max_steps = 3) const {
        const int n = p_.sys.n();
        double defect = evaluate(z).terminal_residual.norm();
        for (int step = 0; step < max_steps && defect > 0.0; ++step) {
            const Vector c = evaluate(z).terminal_residual;
            const Matrix jt = terminal_jacobian_transpose(z, objective_gradient(z));
            Matrix a = Matrix::Zero(n, z.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                if (z(i) > lower_(i) && z(i) < upper_(i)) a.col(i) = jt.row(i).transpose();
            }
            const Vector next = detail::project_box(z - a.completeOrthogonalDecomposition().solve(c), lower_, upper_);
            double next_defect = std::numeric_limits<double>::infinity();
            try {
                next_defect = evaluate(next).terminal_residual.norm();
            } catch (const Error&) {
            }
            if (!(next_defect < defect)) break;
            z = next;
            defect = next_defect;
        }
        return z;
    }

    /// Projected gradient of the Lagrangian cost + lambda' c. Uses the better of
    /// the supplied multiplier and the least-squares multiplier over the
    /// variables that are off their bounds.
    double stationarity(const Vector& z, const Vector& lambda) const {
        const Vector g0 = objective_gradient(z);
        const Matrix jt = terminal_jacobian_transpose(z, g0);
        double best = detail::projected_gradient_norm(z, g0 + jt * lambda, lower_, upper_);
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            if (z(i) > lower_(i) && z(i) < upper_(i)) free.push_back(i);
        }
        if (!free.empty()) {
            Matrix a(static_cast<Eigen::Index>(free.size()), jt.cols());
            Vector b(static_cast<Eigen::Index>(free.size()));
            for (std::size_t r = 0; r < free.size(); ++r) {
                a.row(static_cast<Eigen::Index>(r)) = jt.row(free[r]);
                b(static_cast<Eigen::Index>(r)) = -g0(free[r]);
            }
            const Vector ls = a.completeOrthogonalDecomposition().solve(b);
            best = std::min(best, detail::projected_gradient_norm(z, g0 + jt * ls, lower_, upper_));
        }
        return best;
    }

private:
    OCProblem p_;
    Vector lower_;
    Vector upper_;
};

inline ShootingProgram transcribe(const OCProblem& problem) { return ShootingProgram(problem); }

namespace detail {

struct StartOutcome {
    Vector z;
    double cost = 0.0;
    double defect = 0.0;
    double kkt = 0.0;
    SolveStatus status = SolveStatus::MaxIter;
    int outer = 0;
    int inner = 0;
};

inline constexpr double kPolishThreshold = 1e-4;

inline StartOutcome augmented_lagrangian(const ShootingProgram& prog, Vector z) {
    const SolverOptions& opt = prog.problem().options;
    const int n = prog.problem().sys.n();
    StartOutcome out;
    Vector lambda = Vector::Zero(n);
    double rho = opt.penalty_initial;
    std::vector<double> defects;
    LbfgsOptions inner;
    inner.max_iterations = opt.max_inner;
    inner.memory = opt.lbfgs_memory;
    inner.tolerance = opt.inner_tolerance;
    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        auto fun = [&](const Vector& v, Vector* g) { return prog.augmented(v, lambda, rho, g); };
        LbfgsResult r = minimize_box(fun, z, prog.lower(), prog.upper(), inner);
        z = r.x;
        out.inner += r.iterations;
        auto ev = prog.evaluate(z);
        lambda += rho * ev.terminal_residual;
        if (ev.terminal_residual.norm() <= kPolishThreshold) {
            z = prog.polish_feasibility(z);
            ev = prog.evaluate(z);
        }
        const double defect = ev.terminal_residual.norm();
        out.z = z;
        out.cost = ev.cost;
        out.defect = defect;
        out.kkt = prog.stationarity(z, lambda);
        out.outer = outer;
        defects.push_back(defect);
        if (defect <= opt.terminal_tolerance && out.kkt <= opt.stationarity_tolerance) {
            out.status = SolveStatus::Converged;
            return out;
        }
        const std::size_t d = defects.size();
        if (d >= 3 && defects[d - 1] > 1e-4 && defects[d - 2] > 1e-4 && defects[d - 3] > 1e-4 &&
            defects[d - 1] >= 0.5 * defects[d - 3]) {
            out.status = SolveStatus::Infeasible;
            return out;
        }
        // the penalty grows only while the defect stalls
        if (d < 2 || defects[d - 1] > 0.25 * defects[d - 2]) rho = std::min(rho * opt.penalty_factor, opt.penalty_max);
    }
    out.status = SolveStatus::MaxIter;
    return out;
}

/// Deterministic ordering of candidate solutions: converged first, then cost,
/// then |u|_2, then lexicographic u.
inline bool better_candidate(SolveStatus sa, double ca, const Vector& za, SolveStatus sb, double cb, const Vector& zb) {
    const bool conv_a = sa == SolveStatus::Converged, conv_b = sb == SolveStatus::Converged;
    if (conv_a != conv_b) return conv_a;
    const double tol = 1e-9 * (1.0 + std::min(std::abs(ca), std::abs(cb)));
    if (std::abs(ca - cb) > tol) return ca < cb;
    const double na = za.norm(), nb = zb.norm();
    if (std::abs(na - nb) > 1e-12 * (1.0 + na)) return na < nb;
    for (Eigen::Index i = 0; i < za.size(); ++i) {
        if (za(i) != zb(i)) return za(i) < zb(i);
    }
    return false;
}

}  // namespace detail

/// Multi-start augmented-Lagrangian solve. Starts are the zero input, the
/// supplied warm starts, then seeded random sequences up to options.starts.
inline OCPSolution solve(const OCProblem& problem, std::span<const std::vector<Vector>> warm_starts = {}) {
    const ShootingProgram prog(problem);
    const SolverOptions& opt = problem.options;
    std::vector<Vector> starts;
    starts.push_back(detail::project_box(Vector::Zero(prog.dimension()), prog.lower(), prog.upper()));
    for (const auto& w : warm_starts) starts.push_back(detail::project_box(prog.pack(w), prog.lower(), prog.upper()));
    for (int i = 0; static_cast<int>(starts.size()) < std::max(opt.starts, 1); ++i) {
        std::mt19937_64 rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(i));
        std::normal_distribution<double> nd(0.0, 1.0);
        Vector z(prog.dimension());
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            const double width = prog.upper()(j) - prog.lower()(j);
            const double scale = std::isfinite(width) ? std::min(1.0, 0.25 * width) : 1.0;
            z(j) = scale * nd(rng);
        }
        starts.push_back(detail::project_box(z, prog.lower(), prog.upper()));
    }

    std::optional<detail::StartOutcome> best;
    int best_index = -1;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        detail::StartOutcome o;
        try {
            o = detail::augmented_lagrangian(prog, starts[i]);
        } catch (const Error&) {
            continue;  // a start that leaves the domain of the dynamics is dropped
        }
        if (!best || detail::better_candidate(o.status, o.cost, o.z, best->status, best->cost, best->z)) {
            best = o;
            best_index = static_cast<int>(i);
        }
    }
    if (!best) throw Error(ErrorCode::NewtonDivergence, "every start failed to evaluate");
    OCPSolution sol;
    sol.trajectory = prog.trajectory(best->z);
    sol.cost = sol.trajectory.total_cost();
    sol.terminal_defect = (sol.trajectory.states.back() - problem.xN).norm();
    sol.kkt_residual = best->kkt;
    sol.status = best->status;
    sol.outer_iterations = best->outer;
    sol.inner_iterations = best->inner;
    sol.start_index = best_index;
    sol.starts_tried = static_cast<int>(starts.size());
    return sol;
}

// ---------------------------------------------------------------------------
// Grid enumeration oracle

/// i-th point of a uniform grid with `points` nodes on [lo, hi].
inline double oracle_grid_value(double lo, double hi, int points, int i) {
    if (points <= 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
}

namespace detail {

/// For linear systems one step is affine, x' = Phi x + Gamma u, and the stage
/// cost is u'(C x + D u). Built directly from the scheme definitions.
struct AffineStepModel {
    Matrix phi, gamma, c, d;
};

inline AffineStepModel affine_model(const OCProblem& p) {
    const StructurePair pair = structure_pair(p.sys, Vector::Zero(p.sys.n()), p.h);
    const Matrix& q = p.sys.Q();
    const Matrix& b = p.sys.B();
    const double h = p.h;
    AffineStepModel mdl;
    mdl.phi = pair.solve(pair.jplus);
    if (p.scheme == SchemeKind::DDR) {
        mdl.gamma = h * b;
        mdl.c = h * b.transpose() * q * mdl.phi;
        mdl.d = 0.5 * h * h * b.transpose() * q * b;
    } else {
        const Matrix jinv = pair.lu.inverse();
        mdl.gamma = h * jinv * b;
        mdl.c = h * b.transpose() * q * jinv;
        mdl.d = 0.5 * h * h * b.transpose() * q * jinv * b;
    }
    return mdl;
}

struct OracleSearch {
    const OCProblem& p;
    int points;
    double tol;
    std::vector<Vector> grid;  // all input combinations per step
    std::optional<AffineStepModel> model;
    std::vector<Vector> state;  // per depth
    std::vector<double> acc;
    std::vector<int> choice;
    std::vector<int> best_choice;
    double best_cost = std::numeric_limits<double>::infinity();
    double best_norm = 0.0;
    bool found = false;

    void consider(double cost) {
        double norm2 = 0.0;
        for (int c : choice) norm2 += grid[static_cast<std::size_t>(c)].squaredNorm();
        bool take = !found;
        if (found) {
            if (cost < best_cost - 1e-12 * (1.0 + std::abs(best_cost))) {
                take = true;
            } else if (std::abs(cost - best_cost) <= 1e-12 * (1.0 + std::abs(best_cost))) {
                if (norm2 < best_norm - 1e-15) take = true;
                else if (std::abs(norm2 - best_norm) <= 1e-15) take = lexicographic_less();
            }
        }
        if (take) {
            found = true;
            best_cost = cost;
            best_norm = norm2;
            best_choice = choice;
        }
    }

    bool lexicographic_less() const {
        for (std::size_t k = 0; k < choice.size(); ++k) {
            const Vector& a = grid[static_cast<std::size_t>(choice[k])];
            const Vector& b = grid[static_cast<std::size_t>(best_choice[k])];
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                if (a(i) != b(i)) return a(i) < b(i);
            }
        }
        return false;
    }

    void run(int k) {
        const std::size_t ku = static_cast<std::size_t>(k);
        const Vector& x = state[ku];
        if (model) {
            const Vector px = model->phi * x;
            const Vector cx = model->c * x;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const Vector& u = grid[g];
                const double cost = acc[ku] + u.dot(cx) + u.dot(model->d * u);
                choice[ku] = static_cast<int>(g);
                if (k + 1 == p.N) {
                    const double defect = (px + model->gamma * u - p.xN).norm();
                    if (defect <= tol) consider(cost);
                } else {
                    state[ku + 1].noalias() = px + model->gamma * u;
                    acc[ku + 1] = cost;
                    run(k + 1);
                }
            }
            return;
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const StepResult s = scheme_step(p.sys, p.scheme, x, grid[g], p.h);
            const double cost = acc[ku] + s.supplied;
            choice[ku] = static_cast<int>(g);
            if (k + 1 == p.N) {
                if ((s.x_next - p.xN).norm() <= tol) consider(cost);
            } else {
                state[ku + 1] = s.x_next;
                acc[ku + 1] = cost;
                run(k + 1);
            }
        }
    }
};

}  // namespace detail

inline constexpr double kOracleMaxSequences = 1e7;

/// Exhaustive search over a uniform input grid. Returns the cheapest grid
/// sequence whose terminal defect is within `terminal_tolerance`; ties go to
/// the smaller |u|_2, then lexicographic order.
inline OCPSolution brute_force_oracle(const OCProblem& problem, int grid_points_per_channel, double terminal_tolerance) {
    problem.validate();
    if (grid_points_per_channel < 1) throw Error(ErrorCode::InvalidArgument, "grid needs at least one point");
    const int m = problem.sys.m();
    if (!problem.u_min.allFinite() || !problem.u_max.allFinite()) {
        throw Error(ErrorCode::InvalidArgument, "oracle needs finite input bounds");
    }
    const double sequences = std::pow(static_cast<double>(grid_points_per_channel), problem.N * m);
    if (sequences > kOracleMaxSequences) {
        throw Error(ErrorCode::InvalidArgument, "grid has " + std::to_string(sequences) + " sequences, limit is 1e7");
    }
    detail::OracleSearch search{problem, grid_points_per_channel, terminal_tolerance, {}, {}, {}, {}, {}, {}};
    const int per_step = static_cast<int>(std::pow(grid_points_per_channel, m) + 0.5);
    for (int idx = 0; idx < per_step; ++idx) {
        Vector u(m);
        int rest = idx;
        for (int j = 0; j < m; ++j) {
            u(j) = oracle_grid_value(problem.u_min(j), problem.u_max(j), grid_points_per_channel, rest % grid_points_per_channel);
            rest /= grid_points_per_channel;
        }
        search.grid.push_back(std::move(u));
    }
    if (problem.sys.is_linear()) search.model = detail::affine_model(problem);
    search.state.assign(static_cast<std::size_t>(problem.N) + 1, Vector::Zero(problem.sys.n()));
    search.state[0] = problem.x0;
    search.acc.assign(static_cast<std::size_t>(problem.N) + 1, 0.0);
    search.choice.assign(static_cast<std::size_t>(problem.N), 0);
    search.run(0);
    if (!search.found) {
        throw Error(ErrorCode::NoFeasibleGridPoint,
                    "no grid sequence reaches xN within " + std::to_string(terminal_tolerance));
    }
    std::vector<Vector> u;
    for (int c : search.best_choice) u.push_back(search.grid[static_cast<std::size_t>(c)]);
    OCPSolution sol;
    sol.trajectory = simulate(problem.sys, problem.x0, u, problem.scheme, problem.h);
    sol.cost = sol.trajectory.total_cost();
    sol.terminal_defect = (sol.trajectory.states.back() - problem.xN).norm();
    sol.kkt_residual = 0.0;
    sol.status = SolveStatus::Converged;
    sol.starts_tried = 1;
    return sol;
}

// ---------------------------------------------------------------------------
// Steady states of the DDR

/// A fixed point x = J-^{-1} J+ x + h B u of the DDR together with its cost.
struct SteadyState {
    Vector x_bar;
    Vector u_bar;
    double cost = 0.0;            // stage cost at (x_bar, u_bar)
    double residual = 0.0;        // |(J - R) Q J-^{-1} x_bar + B u_bar|
    double dissipation = 0.0;     // h |R^{1/2} Q J-^{-1} x_bar|^2
    double identity_gap = 0.0;    // |cost - dissipation|
    bool zero_cost = false;       // member of the zero-cost steady set
    double membership_residual = 0.0;  // |B u_bar + J Q J-^{-1} x_bar|
};

inline constexpr double kZeroCostTolerance = 1e-12;

inline Vector steady_state_constraint(const PHSystem& sys, const Vector& x, const Vector& u, double h) {
    const StructurePair p = structure_pair(sys, x, h);
    return (sys.J(x) - sys.R(x)) * (sys.Q() * p.solve(x)) + sys.B() * u;
}

/// Steady state through x_bar: u_bar is the least-squares solution of
/// B u = -(J - R) Q J-^{-1} x_bar.
inline SteadyState steady_state_at(const PHSystem& sys, const Vector& x_bar, double h = 1.0) {
    require_size(x_bar, sys.n(), "steady state");
    const StructurePair p = structure_pair(sys, x_bar, h);
    const Vector w = sys.Q() * p.solve(x_bar);
    const Vector rhs = -(sys.J(x_bar) - sys.R(x_bar)) * w;
    SteadyState s;
    s.x_bar = x_bar;
    s.u_bar = sys.B().completeOrthogonalDecomposition().solve(rhs);
    s.residual = (sys.B() * s.u_bar - rhs).norm();
    s.cost = stage_cost(sys, x_bar, s.u_bar, SchemeKind::DDR, h);
    s.dissipation = h * (dissipation_root(sys, x_bar) * w).squaredNorm();
    s.identity_gap = std::abs(s.cost - s.dissipation);
    s.zero_cost = std::abs(s.cost) <= kZeroCostTolerance;
    s.membership_residual = (sys.B() * s.u_bar + sys.J(x_bar) * w).norm();
    return s;
}

struct SteadyStateOptions {
    int starts = 8;
    std::uint64_t seed = 0;
    double radius = 3.0;
    int max_iterations = 100;
    double accept_residual = 1e-8;
    double identity_tolerance = 1e-10;
    double max_norm = 1e4;  // iterates leaving this ball count as diverged
};

struct SteadyStateSearch {
    std::vector<SteadyState> accepted;
    std::vector<std::string> failures;  // one line per start that did not converge
};

/// Minimizes the steady-state cost over fixed points of the DDR. Each start
/// runs a Gauss-Newton iteration on the KKT system of
///   min |R^{1/2} Q J-^{-1} x|^2  s.t.  (J - R) Q J-^{-1} x + B u = 0,
/// which has the same minimizers since the two costs agree on the constraint.
/// A point is accepted when the constraint residual and the gap between the
/// stage cost and h |g(x)|^2 are both within tolerance.
inline SteadyStateSearch steady_state_solve(const PHSystem& sys, double h = 1.0, const SteadyStateOptions& opt = {}) {
    detail::require_ddr(sys);
    const int n = sys.n();
    const int dim = n + 1;
    SteadyStateSearch out;
    auto residual_g = [&](const Vector& z) -> Vector { return manifold_residual(sys, z.head(n), h); };
    auto residual_c = [&](const Vector& z) -> Vector { return steady_state_constraint(sys, z.head(n), z.tail(1), h); };
    for (int start = 0; start < opt.starts; ++start) {
        Vector z = Vector::Zero(dim);
        if (start > 0) {
            std::mt19937_64 rng(opt.seed * 7919ULL + static_cast<std::uint64_t>(start));
            std::uniform_real_distribution<double> ud(-opt.radius, opt.radius);
            for (int i = 0; i < n; ++i) z(i) = ud(rng);
        }
        bool converged = false;
        try {
            for (int it = 0; it < opt.max_iterations; ++it) {
                const Vector g = residual_g(z);
                const Vector c = residual_c(z);
                const Matrix jg = numerical_jacobian(residual_g, z);
                const Matrix jc = numerical_jacobian(residual_c, z);
                Matrix kkt = Matrix::Zero(dim + n, dim + n);
                kkt.topLeftCorner(dim, dim) = jg.transpose() * jg + 1e-12 * Matrix::Identity(dim, dim);
                kkt.topRightCorner(dim, n) = jc.transpose();
                kkt.bottomLeftCorner(n, dim) = jc;
                Vector rhs(dim + n);
                rhs.head(dim) = -jg.transpose() * g;
                rhs.tail(n) = -c;
                const Vector step = kkt.completeOrthogonalDecomposition().solve(rhs).head(dim);
                z += step;
                if (!z.allFinite() || z.norm() > opt.max_norm) break;
                if (step.norm() <= 1e-13 * (1.0 + z.norm())) {
                    converged = true;
                    break;
                }
            }
        } catch (const Error& e) {
            out.failures.push_back("start " + std::to_string(start) + ": " + e.what());
            continue;
        }
        if (!z.allFinite() || z.norm() > opt.max_norm) {
            out.failures.push_back("start " + std::to_string(start) + ": iterate diverged");
            continue;
        }
        const SteadyState s = steady_state_at(sys, z.head(n), h);
        if (s.residual > opt.accept_residual) {
            out.failures.push_back("start " + std::to_string(start) + ": no convergence (residual " +
                                   std::to_string(s.residual) + (converged ? ")" : ", iteration limit)"));
            continue;
        }
        if (s.identity_gap > opt.identity_tolerance) {
            out.failures.push_back("start " + std::to_string(start) + ": cost identity gap " + format_double(s.identity_gap));
            continue;
        }
        bool duplicate = false;
        for (const SteadyState& a : out.accepted) {
            if ((a.x_bar - s.x_bar).norm() <= 1e-6 * (1.0 + s.x_bar.norm())) duplicate = true;
        }
        if (!duplicate) out.accepted.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Three-phase turnpike control

struct TurnpikeControl {
    std::vector<Vector> inputs;
    Trajectory trajectory;
    double transient_cost = 0.0;  // cost of the two transient phases
    double middle_max_stage_cost = 0.0;
};

inline constexpr double kPhaseTolerance = 1e-8;

/// Concatenates u1 (x0 -> x_bar), the steady input held for N - k1 - k2
/// steps, and u2 (x_bar -> xN).
inline TurnpikeControl build_turnpike_control(const OCProblem& problem, const std::vector<Vector>& u1,
                                              const std::vector<Vector>& u2, const SteadyState& steady) {
    problem.validate();
    const int k1 = static_cast<int>(u1.size()), k2 = static_cast<int>(u2.size());
    if (problem.N < k1 + k2) {
        throw Error(ErrorCode::PhaseMismatch, "horizon " + std::to_string(problem.N) + " shorter than the transients");
    }
    if (std::abs(stage_cost(problem.sys, steady.x_bar, steady.u_bar, problem.scheme, problem.h)) > kZeroCostTolerance) {
        throw Error(ErrorCode::PhaseMismatch, "steady state does not have zero stage cost");
    }
    const Trajectory first = simulate(problem.sys, problem.x0, u1, problem.scheme, problem.h);
    if ((first.states.back() - steady.x_bar).norm() > kPhaseTolerance) {
        throw Error(ErrorCode::PhaseMismatch, "first phase ends " + std::to_string((first.states.back() - steady.x_bar).norm()) +
                                                  " away from the steady state");
    }
    const Trajectory last = simulate(problem.sys, steady.x_bar, u2, problem.scheme, problem.h);
    if ((last.states.back() - problem.xN).norm() > kPhaseTolerance) {
        throw Error(ErrorCode::PhaseMismatch, "last phase ends " + std::to_string((last.states.back() - problem.xN).norm()) +
                                                  " away from xN");
    }
    TurnpikeControl tc;
    tc.inputs = u1;
    for (int k = k1; k < problem.N - k2; ++k) tc.inputs.push_back(steady.u_bar);
    tc.inputs.insert(tc.inputs.end(), u2.begin(), u2.end());
    tc.trajectory = simulate(problem.sys, problem.x0, tc.inputs, problem.scheme, problem.h);
    tc.transient_cost = first.total_cost() + last.total_cost();
    for (int k = k1; k < problem.N - k2; ++k) {
        tc.middle_max_stage_cost =
            std::max(tc.middle_max_stage_cost, std::abs(tc.trajectory.stage_costs[static_cast<std::size_t>(k)]));
    }
    return tc;
}

}  // namespace phdiss

#endif  // PHDISS_OCP_HPP
