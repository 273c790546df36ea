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
#ifndef PHDISS_DISSIPATIVITY_HPP
#define PHDISS_DISSIPATIVITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "phdiss/ocp.hpp"

namespace phdiss {

/// The dissipation-free manifold, either the kernel of a fixed matrix G or the
/// zero set of g(x) = R(x)^{1/2} Q J-(x)^{-1} x of a system. A linear kernel
/// may carry a system whose residual is used for ratio estimates.
struct ManifoldSpec {
    enum class Kind { LinearKernel, ResidualZeroSet };

    Kind kind = Kind::LinearKernel;
    Matrix G;
    std::optional<PHSystem> system;
    double h = 1.0;
    double surrogate_constant = 1.0;  // c used by the |g(x)|/c fallback

    static ManifoldSpec linear(Matrix g, std::optional<PHSystem> sys = std::nullopt, double h = 1.0) {
        if (g.rows() == 0 || g.cols() == 0) throw Error(ErrorCode::InvalidArgument, "manifold matrix is empty");
        ManifoldSpec s;
        s.kind = Kind::LinearKernel;
        s.G = std::move(g);
        s.system = std::move(sys);
        s.h = h;
        if (s.system && s.system->n() != s.G.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "manifold matrix has " + std::to_string(s.G.cols()) +
                                                          " columns, system has n = " + std::to_string(s.system->n()));
        }
        return s;
    }

    static ManifoldSpec residual(PHSystem sys, double h = 1.0) {
        ManifoldSpec s;
        s.kind = Kind::ResidualZeroSet;
        s.system = std::move(sys);
        s.h = h;
        return s;
    }

    int dimension() const { return kind == Kind::LinearKernel ? static_cast<int>(G.cols()) : system->n(); }

    /// g(x) from the attached system, or Gx for a bare linear kernel.
    Vector residual_at(const Vector& x) const {
        if (system) return manifold_residual(*system, x, h);
        return G * x;
    }
};

inline constexpr int kProjectionMaxIterations = 30;
inline constexpr double kProjectionMaxGrowth = 1e3;
inline constexpr double kProjectionTolerance = 1e-10;

struct DistanceResult {
    double distance = 0.0;
    double residual_norm = 0.0;  // |g(x)|
    Vector projection;           // closest manifold point found (empty for the surrogate)
    int iterations = 0;
    bool surrogate = false;
};

namespace detail {

inline Vector pinv_apply(const Matrix& d, const Vector& v, double rel_tol = 1e-8) {
    Eigen::JacobiSVD<Matrix> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    Vector coeff = svd.matrixU().transpose() * v;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        coeff(i) = (s(0) > 0.0 && s(i) > rel_tol * s(0)) ? coeff(i) / s(i) : 0.0;
    }
    return svd.matrixV() * coeff;
}

}  // namespace detail

/// Distance from x to the manifold. Linear kernels use the orthogonal
/// projection onto the row space of G; residual zero sets use a Gauss-Newton
/// projection and fall back to |g(x)|/c when it does not converge.
inline DistanceResult manifold_distance_detail(const ManifoldSpec& spec, const Vector& x) {
    require_size(x, spec.dimension(), "state");
    DistanceResult r;
    if (spec.kind == ManifoldSpec::Kind::LinearKernel) {
        const Matrix v = row_space_basis(spec.G);
        const Vector normal = v * (v.transpose() * x);
        r.distance = normal.norm();
        r.projection = x - normal;
        r.residual_norm = spec.residual_at(x).norm();
        return r;
    }
    auto g = [&](const Vector& z) -> Vector { return manifold_residual(*spec.system, z, spec.h); };
    const Vector gx = g(x);
    r.residual_norm = gx.norm();
    auto fallback = [&] {
        r.surrogate = true;
        r.projection.resize(0);
        r.distance = r.residual_norm / spec.surrogate_constant;
        return r;
    };
    if (r.residual_norm <= kProjectionTolerance) {
        r.projection = x;
        return r;
    }
    try {
        Vector xi = x - detail::pinv_apply(numerical_jacobian(g, x), gx);
        for (int it = 1; it <= kProjectionMaxIterations; ++it) {
            r.iterations = it;
            const Vector gxi = g(xi);
            const Matrix d = numerical_jacobian(g, xi);
            const Vector next = x - detail::pinv_apply(d, gxi + d * (x - xi));
            const double step = (next - xi).norm();
            xi = next;
            if (!xi.allFinite() || xi.norm() > kProjectionMaxGrowth * (1.0 + x.norm())) return fallback();
            if (step <= kProjectionTolerance * (1.0 + xi.norm()) && g(xi).norm() <= kProjectionTolerance) {
                r.projection = xi;
                r.distance = (x - xi).norm();
                return r;
            }
        }
    } catch (const Error&) {
        return fallback();
    }
    return fallback();
}

inline double manifold_distance(const ManifoldSpec& spec, const Vector& x) {
    return manifold_distance_detail(spec, x).distance;
}

// ---------------------------------------------------------------------------
// Manifold constant

struct ManifoldConstant {
    double c_hat = 0.0;  // minimum ratio |g(x)|/dist(x)
    double min_ratio = 0.0;
    double median_ratio = 0.0;
    double max_ratio = 0.0;
    int valid_samples = 0;
    int excluded_samples = 0;
    std::optional<double> singular_value;  // smallest nonzero singular value of a constant g
};

inline constexpr double kMinSampleDistance = 1e-8;
inline constexpr int kMinValidSamples = 10;

namespace detail {

inline ManifoldConstant summarize_ratios(std::vector<double> ratios, int excluded) {
    if (static_cast<int>(ratios.size()) < kMinValidSamples) {
        throw Error(ErrorCode::DegenerateSampling, "only " + std::to_string(ratios.size()) +
                                                       " samples lie off the manifold, need " +
                                                       std::to_string(kMinValidSamples));
    }
    std::sort(ratios.begin(), ratios.end());
    ManifoldConstant c;
    c.valid_samples = static_cast<int>(ratios.size());
    c.excluded_samples = excluded;
    c.min_ratio = ratios.front();
    c.max_ratio = ratios.back();
    const std::size_t mid = ratios.size() / 2;
    c.median_ratio = ratios.size() % 2 ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
    c.c_hat = c.min_ratio;
    return c;
}

}  // namespace detail

/// Ratio |g(x)|/dist(x, M) over states; points closer than 1e-8 are excluded.
inline ManifoldConstant manifold_ratios(const ManifoldSpec& spec, std::span<const Vector> states) {
    std::vector<double> ratios;
    int excluded = 0;
    for (const Vector& x : states) {
        const DistanceResult d = manifold_distance_detail(spec, x);
        if (d.surrogate || d.distance < kMinSampleDistance) {
            ++excluded;
            continue;
        }
        ratios.push_back(d.residual_norm / d.distance);
    }
    return detail::summarize_ratios(std::move(ratios), excluded);
}

/// Samples the box [lo, hi] uniformly with a seeded generator.
inline ManifoldConstant estimate_manifold_constant(const ManifoldSpec& spec, const Vector& lo, const Vector& hi,
                                                   int n_samples, std::uint64_t seed = 0) {
    const int n = spec.dimension();
    require_size(lo, n, "sampling box lower corner");
    require_size(hi, n, "sampling box upper corner");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector> samples(static_cast<std::size_t>(std::max(n_samples, 0)), Vector(n));
    for (Vector& x : samples) {
        for (int i = 0; i < n; ++i) x(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
    }
    ManifoldConstant c = manifold_ratios(spec, samples);
    if (spec.system && spec.system->is_linear()) {
        c.singular_value = smallest_nonzero_singular_value(manifold_operator(*spec.system, spec.h));
    } else if (!spec.system && spec.kind == ManifoldSpec::Kind::LinearKernel) {
        c.singular_value = smallest_nonzero_singular_value(spec.G);
    }
    return c;
}

/// Minimum ratio over the states of a trajectory.
inline double c_hat_from_states(const ManifoldSpec& spec, std::span<const Vector> states) {
    return manifold_ratios(spec, states).c_hat;
}

// ---------------------------------------------------------------------------
// Dissipation inequality

struct DissipationStep {
    int k = 0;
    double stage_cost = 0.0;
    double storage_delta = 0.0;
    double distance = 0.0;
    double alpha = 0.0;
    double slack = 0.0;
    bool satisfied = true;
    bool surrogate = false;
};

struct DissipationReport {
    double c_hat = 0.0;
    double h = 1.0;
    std::vector<DissipationStep> steps;
    double total_cost = 0.0;
    double total_storage_delta = 0.0;
    double total_alpha = 0.0;
    double total_slack = 0.0;
    bool satisfied = true;

    int violations() const {
        return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return !s.satisfied; }));
    }
};

inline constexpr double kSlackTolerance = 1e-9;

inline std::string_view verdict(bool satisfied) noexcept { return satisfied ? "satisfied" : "violated"; }

/// Checks l_k - alpha(dist(x_k)) - (S(x_{k+1}) - S(x_k)) >= 0 for every step
/// with storage S = H and alpha(s) = h c^2 s^2.
inline DissipationReport dissipation_check(const Trajectory& traj, const PHSystem& sys, const ManifoldSpec& manifold,
                                           double c_hat) {
    if (!(c_hat >= 0.0)) throw Error(ErrorCode::InvalidArgument, "c_hat must be nonnegative");
    if (traj.states.size() != traj.inputs.size() + 1 || traj.stage_costs.size() != traj.inputs.size()) {
        throw Error(ErrorCode::DimensionMismatch, "trajectory needs N + 1 states and N stage costs");
    }
    DissipationReport rep;
    rep.c_hat = c_hat;
    rep.h = traj.h;
    for (int k = 0; k < traj.horizon(); ++k) {
        const std::size_t ku = static_cast<std::size_t>(k);
        DissipationStep s;
        s.k = k;
        s.stage_cost = traj.stage_costs[ku];
        s.storage_delta = hamiltonian(sys, traj.states[ku + 1]) - hamiltonian(sys, traj.states[ku]);
        const DistanceResult d = manifold_distance_detail(manifold, traj.states[ku]);
        s.distance = d.distance;
        s.surrogate = d.surrogate;
        s.alpha = traj.h * c_hat * c_hat * s.distance * s.distance;
        s.slack = s.stage_cost - s.alpha - s.storage_delta;
        s.satisfied = s.slack >= -kSlackTolerance;
        rep.total_cost += s.stage_cost;
        rep.total_storage_delta += s.storage_delta;
        rep.total_alpha += s.alpha;
        rep.total_slack += s.slack;
        rep.satisfied = rep.satisfied && s.satisfied;
        rep.steps.push_back(s);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Midpoint counterexample

struct CounterexampleReport {
    OCProblem problem;
    Vector x0;
    Vector xN;
    Vector u;
    Trajectory trajectory;
    double cost = 0.0;
    double storage_delta = 0.0;
    double distance = 0.0;
    double output_norm = 0.0;
    DissipationReport dissipation;
};

/// One-step midpoint transfer x0 -> -x0 with x0 = B w, driven by u = -2 w / h.
/// The output vanishes, so the cost and the stored-energy change are zero
/// while x0 lies off ker R^{1/2} Q J-^{-1}: the dissipation inequality fails at
/// k = 0 for any alpha with alpha(s) > 0 for s > 0.
inline CounterexampleReport prop2_counterexample(const PHSystem& sys, double h = 1.0,
                                                 const std::optional<Vector>& x0_in = std::nullopt,
                                                 double c_hat = 1.0) {
    if (!sys.is_linear()) throw Error(ErrorCode::NotApplicable, "counterexample needs a linear system");
    const Matrix k_op = manifold_operator(sys, h);
    const Matrix kb = k_op * sys.B();
    const double kb_scale = std::max(1.0, max_abs(k_op)) * std::max(1.0, max_abs(sys.B()));
    if (max_abs(kb) <= 1e-12 * kb_scale) {
        throw Error(ErrorCode::NotApplicable, "range of B lies in the manifold, every input keeps the inequality");
    }
    Vector w;
    if (x0_in) {
        require_size(*x0_in, sys.n(), "x0");
        if (x0_in->norm() == 0.0) throw Error(ErrorCode::InvalidArgument, "x0 = 0 lies on the manifold");
        w = sys.B().completeOrthogonalDecomposition().solve(*x0_in);
        if ((sys.B() * w - *x0_in).norm() > 1e-10 * (1.0 + x0_in->norm())) {
            throw Error(ErrorCode::InvalidArgument, "x0 must lie in the range of B");
        }
        if ((k_op * *x0_in).norm() <= 1e-12 * (1.0 + x0_in->norm())) {
            throw Error(ErrorCode::InvalidArgument, "x0 lies on the manifold");
        }
    } else {
        Eigen::Index j = 0;
        kb.colwise().norm().maxCoeff(&j);
        w = Vector::Unit(sys.m(), j);
    }
    CounterexampleReport rep;
    rep.x0 = sys.B() * w;
    rep.xN = -rep.x0;
    rep.u = -(2.0 / h) * w;
    rep.problem = OCProblem::make(sys, SchemeKind::Midpoint, 1, rep.x0, rep.xN, h);
    rep.problem.u_min = rep.problem.u_min.cwiseMin(rep.u);
    rep.problem.u_max = rep.problem.u_max.cwiseMax(rep.u);
    rep.trajectory = simulate(sys, rep.x0, {rep.u}, SchemeKind::Midpoint, h);
    rep.cost = rep.trajectory.total_cost();
    rep.storage_delta = rep.trajectory.energies.back() - rep.trajectory.energies.front();
    rep.output_norm = rep.trajectory.outputs.front().norm();
    const ManifoldSpec manifold = ManifoldSpec::linear(k_op, sys, h);
    rep.distance = manifold_distance(manifold, rep.x0);
    rep.dissipation = dissipation_check(rep.trajectory, sys, manifold, c_hat);
    return rep;
}

// ---------------------------------------------------------------------------
// Turnpike diagnostics

/// Sum of squared distances over the given states.
inline double sum_turnpike_metric(std::span<const Vector> states, const ManifoldSpec& manifold) {
    double s = 0.0;
    for (const Vector& x : states) {
        const double d = manifold_distance(manifold, x);
        s += d * d;
    }
    return s;
}

/// Sum over x_0 .. x_{N-1} of a trajectory.
inline double sum_turnpike_metric(const Trajectory& traj, const ManifoldSpec& manifold) {
    return sum_turnpike_metric(std::span<const Vector>(traj.states.data(), traj.inputs.size()), manifold);
}

/// States k with ceil(N/3) <= k <= floor(2N/3).
struct MiddleThird {
    int first = 0;
    int last = 0;
};

inline MiddleThird middle_third(int n_steps) { return {(n_steps + 2) / 3, (2 * n_steps) / 3}; }

struct WarmStartCertificate {
    Vector x_bar;
    Vector u_bar;
    int k1 = 0;
    int k2 = 0;
    double transient_cost = 0.0;
    double cost = 0.0;  // cost of the three-phase control at this horizon
};

struct ScanEntry {
    int N = 0;
    std::string status;  // converged | max_iter | infeasible | error
    std::string error;
    double cost = 0.0;
    double terminal_defect = 0.0;
    double sum_metric = 0.0;
    double middle_max_distance = 0.0;
    double max_distance = 0.0;
    double max_state_norm = 0.0;
    std::optional<WarmStartCertificate> certificate;
    std::optional<Trajectory> trajectory;
};

struct TurnpikeScan {
    SchemeKind scheme = SchemeKind::DDR;
    double distance_x0 = 0.0;
    std::vector<ScanEntry> entries;
};

struct TurnpikeScanOptions {
    bool warm_start = true;  // three-phase warm start through a zero-cost steady state (DDR only)
    bool keep_trajectories = false;
};

namespace detail {

struct Transients {
    SteadyState steady;
    std::vector<Vector> u1, u2;
};

/// Shortest transients x0 -> x_bar and x_bar -> xN found by converged OCP solves.
inline std::optional<Transients> find_transients(const OCProblem& base) {
    SteadyStateOptions sopt;
    sopt.seed = base.options.seed;
    const SteadyStateSearch search = steady_state_solve(base.sys, base.h, sopt);
    std::optional<SteadyState> pick;
    double best = std::numeric_limits<double>::infinity();
    for (const SteadyState& s : search.accepted) {
        if (!s.zero_cost) continue;
        const double score = (s.x_bar - base.x0).norm() + (s.x_bar - base.xN).norm();
        if (score < best) {
            best = score;
            pick = s;
        }
    }
    if (!pick) return std::nullopt;
    auto transfer = [&](const Vector& from, const Vector& to) -> std::optional<std::vector<Vector>> {
        for (int k = base.sys.n(); k <= base.sys.n() + 3; ++k) {
            OCProblem p = base;
            p.N = k;
            p.x0 = from;
            p.xN = to;
            try {
                const OCPSolution sol = solve(p);
                if (sol.status == SolveStatus::Converged && sol.terminal_defect <= 0.1 * kPhaseTolerance) return sol.inputs();
            } catch (const Error&) {
            }
        }
        return std::nullopt;
    };
    Transients t;
    t.steady = *pick;
    auto u1 = transfer(base.x0, pick->x_bar);
    if (!u1) return std::nullopt;
    auto u2 = transfer(pick->x_bar, base.xN);
    if (!u2) return std::nullopt;
    t.u1 = std::move(*u1);
    t.u2 = std::move(*u2);
    return t;
}

}  // namespace detail

/// Solves the OCP for each horizon and records turnpike metrics. Failures of a
/// single horizon are recorded and the scan continues.
inline TurnpikeScan turnpike_scan(const OCProblem& base, std::span<const int> horizons, const ManifoldSpec& manifold,
                                  const TurnpikeScanOptions& opt = {}) {
    TurnpikeScan scan;
    scan.scheme = base.scheme;
    scan.distance_x0 = manifold_distance(manifold, base.x0);
    std::optional<detail::Transients> transients;
    if (opt.warm_start && base.scheme == SchemeKind::DDR) {
        try {
            transients = detail::find_transients(base);
        } catch (const Error&) {
        }
    }
    for (int n_steps : horizons) {
        ScanEntry e;
        e.N = n_steps;
        try {
            OCProblem p = base;
            p.N = n_steps;
            std::vector<std::vector<Vector>> warm;
            if (transients && n_steps >= static_cast<int>(transients->u1.size() + transients->u2.size())) {
                const TurnpikeControl tc = build_turnpike_control(p, transients->u1, transients->u2, transients->steady);
                WarmStartCertificate c;
                c.x_bar = transients->steady.x_bar;
                c.u_bar = transients->steady.u_bar;
                c.k1 = static_cast<int>(transients->u1.size());
                c.k2 = static_cast<int>(transients->u2.size());
                c.transient_cost = tc.transient_cost;
                c.cost = tc.trajectory.total_cost();
                e.certificate = c;
                warm.push_back(tc.inputs);
            }
            const OCPSolution sol = solve(p, warm);
            e.status = std::string(to_string(sol.status));
            e.cost = sol.cost;
            e.terminal_defect = sol.terminal_defect;
            const Trajectory& t = sol.trajectory;
            e.sum_metric = sum_turnpike_metric(t, manifold);
            const MiddleThird mid = middle_third(n_steps);
            for (int k = 0; k <= n_steps; ++k) {
                const Vector& x = t.states[static_cast<std::size_t>(k)];
                const double d = manifold_distance(manifold, x);
                e.max_distance = std::max(e.max_distance, d);
                e.max_state_norm = std::max(e.max_state_norm, x.norm());
                if (k >= mid.first && k <= mid.last) e.middle_max_distance = std::max(e.middle_max_distance, d);
            }
            if (opt.keep_trajectories) e.trajectory = t;
        } catch (const Error& err) {
            e.status = "error";
            e.error = err.what();
        }
        scan.entries.push_back(std::move(e));
    }
    return scan;
}

}  // namespace phdiss

#endif  // PHDISS_DISSIPATIVITY_HPP
