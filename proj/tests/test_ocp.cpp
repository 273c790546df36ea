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
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "phdiss/registry.hpp"

namespace {

using namespace phdiss;

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
Matrix one(double v) { return Matrix::Constant(1, 1, v); }
Vector s1(double v) { return Vector::Constant(1, v); }

PHSystem damper() { return PHSystem("damper", one(0.0), one(1.0), one(1.0), one(1.0)); }

TEST(StageCost, Examples) {
    EXPECT_EQ(stage_cost(damper(), s1(1.0), s1(0.0), SchemeKind::DDR, 1.0), 0.0);
    EXPECT_NEAR(stage_cost(damper(), s1(1.0), s1(1.0), SchemeKind::DDR, 1.0), 5.0 / 6.0, 1e-15);
    EXPECT_NEAR(stage_cost(damper(), s1(1.0), s1(-2.0), SchemeKind::Midpoint, 1.0), 0.0, 1e-15);
}

TEST(Transcription, DimensionAndConsistency) {
    OCProblem p = registry_problem("example1_standin").problem;
    p.N = 10;
    const ShootingProgram prog = transcribe(p);
    EXPECT_EQ(prog.dimension(), 10);
    const Vector z = Vector::Zero(10);
    const Trajectory t = simulate(p.sys, p.x0, prog.unpack(z), p.scheme, p.h);
    EXPECT_EQ(prog.evaluate(z).cost, t.total_cost());
    EXPECT_EQ(prog.evaluate(z).terminal_residual, t.states.back() - p.xN);
    Vector w = Vector::LinSpaced(10, -1.0, 2.0);
    EXPECT_EQ(prog.pack(prog.unpack(w)), w);
}

TEST(Transcription, AdjointGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> horizon(1, 30);
    std::normal_distribution<double> d(0.0, 1.0);
    const std::vector<std::string> names = registry_names();
    for (int trial = 0; trial < 20; ++trial) {
        OCProblem p = registry_problem(names[static_cast<std::size_t>(trial) % names.size()]).problem;
        p.scheme = trial % 2 ? SchemeKind::Midpoint : SchemeKind::DDR;
        p.N = horizon(rng);
        p.h = 0.5 + 0.5 * std::abs(d(rng));
        const ShootingProgram prog(p);
        Vector z(prog.dimension()), lambda(p.sys.n());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = 0.3 * d(rng);
        for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = d(rng);
        const double rho = 3.0;
        Vector g;
        prog.augmented(z, lambda, rho, &g);
        Vector fd(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double eps = 1e-6;
            Vector zp = z, zm = z;
            zp(i) += eps;
            zm(i) -= eps;
            fd(i) = (prog.augmented(zp, lambda, rho, nullptr) - prog.augmented(zm, lambda, rho, nullptr)) / (2 * eps);
        }
        EXPECT_LE((g - fd).norm() / std::max(1.0, fd.norm()), 1e-6) << "trial " << trial;
    }
}

TEST(Solve, MidpointOneStepTransfer) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::Midpoint, 1, s1(1.0), s1(-1.0));
    const OCPSolution sol = solve(p);
    EXPECT_EQ(sol.status, SolveStatus::Converged);
    EXPECT_NEAR(sol.inputs()[0](0), -2.0, 1e-8);
    EXPECT_NEAR(sol.cost, 0.0, 1e-8);
}

TEST(Solve, EquilibriumTransfer) {
    OCProblem p = registry_problem("example1_standin").problem;
    p.N = 8;
    p.x0.setZero();
    p.xN.setZero();
    const OCPSolution sol = solve(p);
    EXPECT_EQ(sol.status, SolveStatus::Converged);
    for (const Vector& u : sol.inputs()) EXPECT_LE(u.norm(), 1e-7);
    EXPECT_NEAR(sol.cost, 0.0, 1e-10);
}

TEST(Solve, ConvergedSolutionsMeetTolerances) {
    OCProblem p = registry_problem("example1_standin").problem;
    p.N = 12;
    const OCPSolution sol = solve(p);
    ASSERT_EQ(sol.status, SolveStatus::Converged);
    EXPECT_LE(sol.terminal_defect, 1e-6);
    EXPECT_LE(sol.kkt_residual, 1e-6);
    for (const Vector& u : sol.inputs()) {
        EXPECT_GE(u(0), p.u_min(0) - 1e-9);
        EXPECT_LE(u(0), p.u_max(0) + 1e-9);
    }
}

TEST(Solve, UnreachableTargetIsInfeasible) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, 1, s1(0.0), s1(10.0));
    p.u_min = s1(-1.0);
    p.u_max = s1(1.0);
    const OCPSolution sol = solve(p);
    EXPECT_EQ(sol.status, SolveStatus::Infeasible);
    EXPECT_NEAR(sol.terminal_defect, 9.0, 1e-6);
}

TEST(Solve, InvalidProblems) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, 0, s1(0.0), s1(1.0));
    EXPECT_THROW(solve(p), Error);
    p.N = 1;
    p.u_min = s1(2.0);
    p.u_max = s1(1.0);
    EXPECT_THROW(solve(p), Error);
}

TEST(Solve, DeterministicForSeed) {
    OCProblem p = registry_problem("example2").problem;
    p.N = 10;
    const OCPSolution a = solve(p), b = solve(p);
    EXPECT_EQ(a.cost, b.cost);
    for (std::size_t k = 0; k < a.inputs().size(); ++k) EXPECT_EQ(a.inputs()[k], b.inputs()[k]);
}

TEST(CostDecomposition, SummedEnergyBalanceOnSolvedTrajectories) {
    for (const char* name : {"example1_standin", "example2", "nonlinear_oscillator", "scalar_damper"}) {
        OCProblem p = registry_problem(name).problem;
        p.scheme = SchemeKind::DDR;
        p.N = std::max(p.N, 6);
        if (p.N > 20) p.N = 20;
        const OCPSolution sol = solve(p);
        const Trajectory& t = sol.trajectory;
        double dissipation = 0.0;
        for (int k = 0; k < t.horizon(); ++k) {
            dissipation += p.h * manifold_residual(p.sys, t.states[static_cast<std::size_t>(k)], p.h).squaredNorm();
        }
        const double delta_h = t.energies.back() - t.energies.front();
        EXPECT_LE(std::abs(sol.cost - delta_h - dissipation), 1e-8) << name;
        EXPECT_GE(sol.cost, delta_h - 1e-8) << name;
    }
}

TEST(Oracle, OneStepMidpoint) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::Midpoint, 1, s1(1.0), s1(-1.0));
    p.u_min = s1(-5.0);
    p.u_max = s1(5.0);
    const OCPSolution sol = brute_force_oracle(p, 21, 1e-9);
    EXPECT_EQ(sol.inputs()[0](0), -2.0);
    EXPECT_NEAR(sol.cost, 0.0, 1e-15);
}

TEST(Oracle, Equilibrium) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, 3, s1(0.0), s1(0.0));
    p.u_min = s1(-1.0);
    p.u_max = s1(1.0);
    const OCPSolution sol = brute_force_oracle(p, 11, 1e-12);
    for (const Vector& u : sol.inputs()) EXPECT_EQ(u(0), 0.0);
}

TEST(Oracle, Errors) {
    OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, 1, s1(0.0), s1(10.0));
    p.u_min = s1(-1.0);
    p.u_max = s1(1.0);
    try {
        brute_force_oracle(p, 11, 1e-6);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoFeasibleGridPoint);
    }
    p.N = 8;
    EXPECT_THROW(brute_force_oracle(p, 11, 1e-6), Error);  // 11^8 > 1e7
}

TEST(Oracle, GenericPathMatchesAffinePath) {
    // the nonlinear code path applied to a linear system written with expressions
    const PHSystem lin = registry_system("example1_standin");
    const MatrixField j = detail::expression_field(3, 3, {"0", "1", "0", "-1", "0", "1", "0", "-1", "0"}, 3);
    std::vector<std::string> r_entries;
    const Matrix r = lin.R(Vector::Zero(3));
    for (Eigen::Index a = 0; a < 3; ++a)
        for (Eigen::Index b = 0; b < 3; ++b) r_entries.push_back(format_double(r(a, b)) + " + 0*x1");
    const PHSystem expr("expr", j, detail::expression_field(3, 3, r_entries, 3), lin.Q(), lin.B());
    ASSERT_FALSE(expr.is_linear());
    for (SchemeKind scheme : {SchemeKind::Midpoint, SchemeKind::DDR}) {
        OCProblem a = OCProblem::make(lin, scheme, 3, Vector::Ones(3), Vector::Zero(3));
        a.u_min = s1(-2.0);
        a.u_max = s1(2.0);
        std::vector<Vector> target{s1(0.5), s1(-1.0), s1(1.5)};
        a.xN = simulate(lin, a.x0, target, scheme, 1.0).states.back();
        OCProblem b = a;
        b.sys = expr;
        const OCPSolution sa = brute_force_oracle(a, 9, 1e-9);
        const OCPSolution sb = brute_force_oracle(b, 9, 1e-9);
        EXPECT_NEAR(sa.cost, sb.cost, 1e-12);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(sa.inputs()[k], sb.inputs()[k]);
    }
}

TEST(Oracle, SolverIsNotWorse) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        const PHSystem sys = registry_system(trial == 2 ? "example2" : "example1_standin");
        const SchemeKind scheme = trial == 1 ? SchemeKind::Midpoint : SchemeKind::DDR;
        OCProblem p = OCProblem::make(sys, scheme, 3, Vector::Constant(sys.n(), 0.5), Vector::Zero(sys.n()));
        p.u_min = s1(-5.0);
        p.u_max = s1(5.0);
        std::uniform_int_distribution<int> idx(0, 40);
        std::vector<Vector> target;
        for (int k = 0; k < 3; ++k) target.push_back(s1(oracle_grid_value(-5.0, 5.0, 41, idx(rng))));
        p.xN = simulate(sys, p.x0, target, scheme, 1.0).states.back();
        const OCPSolution oracle = brute_force_oracle(p, 41, 1e-9);
        const OCPSolution sol = solve(p);
        ASSERT_EQ(sol.status, SolveStatus::Converged);
        EXPECT_LE(sol.cost, oracle.cost + 1e-6);
        EXPECT_LE(sol.terminal_defect, 1e-6);
    }
}

TEST(SteadyState, ScalarFamily) {
    const SteadyState s = steady_state_at(damper(), s1(3.0), 1.0);
    EXPECT_NEAR(s.u_bar(0), 2.0, 1e-14);
    EXPECT_NEAR(s.cost, 4.0, 1e-13);
    EXPECT_NEAR(s.dissipation, 4.0, 1e-13);
    EXPECT_LE(s.identity_gap, 1e-10);
    EXPECT_LE(s.residual, 1e-14);
    EXPECT_FALSE(s.zero_cost);
    const SteadyState o = steady_state_at(damper(), s1(0.0), 1.0);
    EXPECT_EQ(o.cost, 0.0);
    EXPECT_TRUE(o.zero_cost);
    EXPECT_LE(o.membership_residual, 1e-14);
}

TEST(SteadyState, SolveOnRegistrySystems) {
    for (const char* name : {"scalar_damper", "example1_standin", "example2", "nonlinear_oscillator"}) {
        const PHSystem sys = registry_system(name);
        const SteadyStateSearch search = steady_state_solve(sys, 1.0);
        ASSERT_FALSE(search.accepted.empty()) << name;
        for (const SteadyState& s : search.accepted) {
            EXPECT_LE(s.residual, 1e-8) << name;
            EXPECT_GE(s.cost, -1e-10) << name;
            EXPECT_LE(s.identity_gap, 1e-10) << name;
            if (s.zero_cost) {
                EXPECT_LE(s.membership_residual, 1e-8) << name;
            }
            if (std::string(name) == "example2" && s.cost <= 1e-12) {
                EXPECT_LE(std::abs(2 * s.x_bar(0) + s.x_bar(1)), 1e-8);
            }
        }
    }
}

TEST(TurnpikeControl, PureSteadyPhase) {
    const PHSystem sys = registry_system("example2");
    const Vector xb = v2(0.5, -1.0);
    const SteadyState s = steady_state_at(sys, xb, 1.0);
    ASSERT_TRUE(s.zero_cost);
    OCProblem p = OCProblem::make(sys, SchemeKind::DDR, 15, xb, xb);
    const TurnpikeControl tc = build_turnpike_control(p, {}, {}, s);
    ASSERT_EQ(tc.inputs.size(), 15u);
    for (const Vector& u : tc.inputs) EXPECT_EQ(u, s.u_bar);
    EXPECT_LE(std::abs(tc.trajectory.total_cost()), 1e-12 * 15);
}

TEST(TurnpikeControl, ScalarThreePhase) {
    const SteadyState s = steady_state_at(damper(), s1(0.0), 1.0);
    double cost20 = 0.0;
    for (int n : {20, 100}) {
        OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, n, s1(1.0), s1(0.5));
        const TurnpikeControl tc = build_turnpike_control(p, {s1(-1.0 / 3.0)}, {s1(0.5)}, s);
        EXPECT_EQ(tc.inputs.size(), static_cast<std::size_t>(n));
        EXPECT_LE(tc.middle_max_stage_cost, 1e-12);
        EXPECT_LE((tc.trajectory.states.back() - p.xN).norm(), 1e-12);
        if (n == 20) {
            cost20 = tc.trajectory.total_cost();
        } else {
            EXPECT_NEAR(tc.trajectory.total_cost(), cost20, 1e-9);
        }
        EXPECT_NEAR(tc.trajectory.total_cost(), tc.transient_cost, 1e-12);
    }
}

TEST(TurnpikeControl, PhaseMismatch) {
    const SteadyState s = steady_state_at(damper(), s1(0.0), 1.0);
    OCProblem p = OCProblem::make(damper(), SchemeKind::DDR, 10, s1(1.0), s1(0.5));
    auto code = [&](const std::vector<Vector>& u1, const std::vector<Vector>& u2, const SteadyState& st, int n) {
        p.N = n;
        try {
            build_turnpike_control(p, u1, u2, st);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    EXPECT_EQ(code({s1(-0.3)}, {s1(0.5)}, s, 10), ErrorCode::PhaseMismatch);
    EXPECT_EQ(code({s1(-1.0 / 3.0)}, {s1(0.4)}, s, 10), ErrorCode::PhaseMismatch);
    EXPECT_EQ(code({s1(-1.0 / 3.0)}, {s1(0.5)}, s, 1), ErrorCode::PhaseMismatch);
    EXPECT_EQ(code({}, {}, steady_state_at(damper(), s1(3.0), 1.0), 10), ErrorCode::PhaseMismatch);
}

}  // namespace
