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
Vector v3(double a, double b, double c) { return (Vector(3) << a, b, c).finished(); }
Matrix one(double v) { return Matrix::Constant(1, 1, v); }
Vector s1(double v) { return Vector::Constant(1, v); }

ManifoldSpec subspace_a() { return ManifoldSpec::linear((Matrix(1, 3) << 1, -1, 1).finished()); }

TEST(Distance, LinearKernelExamples) {
    EXPECT_NEAR(manifold_distance(subspace_a(), v3(1, 1, 1)), 1.0 / std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(manifold_distance(subspace_a(), v3(1, 2, 1)), 0.0, 1e-15);
    const ManifoldSpec e2 = ManifoldSpec::linear((Matrix(1, 2) << 2, 1).finished());
    EXPECT_NEAR(manifold_distance(e2, v2(2, 1)), std::sqrt(5.0), 1e-14);
    EXPECT_THROW(manifold_distance(e2, v3(1, 1, 1)), Error);
}

TEST(Distance, KernelAndResidualProjectionAgreeOnLinearSystem) {
    const RegisteredProblem rp = registry_problem("example1_standin");
    const ManifoldSpec res = ManifoldSpec::residual(rp.problem.sys, 1.0);
    const ManifoldSpec lin = ManifoldSpec::linear(manifold_operator(rp.problem.sys, 1.0));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const Vector x = v3(d(rng), d(rng), d(rng));
        const DistanceResult r = manifold_distance_detail(res, x);
        EXPECT_FALSE(r.surrogate);
        EXPECT_NEAR(r.distance, manifold_distance(lin, x), 1e-8);
        EXPECT_NEAR(r.distance, manifold_distance(rp.manifold, x), 1e-8);
        EXPECT_NEAR(r.residual_norm, manifold_residual(rp.problem.sys, x, 1.0).norm(), 1e-14);
    }
}

TEST(Distance, NonlinearProjectionOnExample2) {
    const PHSystem sys = registry_system("example2");
    const ManifoldSpec res = ManifoldSpec::residual(sys, 1.0);
    for (const Vector& x : {v2(0.2, 0.1), v2(0.3, -0.2), v2(-0.25, 0.3), v2(0.1, -0.2)}) {
        const DistanceResult r = manifold_distance_detail(res, x);
        EXPECT_FALSE(r.surrogate);
        EXPECT_NEAR(r.distance, std::abs(2 * x(0) + x(1)) / std::sqrt(5.0), 1e-8);
    }
    // g decays like 1/|x| far out, so the iteration runs away and the surrogate is used
    const DistanceResult far = manifold_distance_detail(res, v2(2, 1));
    EXPECT_TRUE(far.surrogate);
    EXPECT_NEAR(far.distance, far.residual_norm, 1e-15);
}

TEST(Distance, DegenerateZeroFallsBackToSurrogate) {
    // g(x) = |x| x / (1 + x^2 / 2) has a degenerate root, so Gauss-Newton only
    // halves the error per iteration.
    const PHSystem sys("degenerate", MatrixField(one(0.0)), detail::expression_field(1, 1, {"x1^2"}, 1), one(1.0),
                       one(1.0));
    ManifoldSpec res = ManifoldSpec::residual(sys, 1.0);
    res.surrogate_constant = 2.0;
    const DistanceResult r = manifold_distance_detail(res, s1(1.0));
    EXPECT_TRUE(r.surrogate);
    EXPECT_NEAR(r.distance, (1.0 / 1.5) / 2.0, 1e-12);
}

TEST(ManifoldConstant, LinearFunctional) {
    const ManifoldConstant c =
        estimate_manifold_constant(subspace_a(), Vector::Constant(3, -3), Vector::Constant(3, 3), 500, 1);
    EXPECT_NEAR(c.min_ratio, std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(c.median_ratio, std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(c.max_ratio, std::sqrt(3.0), 1e-12);
    ASSERT_TRUE(c.singular_value.has_value());
    EXPECT_NEAR(*c.singular_value, std::sqrt(3.0), 1e-12);
    EXPECT_EQ(c.valid_samples + c.excluded_samples, 500);
}

TEST(ManifoldConstant, OnManifoldSamplesAreExcluded) {
    const std::vector<Vector> on{v3(1, 1, 0), v3(0, 1, 1), v3(1, 2, 1)};
    EXPECT_THROW(c_hat_from_states(subspace_a(), on), Error);
    try {
        estimate_manifold_constant(subspace_a(), Vector::Zero(3), Vector::Zero(3), 100);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateSampling);
    }
}

TEST(ManifoldConstant, SingularValueIdentityForRankOneOperator) {
    const RegisteredProblem rp = registry_problem("example1_standin");
    const Matrix k = manifold_operator(rp.problem.sys, 1.0);
    const double sigma = smallest_nonzero_singular_value(k);
    const ManifoldSpec lin = ManifoldSpec::linear(k);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Vector x = v3(d(rng), d(rng), d(rng));
        EXPECT_NEAR((k * x).norm(), sigma * manifold_distance(lin, x), 1e-10);
    }
}

TEST(ManifoldConstant, Example2Box) {
    const RegisteredProblem rp = registry_problem("example2");
    const ManifoldConstant c =
        estimate_manifold_constant(rp.manifold, Vector::Constant(2, -3), Vector::Constant(2, 3), 10000, 0);
    EXPECT_GT(c.c_hat, 0.0);
    EXPECT_LE(c.min_ratio, c.median_ratio);
    EXPECT_LE(c.median_ratio, c.max_ratio);
    EXPECT_FALSE(c.singular_value.has_value());
    // |g| / dist = sqrt(5) r / (3/2 + r^2) with r = (4|x|^2 + 1) / 2
    const double peak = std::sqrt(5.0) / (2.0 * std::sqrt(1.5));
    EXPECT_LE(c.max_ratio, peak + 1e-12);
    EXPECT_NEAR(c.max_ratio, peak, 1e-3);
    const double corner = 36.5 * std::sqrt(5.0) / (1.5 + 36.5 * 36.5);
    EXPECT_GE(c.min_ratio, corner - 1e-12);
}

TEST(DissipationCheck, DdrOptimalTrajectorySatisfiesInequality) {
    const RegisteredProblem rp = registry_problem("example1_standin");
    OCProblem p = rp.problem;
    p.N = 20;
    const OCPSolution sol = solve(p);
    ASSERT_EQ(sol.status, SolveStatus::Converged);
    const double c = c_hat_from_states(rp.manifold, sol.trajectory.states);
    const DissipationReport rep = dissipation_check(sol.trajectory, p.sys, rp.manifold, c);
    EXPECT_TRUE(rep.satisfied);
    for (const DissipationStep& s : rep.steps) EXPECT_GE(s.slack, -1e-9);
    EXPECT_GE(rep.total_slack, -1e-6 * p.N);
    EXPECT_NEAR(rep.total_cost, sol.cost, 1e-12);
}

TEST(DissipationCheck, SummedInequalityOnRandomDdrTrajectories) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d(0.0, 1.0);
    for (const char* name : {"example1_standin", "example2", "scalar_damper"}) {
        const RegisteredProblem rp = registry_problem(name);
        std::vector<Vector> u;
        for (int k = 0; k < 15; ++k) u.push_back(s1(d(rng)));
        const Trajectory t = simulate(rp.problem.sys, rp.problem.x0, u, SchemeKind::DDR, 1.0);
        const double c = c_hat_from_states(rp.manifold, t.states);
        const DissipationReport rep = dissipation_check(t, rp.problem.sys, rp.manifold, c);
        EXPECT_GE(rep.total_cost - rep.total_storage_delta - rep.total_alpha, -1e-6 * 15) << name;
    }
}

TEST(DissipationCheck, ConservativeAutonomousTrajectory) {
    const RegisteredProblem rp = registry_problem("rotation");
    const Trajectory t = simulate(rp.problem.sys, v2(1, 0.5), std::vector<Vector>(10, s1(0.0)), SchemeKind::DDR, 1.0);
    const DissipationReport rep = dissipation_check(t, rp.problem.sys, rp.manifold, 1.0);
    for (const DissipationStep& s : rep.steps) {
        EXPECT_EQ(s.alpha, 0.0);
        EXPECT_NEAR(s.slack, -s.storage_delta, 1e-15);
        EXPECT_TRUE(s.satisfied);
    }
}

TEST(Counterexample, DefaultScalarScenario) {
    const CounterexampleReport r = prop2_counterexample(registry_system("scalar_damper"));
    EXPECT_EQ(r.x0(0), 1.0);
    EXPECT_EQ(r.u(0), -2.0);
    EXPECT_EQ(r.output_norm, 0.0);
    EXPECT_EQ(r.cost, 0.0);
    EXPECT_EQ(r.storage_delta, 0.0);
    EXPECT_DOUBLE_EQ(r.trajectory.energies[0], 0.5);
    EXPECT_NEAR(r.distance, 1.0, 1e-15);
    ASSERT_EQ(r.dissipation.steps.size(), 1u);
    EXPECT_NEAR(r.dissipation.steps[0].slack, -1.0, 1e-15);
    EXPECT_FALSE(r.dissipation.satisfied);
    // the transfer is also what the optimizer finds
    EXPECT_NEAR(solve(r.problem).inputs()[0](0), -2.0, 1e-8);
}

TEST(Counterexample, SlackIsMinusAlphaForAnyConstant) {
    for (double c : {0.1, 1.0, 3.0}) {
        const CounterexampleReport r = prop2_counterexample(registry_system("example1_standin"), 1.0, std::nullopt, c);
        EXPECT_GT(r.distance, 0.0);
        EXPECT_NEAR(r.cost, 0.0, 1e-14);
        EXPECT_NEAR(r.storage_delta, 0.0, 1e-14);
        EXPECT_NEAR(r.dissipation.steps[0].slack, -c * c * r.distance * r.distance, 1e-12);
        EXPECT_FALSE(r.dissipation.satisfied);
    }
}

TEST(Counterexample, RejectedInputs) {
    const PHSystem damper = registry_system("scalar_damper");
    EXPECT_THROW(prop2_counterexample(damper, 1.0, s1(0.0)), Error);
    try {
        prop2_counterexample(registry_system("rotation"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotApplicable);
    }
    EXPECT_THROW(prop2_counterexample(registry_system("example2")), Error);
    // x0 outside the range of B
    EXPECT_THROW(prop2_counterexample(registry_system("example1_standin"), 1.0, v3(1, 0, 0)), Error);
}

TEST(SumTurnpike, Examples) {
    const std::vector<Vector> single{v3(1, 1, 1)};
    EXPECT_NEAR(sum_turnpike_metric(single, subspace_a()), 1.0 / 3.0, 1e-15);
    const std::vector<Vector> on{v3(1, 2, 1), v3(0, 0, 0)};
    EXPECT_EQ(sum_turnpike_metric(on, subspace_a()), 0.0);
    const std::vector<Vector> a{v3(1, 1, 1), v3(0.2, -1, 3)}, b{v3(-2, 0.5, 1)};
    std::vector<Vector> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    EXPECT_NEAR(sum_turnpike_metric(ab, subspace_a()), sum_turnpike_metric(a, subspace_a()) + sum_turnpike_metric(b, subspace_a()),
                1e-14);
}

TEST(SumTurnpike, TrajectoryExcludesFinalState) {
    const PHSystem sys = registry_system("example1_standin");
    const Trajectory t = simulate(sys, v3(1, 1, 1), {s1(0.0)}, SchemeKind::DDR, 1.0);
    EXPECT_NEAR(sum_turnpike_metric(t, subspace_a()), 1.0 / 3.0, 1e-15);
}

TEST(Scan, MiddleThirdWindow) {
    EXPECT_EQ(middle_third(20).first, 7);
    EXPECT_EQ(middle_third(20).last, 13);
    EXPECT_EQ(middle_third(3).first, 1);
    EXPECT_EQ(middle_third(3).last, 2);
}

TEST(Scan, EmptyAndFailingHorizons) {
    const RegisteredProblem rp = registry_problem("scalar_damper");
    const std::vector<int> none;
    EXPECT_TRUE(turnpike_scan(rp.problem, none, rp.manifold).entries.empty());
    OCProblem p = rp.problem;
    p.scheme = SchemeKind::DDR;
    p.x0 = s1(0.0);
    p.xN = s1(0.0);
    const std::vector<int> hs{0, 3};
    const TurnpikeScan scan = turnpike_scan(p, hs, rp.manifold);
    ASSERT_EQ(scan.entries.size(), 2u);
    EXPECT_EQ(scan.entries[0].status, "error");
    EXPECT_FALSE(scan.entries[0].error.empty());
    EXPECT_EQ(scan.entries[1].status, "converged");
}

TEST(Scan, DdrStandinTurnpike) {
    const RegisteredProblem rp = registry_problem("example1_standin");
    const std::vector<int> hs{20, 40, 80};
    const TurnpikeScan scan = turnpike_scan(rp.problem, hs, rp.manifold);
    ASSERT_EQ(scan.entries.size(), 3u);
    double prev = std::numeric_limits<double>::infinity();
    for (const ScanEntry& e : scan.entries) {
        EXPECT_EQ(e.status, "converged");
        EXPECT_GE(e.sum_metric, 0.0);
        EXPECT_LE(e.middle_max_distance, e.max_distance);
        EXPECT_LE(e.middle_max_distance, prev * 1.05);
        prev = e.middle_max_distance;
        ASSERT_TRUE(e.certificate.has_value());
        EXPECT_LE(std::abs(e.certificate->transient_cost - e.certificate->cost), 1e-9);
        EXPECT_LE(e.cost, e.certificate->cost + 1e-8);
    }
    const double lo = std::min({scan.entries[0].sum_metric, scan.entries[1].sum_metric, scan.entries[2].sum_metric});
    const double hi = std::max({scan.entries[0].sum_metric, scan.entries[1].sum_metric, scan.entries[2].sum_metric});
    EXPECT_LT((hi - lo) / lo, 0.1);
}

}  // namespace
