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
#include <clocale>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "phdiss/config_io.hpp"

namespace {

using namespace phdiss;
namespace fs = std::filesystem;

const fs::path kProblems = fs::path(PHDISS_SOURCE_DIR) / "problems";

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::path(PHDISS_BINARY_DIR) / "test_scratch" / "config_io";
    fs::create_directories(dir);
    return dir / name;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidArgument;
}

TEST(LoadProblem, RegistryStandin) {
    const ProblemFile pf = parse_problem(Json::parse(R"({"system": "example1_standin"})"));
    EXPECT_TRUE(pf.from_registry);
    EXPECT_EQ(pf.problem.sys.n(), 3);
    EXPECT_EQ(pf.problem.sys.m(), 1);
    EXPECT_EQ(pf.problem.u_max(0), 50.0);
    EXPECT_EQ(pf.problem.u_min(0), -50.0);
    EXPECT_EQ(pf.problem.x0, (Vector(3) << 1, 1, 1).finished());
    EXPECT_EQ(pf.problem.xN, (Vector(3) << -1.2, -0.7, -1).finished());
}

TEST(LoadProblem, RegistryExample2) {
    const ProblemFile pf = load_problem(kProblems / "example2.json");
    EXPECT_EQ(pf.problem.sys.n(), 2);
    for (const Vector& x : default_validation_samples(2)) {
        const StructurePair p = structure_pair(pf.problem.sys, x);
        const double s = 4.0 * x.squaredNorm() + 1.0;
        EXPECT_NEAR(p.jminus(0, 0), 1.0 + 0.25 * s * s, 1e-12 * s * s);
    }
    EXPECT_EQ(pf.problem.x0, (Vector(2) << 2, 1).finished());
    EXPECT_EQ(pf.problem.xN, (Vector(2) << 1, 1).finished());
    EXPECT_EQ(pf.diagnostics.samples, 10000);
}

TEST(LoadProblem, AllShippedProblemsLoad) {
    for (const auto& entry : fs::directory_iterator(kProblems)) {
        if (entry.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_problem(entry.path())) << entry.path();
    }
}

TEST(LoadProblem, InlineExpressionSystem) {
    const ProblemFile pf = load_problem(kProblems / "oscillator_expression.json");
    EXPECT_FALSE(pf.problem.sys.r_field().is_constant());
    ASSERT_TRUE(pf.inputs.has_value());
}

TEST(LoadProblem, WrongShapedInputMatrix) {
    const Json j = Json::parse(R"({"system": {"J": [[0, 1], [-1, 0]], "R": [[0, 0], [0, 1]], "Q": [[1, 0], [0, 1]],
                                              "B": [[1], [0], [0]]}})");
    EXPECT_EQ(code_of([&] { parse_problem(j); }), ErrorCode::SchemaError);
}

TEST(LoadProblem, SchemaErrorsNameThePath) {
    const Json j = Json::parse(R"({"system": "example2", "ocp": {"N": "ten"}})");
    try {
        parse_problem(j);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaError);
        EXPECT_NE(std::string(e.what()).find("/ocp/N"), std::string::npos) << e.what();
    }
    EXPECT_EQ(code_of([] { parse_problem(Json::parse(R"({"system": "example2", "extra": 1})")); }),
              ErrorCode::SchemaError);
    EXPECT_EQ(code_of([] { parse_problem(Json::parse(R"({"system": "nope"})")); }), ErrorCode::SchemaError);
    EXPECT_EQ(code_of([] { parse_problem(Json::parse(R"({"system": "example2", "ocp": {"x0": [1, 2, 3]}})")); }),
              ErrorCode::SchemaError);
}

TEST(LoadProblem, ExpressionErrorsAreRejected) {
    const Json j = Json::parse(R"({"system": {"J": [[0]], "R": [["x0^2"]], "Q": [[1]], "B": [[1]]}})");
    EXPECT_THROW(parse_problem(j), Error);
}

TEST(LoadProblem, MalformedJsonAndMissingFile) {
    const fs::path bad = scratch("malformed.json");
    write_text_file(bad, "{\"system\": ");
    EXPECT_EQ(code_of([&] { load_problem(bad); }), ErrorCode::SchemaError);
    EXPECT_EQ(code_of([] { load_problem(scratch("does_not_exist.json")); }), ErrorCode::IoError);
}

TEST(LoadProblem, InlineRoundTripIsIdempotent) {
    const ProblemFile a = load_problem(kProblems / "scalar_damper.json");
    const Json ja = problem_to_json(a);
    const ProblemFile b = parse_problem(ja, kProblems);
    EXPECT_EQ(dump_json(ja), dump_json(problem_to_json(b)));
    EXPECT_EQ(b.problem.sys.Q(), a.problem.sys.Q());
    EXPECT_EQ(b.problem.x0, a.problem.x0);
    EXPECT_EQ(b.problem.N, a.problem.N);
    EXPECT_EQ(b.problem.scheme, a.problem.scheme);

    const ProblemFile c = load_problem(kProblems / "oscillator_expression.json");
    const ProblemFile d = parse_problem(problem_to_json(c), kProblems);
    EXPECT_EQ(dump_json(problem_to_json(c)), dump_json(problem_to_json(d)));
}

TEST(Csv, SingleStateHasTwoLines) {
    const PHSystem sys = registry_system("example2");
    const Trajectory t = simulate(sys, (Vector(2) << 2, 1).finished(), {}, SchemeKind::DDR, 1.0);
    const std::string csv = trajectory_csv(t, sys, std::nullopt);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,x1,x2,u,Y,H,dist,stage_cost,energy_residual");
}

TEST(Csv, RoundTripIsExact) {
    const RegisteredProblem rp = registry_problem("example2");
    std::vector<Vector> u;
    for (int k = 0; k < 12; ++k) u.push_back(Vector::Constant(1, std::sin(0.7 * k) / 3.0));
    const Trajectory t = simulate(rp.problem.sys, rp.problem.x0, u, SchemeKind::DDR, 1.0);
    const fs::path p = scratch("roundtrip.csv");
    write_trajectory_csv(t, rp.problem.sys, rp.manifold, p);
    const Trajectory r = read_trajectory_csv(p, 2, 1, SchemeKind::DDR, 1.0);
    ASSERT_EQ(r.states.size(), t.states.size());
    ASSERT_EQ(r.inputs.size(), t.inputs.size());
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        EXPECT_EQ(r.states[k], t.states[k]);
        EXPECT_EQ(r.energies[k], t.energies[k]);
    }
    for (std::size_t k = 0; k < t.inputs.size(); ++k) {
        EXPECT_EQ(r.inputs[k], t.inputs[k]);
        EXPECT_EQ(r.outputs[k], t.outputs[k]);
        EXPECT_EQ(r.stage_costs[k], t.stage_costs[k]);
        EXPECT_EQ(r.residuals[k], t.residuals[k]);
    }
    // byte-deterministic
    EXPECT_EQ(read_text_file(p), trajectory_csv(t, rp.problem.sys, rp.manifold));
}

TEST(Csv, Example2DistanceColumn) {
    const RegisteredProblem rp = registry_problem("example2");
    std::vector<Vector> u(8, Vector::Constant(1, -0.4));
    const Trajectory t = simulate(rp.problem.sys, rp.problem.x0, u, SchemeKind::DDR, 1.0);
    const TrajectoryTable tab = parse_csv_table(trajectory_csv(t, rp.problem.sys, rp.manifold), "mem");
    const int x1 = tab.column("x1"), x2 = tab.column("x2"), dist = tab.column("dist");
    ASSERT_EQ(tab.rows.size(), 9u);
    for (const auto& row : tab.rows) {
        EXPECT_NEAR(*row[dist], std::abs(2 * *row[x1] + *row[x2]) / std::sqrt(5.0), 1e-14);
    }
}

TEST(Csv, LocaleIndependent) {
    const PHSystem sys = registry_system("scalar_damper");
    const Trajectory t = simulate(sys, Vector::Constant(1, 0.125), {Vector::Constant(1, 1.5)}, SchemeKind::Midpoint, 1.0);
    const std::string before = trajectory_csv(t, sys, std::nullopt);
    const char* old = std::setlocale(LC_ALL, nullptr);
    const std::string saved = old ? old : "C";
    bool switched = false;
    for (const char* loc : {"de_DE.UTF-8", "de_DE.utf8", "fr_FR.UTF-8", "C.UTF-8"}) {
        if (std::setlocale(LC_ALL, loc)) {
            switched = true;
            break;
        }
    }
    const std::string after = trajectory_csv(t, sys, std::nullopt);
    std::setlocale(LC_ALL, saved.c_str());
    EXPECT_EQ(before, after) << "locale switched: " << switched;
    EXPECT_NE(before.find("0.125"), std::string::npos);
    EXPECT_EQ(csv_number(0.1), "0.10000000000000001");
}

TEST(Csv, MalformedCsvIsRejected) {
    EXPECT_EQ(code_of([] { parse_csv_table("k,x1\n0,abc\n", "mem"); }), ErrorCode::SchemaError);
    EXPECT_EQ(code_of([] { parse_csv_table("k,x1\n0\n", "mem"); }), ErrorCode::SchemaError);
    EXPECT_EQ(code_of([] { parse_csv_table("", "mem"); }), ErrorCode::SchemaError);
}

TEST(JsonReports, EmptyScan) {
    const RegisteredProblem rp = registry_problem("scalar_damper");
    const std::vector<int> none;
    const Json j = Json::parse(dump_json(to_json(turnpike_scan(rp.problem, none, rp.manifold))));
    ASSERT_TRUE(j.contains("horizons"));
    EXPECT_TRUE(j["horizons"].is_array());
    EXPECT_TRUE(j["horizons"].empty());
}

TEST(JsonReports, CounterexampleVerdict) {
    const Json j = to_json(prop2_counterexample(registry_system("scalar_damper")));
    EXPECT_EQ(j["verdict"], "violated");
    EXPECT_EQ(j["dissipation"]["steps"][0]["k"], 0);
    EXPECT_EQ(j["dissipation"]["steps"][0]["verdict"], "violated");
}

TEST(JsonReports, SolutionFieldsAndStableOrder) {
    const ProblemFile pf = load_problem(kProblems / "scalar_damper.json");
    const OCPSolution s = solve(pf.problem);
    const Json j = to_json(s);
    for (const char* key : {"status", "cost", "terminal_defect"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j.begin().key(), "status");
    EXPECT_EQ(dump_json(j), dump_json(to_json(solve(pf.problem))));
    const fs::path p = scratch("solution.json");
    write_report_json(j, p);
    EXPECT_EQ(Json::parse(read_text_file(p)), j);
}

TEST(JsonReports, WriteToMissingDirectoryIsIoError) {
    EXPECT_EQ(code_of([] { write_text_file("/proc/phdiss/denied/out.json", "{}"); }), ErrorCode::IoError);
}

}  // namespace
