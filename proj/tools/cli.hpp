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
#ifndef PHDISS_TOOLS_CLI_HPP
#define PHDISS_TOOLS_CLI_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phdiss/phdiss.hpp"

namespace phdiss::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kNoConvergence = 3, kIo = 4 };

enum Sub : unsigned {
    kSimulate = 1u << 0,
    kSolve = 1u << 1,
    kSteady = 1u << 2,
    kScan = 1u << 3,
    kCheck = 1u << 4,
    kOracle = 1u << 5,
    kCounterexample = 1u << 6,
    kAll = 0x7f,
};

struct SubcommandSpec {
    Sub id;
    const char* name;
    const char* help;
};

inline constexpr std::array<SubcommandSpec, 7> kSubcommands{{
    {kSimulate, "simulate", "Simulate ocp.inputs (zeros if absent) and write trajectory.csv"},
    {kSolve, "solve", "Solve the energy-optimal transfer and write trajectory.csv and solution.json"},
    {kSteady, "steady", "Search steady states of the DDR and write steady_states.json"},
    {kScan, "scan", "Solve over several horizons and write turnpike metrics to scan.json"},
    {kCheck, "check", "Check the dissipation inequality on a supplied or solved trajectory"},
    {kOracle, "oracle", "Enumerate an input grid and write the best sequence to oracle.json"},
    {kCounterexample, "counterexample", "Run the one-step midpoint counterexample"},
}};

enum class Flag { Problem, Scheme, Horizon, StepSize, Horizons, Seed, Out, Grid, Tolerance };

struct FlagSpec {
    Flag id;
    const char* names;
    const char* help;
    unsigned subcommands;
};

/// Every flag the tool accepts; --help output is generated from this table.
inline constexpr std::array<FlagSpec, 9> kFlags{{
    {Flag::Problem, "--problem", "Problem file (JSON)", kAll},
    {Flag::Scheme, "--scheme", "Discretization: midpoint or ddr", kSimulate | kSolve | kScan | kCheck | kOracle},
    {Flag::Horizon, "-N", "Horizon override", kSimulate | kSolve | kCheck | kOracle},
    {Flag::StepSize, "--h", "Step size override", kAll},
    {Flag::Horizons, "--horizons", "Comma-separated horizons for scan", kScan},
    {Flag::Seed, "--seed", "Seed for multi-starts and sampling (default 0)", kAll},
    {Flag::Out, "--out", "Output directory (default from the problem file, else out)", kAll},
    {Flag::Grid, "--grid", "Grid points per input channel (default 21)", kOracle},
    {Flag::Tolerance, "--tolerance", "Terminal tolerance of the oracle (default 1e-6)", kOracle},
}};

struct Invocation {
    std::string subcommand;
    std::optional<std::string> problem;
    std::optional<std::string> scheme;
    std::optional<int> N;
    std::optional<double> h;
    std::vector<int> horizons;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    int grid = 21;
    double tolerance = 1e-6;
};

inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

/// Collects written files and emits manifest.json at the end of a run.
class RunContext {
public:
    RunContext(const Invocation& inv, std::filesystem::path out_dir) : inv_(inv), out_(std::move(out_dir)) {}

    const std::filesystem::path& out_dir() const noexcept { return out_; }

    void write(const std::string& file, const std::string& text) {
        write_text_file(out_ / file, text);
        outputs_.push_back({file, fnv1a_hex(text)});
    }

    void add_input(const std::string& role, const std::filesystem::path& path) {
        inputs_.push_back({role, path.string(), fnv1a_hex(read_text_file(path))});
    }

    void set_seeds(std::uint64_t solver, std::uint64_t diagnostics) {
        seeds_ = Json{{"solver", solver}, {"diagnostics", diagnostics}};
    }

    void finish(int exit_code) {
        Json m;
        m["tool"] = "phdiss";
        m["version"] = kVersion;
        m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                     std::to_string(EIGEN_MINOR_VERSION);
        m["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                             std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                             std::to_string(NLOHMANN_JSON_VERSION_PATCH);
        m["subcommand"] = inv_.subcommand;
        Json args;
        if (inv_.problem) args["problem"] = *inv_.problem;
        if (inv_.scheme) args["scheme"] = *inv_.scheme;
        if (inv_.N) args["N"] = *inv_.N;
        if (inv_.h) args["h"] = *inv_.h;
        if (!inv_.horizons.empty()) args["horizons"] = inv_.horizons;
        if (inv_.seed) args["seed"] = *inv_.seed;
        if (inv_.subcommand == "oracle") {
            args["grid"] = inv_.grid;
            args["tolerance"] = inv_.tolerance;
        }
        m["arguments"] = args.is_null() ? Json::object() : args;
        Json ins = Json::array();
        for (const auto& in : inputs_) ins.push_back(Json{{"role", in.role}, {"path", in.path}, {"fnv1a64", in.hash}});
        m["inputs"] = ins;
        m["seeds"] = seeds_.is_null() ? Json::object() : seeds_;
        Json outs = Json::array();
        for (const auto& o : outputs_) outs.push_back(Json{{"file", o.file}, {"fnv1a64", o.hash}});
        m["outputs"] = outs;
        m["exit_code"] = exit_code;
        write_text_file(out_ / "manifest.json", dump_json(m));
    }

private:
    struct Input {
        std::string role, path, hash;
    };
    struct Output {
        std::string file, hash;
    };
    const Invocation& inv_;
    std::filesystem::path out_;
    std::vector<Input> inputs_;
    std::vector<Output> outputs_;
    Json seeds_;
};

inline int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::IoError: return kIo;
    case ErrorCode::NewtonDivergence:
    case ErrorCode::SingularJacobian:
    case ErrorCode::QuadratureFailure:
    case ErrorCode::NoFeasibleGridPoint: return kNoConvergence;
    default: return kValidation;
    }
}

namespace detail {

inline bool wants(const ProblemFile& pf, std::string_view format) {
    return std::find(pf.output.formats.begin(), pf.output.formats.end(), format) != pf.output.formats.end();
}

inline void apply_overrides(const Invocation& inv, ProblemFile& pf) {
    OCProblem& p = pf.problem;
    if (inv.scheme) p.scheme = parse_scheme(*inv.scheme);
    if (inv.N) {
        if (*inv.N < 1) throw Error(ErrorCode::InvalidArgument, "-N must be at least 1");
        p.N = *inv.N;
    }
    if (inv.h) {
        if (!(*inv.h > 0.0)) throw Error(ErrorCode::InvalidArgument, "--h must be positive");
        p.h = *inv.h;
        if (pf.diagnostics.manifold) pf.diagnostics.manifold->h = p.h;
    }
    if (inv.seed) {
        p.options.seed = *inv.seed;
        pf.diagnostics.seed = *inv.seed;
    }
    p.validate();
}

inline std::optional<ManifoldSpec> manifold_of(const ProblemFile& pf) {
    if (pf.diagnostics.manifold) return pf.diagnostics.manifold;
    return ManifoldSpec::residual(pf.problem.sys, pf.problem.h);
}

inline int status_exit(SolveStatus s) { return s == SolveStatus::Converged ? kOk : kNoConvergence; }

inline int run_simulate(const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    const OCProblem& p = pf.problem;
    std::vector<Vector> inputs = pf.inputs.value_or(std::vector<Vector>(static_cast<std::size_t>(p.N), Vector::Zero(p.sys.m())));
    if (static_cast<int>(inputs.size()) != p.N) {
        throw Error(ErrorCode::DimensionMismatch, "ocp.inputs has " + std::to_string(inputs.size()) + " entries, N = " +
                                                      std::to_string(p.N));
    }
    const Trajectory t = simulate(p.sys, p.x0, inputs, p.scheme, p.h);
    if (wants(pf, "csv")) ctx.write("trajectory.csv", trajectory_csv(t, p.sys, manifold_of(pf)));
    double worst = 0.0;
    for (double r : t.residuals) worst = std::max(worst, r);
    out << "simulated " << t.horizon() << " steps, cost " << t.total_cost() << ", max energy residual " << worst << "\n";
    return kOk;
}

inline int run_solve(const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    const OCProblem& p = pf.problem;
    const OCPSolution sol = solve(p);
    if (wants(pf, "csv")) ctx.write("trajectory.csv", trajectory_csv(sol.trajectory, p.sys, manifold_of(pf)));
    if (wants(pf, "json")) ctx.write("solution.json", dump_json(to_json(sol)));
    out << "status " << to_string(sol.status) << ", cost " << sol.cost << ", terminal defect " << sol.terminal_defect << "\n";
    return status_exit(sol.status);
}

inline int run_steady(const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    SteadyStateOptions opt;
    opt.seed = pf.diagnostics.seed;
    const SteadyStateSearch s = steady_state_solve(pf.problem.sys, pf.problem.h, opt);
    if (wants(pf, "json")) ctx.write("steady_states.json", dump_json(to_json(s)));
    out << s.accepted.size() << " steady states accepted, " << s.failures.size() << " starts failed\n";
    return s.accepted.empty() ? kNoConvergence : kOk;
}

inline int run_scan(const Invocation& inv, const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    const std::vector<int> horizons = inv.horizons.empty() ? pf.diagnostics.horizons : inv.horizons;
    if (horizons.empty()) throw Error(ErrorCode::InvalidArgument, "scan needs --horizons or diagnostics.horizons");
    for (int hz : horizons) {
        if (hz < 1) throw Error(ErrorCode::InvalidArgument, "horizons must be at least 1");
    }
    const TurnpikeScan scan = turnpike_scan(pf.problem, horizons, *manifold_of(pf));
    if (wants(pf, "json")) ctx.write("scan.json", dump_json(to_json(scan)));
    bool all = true;
    for (const ScanEntry& e : scan.entries) {
        out << "N = " << e.N << ": " << e.status << ", sum dist^2 " << e.sum_metric << ", middle-third max distance "
            << e.middle_max_distance << "\n";
        all = all && e.status == "converged";
    }
    return all ? kOk : kNoConvergence;
}

inline int run_check(const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    const OCProblem& p = pf.problem;
    const ManifoldSpec manifold = *manifold_of(pf);
    Trajectory t;
    int code = kOk;
    if (pf.diagnostics.trajectory_csv) {
        ctx.add_input("trajectory_csv", *pf.diagnostics.trajectory_csv);
        t = read_trajectory_csv(*pf.diagnostics.trajectory_csv, p.sys.n(), p.sys.m(), p.scheme, p.h);
    } else {
        const OCPSolution sol = solve(p);
        t = sol.trajectory;
        code = status_exit(sol.status);
    }
    Json report;
    double c_hat = 0.0;
    if (pf.diagnostics.c_hat) {
        c_hat = *pf.diagnostics.c_hat;
        report["c_hat_source"] = "problem file";
    } else {
        const ManifoldConstant c = estimate_manifold_constant(manifold, pf.diagnostics.sampling_box.lo,
                                                              pf.diagnostics.sampling_box.hi, pf.diagnostics.samples,
                                                              pf.diagnostics.seed);
        c_hat = c.c_hat;
        report["c_hat_source"] = "sampled";
        report["manifold_constant"] = to_json(c);
    }
    const DissipationReport rep = dissipation_check(t, p.sys, manifold, c_hat);
    report["dissipation"] = to_json(rep);
    if (wants(pf, "json")) ctx.write("dissipation.json", dump_json(report));
    if (wants(pf, "csv")) ctx.write("dissipation.csv", dissipation_csv(rep));
    out << "c_hat " << c_hat << ", verdict " << verdict(rep.satisfied) << " (" << rep.violations() << " violated steps)\n";
    return code;
}

inline int run_oracle(const Invocation& inv, const ProblemFile& pf, RunContext& ctx, std::ostream& out) {
    const OCPSolution sol = brute_force_oracle(pf.problem, inv.grid, inv.tolerance);
    if (wants(pf, "json")) {
        Json j = to_json(sol);
        j["grid_points_per_channel"] = inv.grid;
        j["terminal_tolerance"] = inv.tolerance;
        ctx.write("oracle.json", dump_json(j));
    }
    out << "oracle cost " << sol.cost << ", terminal defect " << sol.terminal_defect << "\n";
    return kOk;
}

inline int run_counterexample(const Invocation& inv, const std::optional<ProblemFile>& pf, RunContext& ctx,
                              std::ostream& out) {
    const PHSystem sys = pf ? pf->problem.sys : registry_system("scalar_damper");
    const double h = inv.h.value_or(pf ? pf->problem.h : 1.0);
    const double c_hat = pf && pf->diagnostics.c_hat ? *pf->diagnostics.c_hat : 1.0;
    const CounterexampleReport rep = prop2_counterexample(sys, h, std::nullopt, c_hat);
    if (!pf || wants(*pf, "json")) ctx.write("counterexample.json", dump_json(to_json(rep)));
    out << "cost " << rep.cost << ", storage change " << rep.storage_delta << ", distance " << rep.distance
        << ", verdict " << verdict(rep.dissipation.satisfied) << "\n";
    return kOk;
}

}  // namespace detail

inline void add_flags(CLI::App& sub, unsigned id, Invocation& inv) {
    for (const FlagSpec& f : kFlags) {
        if (!(f.subcommands & id)) continue;
        switch (f.id) {
        case Flag::Problem: sub.add_option(f.names, inv.problem, f.help); break;
        case Flag::Scheme:
            sub.add_option(f.names, inv.scheme, f.help)->check(CLI::IsMember({"midpoint", "ddr"}));
            break;
        case Flag::Horizon: sub.add_option(f.names, inv.N, f.help); break;
        case Flag::StepSize: sub.add_option(f.names, inv.h, f.help); break;
        case Flag::Horizons: sub.add_option(f.names, inv.horizons, f.help)->delimiter(','); break;
        case Flag::Seed: sub.add_option(f.names, inv.seed, f.help); break;
        case Flag::Out: sub.add_option(f.names, inv.out, f.help); break;
        case Flag::Grid: sub.add_option(f.names, inv.grid, f.help)->check(CLI::PositiveNumber); break;
        case Flag::Tolerance: sub.add_option(f.names, inv.tolerance, f.help)->check(CLI::PositiveNumber); break;
        }
    }
}

/// Runs one invocation; args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Invocation inv;
    CLI::App app{"Discrete-time port-Hamiltonian simulation, optimal control and dissipativity diagnostics", "phdiss"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
    app.set_version_flag("--version", kVersion);
    for (const SubcommandSpec& s : kSubcommands) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_flags(*sub, s.id, inv);
        sub->callback([&inv, name = s.name] { inv.subcommand = name; });
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }
    if (inv.subcommand.empty()) {
        // help on a subcommand is reported through the parent
        for (CLI::App* sub : app.get_subcommands()) {
            if (sub->count("--help")) {
                out << sub->help();
                return kOk;
            }
        }
        return kValidation;
    }

    std::optional<ProblemFile> pf;
    std::filesystem::path out_dir = inv.out.value_or("out");
    try {
        if (inv.problem) {
            pf = load_problem(*inv.problem);
            if (!inv.out) out_dir = pf->output.directory;
        } else if (inv.subcommand != "counterexample") {
            throw Error(ErrorCode::InvalidArgument, inv.subcommand + " needs --problem");
        }
        if (pf) detail::apply_overrides(inv, *pf);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    }

    RunContext ctx(inv, out_dir);
    int code = kOk;
    try {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
        if (pf) {
            ctx.add_input("problem", *inv.problem);
            ctx.set_seeds(pf->problem.options.seed, pf->diagnostics.seed);
        } else {
            ctx.set_seeds(inv.seed.value_or(0), inv.seed.value_or(0));
        }
        const std::string& s = inv.subcommand;
        if (s == "simulate") code = detail::run_simulate(*pf, ctx, out);
        else if (s == "solve") code = detail::run_solve(*pf, ctx, out);
        else if (s == "steady") code = detail::run_steady(*pf, ctx, out);
        else if (s == "scan") code = detail::run_scan(inv, *pf, ctx, out);
        else if (s == "check") code = detail::run_check(*pf, ctx, out);
        else if (s == "oracle") code = detail::run_oracle(inv, *pf, ctx, out);
        else code = detail::run_counterexample(inv, pf, ctx, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        code = exit_code_for(e.code());
    }
    try {
        ctx.finish(code);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        if (code == kOk) code = kIo;
    }
    if (code == kNoConvergence) err << "error: solver did not converge\n";
    return code;
}

}  // namespace phdiss::cli

#endif  // PHDISS_TOOLS_CLI_HPP
