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
#ifndef PHDISS_CONFIG_IO_HPP
#define PHDISS_CONFIG_IO_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phdiss/registry.hpp"

namespace phdiss {

using Json = nlohmann::ordered_json;

struct SamplingBox {
    Vector lo;
    Vector hi;
};

struct DiagnosticsConfig {
    std::optional<ManifoldSpec> manifold;
    SamplingBox sampling_box;
    int samples = 1000;
    std::vector<int> horizons;
    std::optional<double> c_hat;
    std::optional<std::string> trajectory_csv;  // resolved against the problem file directory
    std::uint64_t seed = 0;
};

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json"};
};

/// Everything a problem file describes.
struct ProblemFile {
    std::string system_name;
    bool from_registry = false;
    OCProblem problem;
    std::optional<std::vector<Vector>> inputs;
    DiagnosticsConfig diagnostics;
    OutputConfig output;
};

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::SchemaError, "at " + (path.empty() ? std::string("/") : path) + ": " + what);
}

inline const Json& require_key(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) schema_error(path + "/" + key, "missing required key");
    return *it;
}

inline const Json* optional_key(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known, const std::string& path) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) schema_error(path + "/" + key, "unknown key");
    }
}

inline double read_number(const Json& j, const std::string& path) {
    if (!j.is_number()) schema_error(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) schema_error(path, "expected a finite number");
    return v;
}

inline int read_int(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) schema_error(path, "expected an integer");
    return j.get<int>();
}

inline std::string read_string(const Json& j, const std::string& path) {
    if (!j.is_string()) schema_error(path, "expected a string");
    return j.get<std::string>();
}

inline Vector read_vector(const Json& j, const std::string& path, std::optional<int> size = std::nullopt) {
    if (!j.is_array()) schema_error(path, "expected an array of numbers");
    if (size && static_cast<int>(j.size()) != *size) {
        schema_error(path, "expected " + std::to_string(*size) + " entries, got " + std::to_string(j.size()));
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_number(j[i], path + "/" + std::to_string(i));
    return v;
}

/// Scalar bounds broadcast to every channel.
inline Vector read_bound(const Json& j, const std::string& path, int m) {
    if (j.is_number()) return Vector::Constant(m, read_number(j, path));
    return read_vector(j, path, m);
}

/// Nested rows of numbers or expression strings.
inline std::vector<std::vector<Expression>> read_entries(const Json& j, const std::string& path, int n_vars) {
    if (!j.is_array() || j.empty()) schema_error(path, "expected a nonempty array of rows");
    std::vector<std::vector<Expression>> rows;
    for (std::size_t r = 0; r < j.size(); ++r) {
        const std::string rp = path + "/" + std::to_string(r);
        if (!j[r].is_array()) schema_error(rp, "expected a row array");
        if (j[r].size() != j[0].size()) schema_error(rp, "rows have different lengths");
        std::vector<Expression> row;
        for (std::size_t c = 0; c < j[r].size(); ++c) {
            const std::string cp = rp + "/" + std::to_string(c);
            const Json& e = j[r][c];
            if (e.is_number()) {
                row.push_back(Expression::constant(read_number(e, cp)));
            } else if (e.is_string()) {
                try {
                    row.push_back(parse_expression(e.get<std::string>(), n_vars));
                } catch (const Error& err) {
                    throw Error(err.code(), "at " + cp + ": " + err.what());
                }
            } else {
                schema_error(cp, "expected a number or an expression string");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::pair<Eigen::Index, Eigen::Index> shape(const std::vector<std::vector<Expression>>& rows) {
    return {static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size())};
}

inline Matrix constant_matrix(const std::vector<std::vector<Expression>>& rows, const std::string& path) {
    const auto [nr, nc] = shape(rows);
    Matrix m(nr, nc);
    const std::vector<double> none;
    for (Eigen::Index r = 0; r < nr; ++r) {
        for (Eigen::Index c = 0; c < nc; ++c) {
            const Expression& e = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (!e.is_constant()) schema_error(path + "/" + std::to_string(r) + "/" + std::to_string(c), "entry must be constant");
            m(r, c) = e.evaluate(none);
        }
    }
    return m;
}

inline MatrixField field(const std::vector<std::vector<Expression>>& rows, int n) {
    const auto [nr, nc] = shape(rows);
    std::vector<Expression> flat;
    for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
    return MatrixField(nr, nc, std::move(flat), n);
}

inline PHSystem read_inline_system(const Json& j, const std::string& path) {
    reject_unknown(j, {"name", "J", "R", "Q", "B"}, path);
    const std::string name = optional_key(j, "name", path) ? read_string(j["name"], path + "/name") : "inline";
    const auto q_rows = read_entries(require_key(j, "Q", path), path + "/Q", 0);
    const Matrix q = constant_matrix(q_rows, path + "/Q");
    const int n = static_cast<int>(q.rows());
    if (q.cols() != n) schema_error(path + "/Q", "Q must be square");
    auto square = [&](const char* key) {
        const auto rows = read_entries(require_key(j, key, path), path + "/" + key, n);
        const auto [nr, nc] = shape(rows);
        if (nr != n || nc != n) {
            schema_error(path + "/" + key, std::string(key) + " must be " + std::to_string(n) + " x " + std::to_string(n) +
                                               ", got " + std::to_string(nr) + " x " + std::to_string(nc));
        }
        return field(rows, n);
    };
    MatrixField jf = square("J");
    MatrixField rf = square("R");
    const Json& bj = require_key(j, "B", path);
    Matrix b;
    if (bj.is_array() && !bj.empty() && bj[0].is_number()) {
        b = read_vector(bj, path + "/B");  // a single input column
    } else {
        b = constant_matrix(read_entries(bj, path + "/B", 0), path + "/B");
    }
    if (b.rows() != n) {
        schema_error(path + "/B", "B must have " + std::to_string(n) + " rows, got " + std::to_string(b.rows()));
    }
    PHSystem sys(name, std::move(jf), std::move(rf), q, b);
    const auto samples = default_validation_samples(n);
    validate_system(sys, samples).throw_if_failed();
    return sys;
}

inline SolverOptions read_solver(const Json& j, const std::string& path, SolverOptions opt) {
    reject_unknown(j, {"max_outer", "max_inner", "starts", "seed", "terminal_tolerance", "stationarity_tolerance",
                       "penalty_initial", "penalty_factor"},
                   path);
    if (auto* v = optional_key(j, "max_outer", path)) opt.max_outer = read_int(*v, path + "/max_outer");
    if (auto* v = optional_key(j, "max_inner", path)) opt.max_inner = read_int(*v, path + "/max_inner");
    if (auto* v = optional_key(j, "starts", path)) opt.starts = read_int(*v, path + "/starts");
    if (auto* v = optional_key(j, "seed", path)) opt.seed = static_cast<std::uint64_t>(read_int(*v, path + "/seed"));
    if (auto* v = optional_key(j, "terminal_tolerance", path)) opt.terminal_tolerance = read_number(*v, path + "/terminal_tolerance");
    if (auto* v = optional_key(j, "stationarity_tolerance", path)) {
        opt.stationarity_tolerance = read_number(*v, path + "/stationarity_tolerance");
    }
    if (auto* v = optional_key(j, "penalty_initial", path)) opt.penalty_initial = read_number(*v, path + "/penalty_initial");
    if (auto* v = optional_key(j, "penalty_factor", path)) opt.penalty_factor = read_number(*v, path + "/penalty_factor");
    if (opt.max_outer < 1 || opt.max_inner < 1 || opt.starts < 1) schema_error(path, "iteration counts must be positive");
    return opt;
}

}  // namespace detail

/// Builds a problem from a parsed JSON tree. `base_dir` resolves relative paths.
inline ProblemFile parse_problem(const Json& root, const std::filesystem::path& base_dir = {}) {
    using namespace detail;
    if (!root.is_object()) schema_error("", "expected an object");
    reject_unknown(root, {"system", "ocp", "diagnostics", "output"}, "");
    ProblemFile pf;
    const Json& sj = require_key(root, "system", "");
    std::optional<RegisteredProblem> reg;
    if (sj.is_string() || (sj.is_object() && sj.contains("registry"))) {
        const std::string name = sj.is_string() ? sj.get<std::string>() : read_string(sj["registry"], "/system/registry");
        if (sj.is_object()) reject_unknown(sj, {"registry"}, "/system");
        try {
            reg = registry_problem(name);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::UnknownIdentifier) schema_error("/system", e.what());
            throw;
        }
        pf.from_registry = true;
        pf.system_name = name;
        pf.problem = reg->problem;
    } else if (sj.is_object()) {
        PHSystem sys = read_inline_system(sj, "/system");
        pf.system_name = sys.name();
        pf.problem.sys = std::move(sys);
        pf.problem.u_min = Vector::Constant(pf.problem.sys.m(), -kDefaultInputBound);
        pf.problem.u_max = Vector::Constant(pf.problem.sys.m(), kDefaultInputBound);
    } else {
        schema_error("/system", "expected a registry name or an object with J, R, Q, B");
    }
    const int n = pf.problem.sys.n();
    const int m = pf.problem.sys.m();
    OCProblem& p = pf.problem;

    const Json empty = Json::object();
    const Json* oj = optional_key(root, "ocp", "");
    if (!oj && !reg) schema_error("/ocp", "missing required key");
    const Json& o = oj ? *oj : empty;
    const std::string op = "/ocp";
    reject_unknown(o, {"scheme", "N", "h", "x0", "xN", "u_min", "u_max", "solver", "inputs"}, op);
    if (auto* v = optional_key(o, "scheme", op)) {
        try {
            p.scheme = parse_scheme(read_string(*v, op + "/scheme"));
        } catch (const Error& e) {
            schema_error(op + "/scheme", e.what());
        }
    }
    if (auto* v = optional_key(o, "N", op)) p.N = read_int(*v, op + "/N");
    if (auto* v = optional_key(o, "h", op)) p.h = read_number(*v, op + "/h");
    if (!reg) {
        require_key(o, "N", op);
        require_key(o, "x0", op);
        require_key(o, "xN", op);
    }
    if (auto* v = optional_key(o, "x0", op)) p.x0 = read_vector(*v, op + "/x0", n);
    if (auto* v = optional_key(o, "xN", op)) p.xN = read_vector(*v, op + "/xN", n);
    if (auto* v = optional_key(o, "u_min", op)) p.u_min = read_bound(*v, op + "/u_min", m);
    if (auto* v = optional_key(o, "u_max", op)) p.u_max = read_bound(*v, op + "/u_max", m);
    if (auto* v = optional_key(o, "solver", op)) p.options = read_solver(*v, op + "/solver", p.options);
    if (auto* v = optional_key(o, "inputs", op)) {
        if (!v->is_array()) schema_error(op + "/inputs", "expected an array of inputs");
        std::vector<Vector> u;
        for (std::size_t k = 0; k < v->size(); ++k) {
            const std::string kp = op + "/inputs/" + std::to_string(k);
            u.push_back((*v)[k].is_number() ? Vector::Constant(1, read_number((*v)[k], kp)) : read_vector((*v)[k], kp, m));
            if ((*v)[k].is_number() && m != 1) schema_error(kp, "expected " + std::to_string(m) + " entries");
        }
        pf.inputs = std::move(u);
    }
    if (p.N < 1) schema_error(op + "/N", "horizon must be at least 1");
    if (!(p.h > 0.0)) schema_error(op + "/h", "step size must be positive");
    for (int i = 0; i < m; ++i) {
        if (!(p.u_min(i) <= p.u_max(i))) schema_error(op + "/u_min", "u_min exceeds u_max");
    }

    DiagnosticsConfig& d = pf.diagnostics;
    if (reg) {
        d.manifold = reg->manifold;
        d.sampling_box = {reg->sampling_lo, reg->sampling_hi};
    } else {
        d.sampling_box = {Vector::Constant(n, -3.0), Vector::Constant(n, 3.0)};
    }
    if (const Json* dj = optional_key(root, "diagnostics", "")) {
        const std::string dp = "/diagnostics";
        reject_unknown(*dj, {"manifold", "sampling_box", "samples", "horizons", "c_hat", "trajectory_csv", "seed"}, dp);
        if (auto* v = optional_key(*dj, "manifold", dp)) {
            const std::string mp = dp + "/manifold";
            reject_unknown(*v, {"kind", "G"}, mp);
            const std::string kind = read_string(require_key(*v, "kind", mp), mp + "/kind");
            if (kind == "linear") {
                const auto rows = read_entries(require_key(*v, "G", mp), mp + "/G", 0);
                const Matrix g = constant_matrix(rows, mp + "/G");
                if (g.cols() != n) schema_error(mp + "/G", "G must have " + std::to_string(n) + " columns");
                d.manifold = ManifoldSpec::linear(g, p.sys, p.h);
            } else if (kind == "residual") {
                d.manifold = ManifoldSpec::residual(p.sys, p.h);
            } else {
                schema_error(mp + "/kind", "expected 'linear' or 'residual'");
            }
        }
        if (auto* v = optional_key(*dj, "sampling_box", dp)) {
            reject_unknown(*v, {"lo", "hi"}, dp + "/sampling_box");
            d.sampling_box.lo = read_vector(require_key(*v, "lo", dp + "/sampling_box"), dp + "/sampling_box/lo", n);
            d.sampling_box.hi = read_vector(require_key(*v, "hi", dp + "/sampling_box"), dp + "/sampling_box/hi", n);
        }
        if (auto* v = optional_key(*dj, "samples", dp)) d.samples = read_int(*v, dp + "/samples");
        if (auto* v = optional_key(*dj, "horizons", dp)) {
            if (!v->is_array()) schema_error(dp + "/horizons", "expected an array of integers");
            for (std::size_t i = 0; i < v->size(); ++i) {
                const int hz = read_int((*v)[i], dp + "/horizons/" + std::to_string(i));
                if (hz < 1) schema_error(dp + "/horizons/" + std::to_string(i), "horizon must be at least 1");
                d.horizons.push_back(hz);
            }
        }
        if (auto* v = optional_key(*dj, "c_hat", dp)) d.c_hat = read_number(*v, dp + "/c_hat");
        if (auto* v = optional_key(*dj, "seed", dp)) d.seed = static_cast<std::uint64_t>(read_int(*v, dp + "/seed"));
        if (auto* v = optional_key(*dj, "trajectory_csv", dp)) {
            const std::filesystem::path tp = read_string(*v, dp + "/trajectory_csv");
            d.trajectory_csv = (tp.is_absolute() || base_dir.empty() ? tp : base_dir / tp).string();
        }
    }
    if (d.manifold && d.manifold->system) {
        // keep the manifold in sync with the problem's system and step size
        d.manifold->system = p.sys;
        d.manifold->h = p.h;
    }
    if (const Json* out = optional_key(root, "output", "")) {
        reject_unknown(*out, {"directory", "formats"}, "/output");
        if (auto* v = optional_key(*out, "directory", "/output")) pf.output.directory = read_string(*v, "/output/directory");
        if (auto* v = optional_key(*out, "formats", "/output")) {
            if (!v->is_array()) schema_error("/output/formats", "expected an array of strings");
            pf.output.formats.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const std::string f = read_string((*v)[i], "/output/formats/" + std::to_string(i));
                if (f != "csv" && f != "json") schema_error("/output/formats/" + std::to_string(i), "expected 'csv' or 'json'");
                pf.output.formats.push_back(f);
            }
        }
    }
    if (p.scheme == SchemeKind::DDR && m != 1) schema_error("/ocp/scheme", "ddr needs a single-input system");
    return pf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoError, "cannot read '" + path.string() + "'");
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

inline ProblemFile load_problem(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_problem(root, path.parent_path());
}

// ---------------------------------------------------------------------------
// Serialization

inline Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
    return a;
}

inline Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
    return a;
}

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const MatrixField& f) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < f.cols(); ++c) {
            if (f.is_constant()) {
                row.push_back(f.constant_value()(r, c));
            } else {
                const Expression e = f.entry(r, c);
                row.push_back(e.is_constant() ? Json(e.evaluate(std::vector<double>{})) : Json(e.to_string()));
            }
        }
        a.push_back(std::move(row));
    }
    return a;
}

inline Json system_to_json(const PHSystem& sys) {
    Json j;
    j["name"] = sys.name();
    j["J"] = to_json(sys.j_field());
    j["R"] = to_json(sys.r_field());
    j["Q"] = to_json(sys.Q());
    j["B"] = to_json(sys.B());
    return j;
}

/// Problem file text for a problem; registry systems are written by name.
inline Json problem_to_json(const ProblemFile& pf) {
    Json root;
    root["system"] = pf.from_registry ? Json(pf.system_name) : system_to_json(pf.problem.sys);
    const OCProblem& p = pf.problem;
    Json o;
    o["scheme"] = std::string(to_string(p.scheme));
    o["N"] = p.N;
    o["h"] = p.h;
    o["x0"] = to_json(p.x0);
    o["xN"] = to_json(p.xN);
    o["u_min"] = to_json(p.u_min);
    o["u_max"] = to_json(p.u_max);
    Json s;
    s["max_outer"] = p.options.max_outer;
    s["max_inner"] = p.options.max_inner;
    s["starts"] = p.options.starts;
    s["seed"] = p.options.seed;
    s["terminal_tolerance"] = p.options.terminal_tolerance;
    s["stationarity_tolerance"] = p.options.stationarity_tolerance;
    s["penalty_initial"] = p.options.penalty_initial;
    s["penalty_factor"] = p.options.penalty_factor;
    o["solver"] = s;
    if (pf.inputs) {
        Json u = Json::array();
        for (const Vector& v : *pf.inputs) u.push_back(to_json(v));
        o["inputs"] = u;
    }
    root["ocp"] = o;
    const DiagnosticsConfig& d = pf.diagnostics;
    Json dj;
    if (d.manifold) {
        Json mj;
        if (d.manifold->kind == ManifoldSpec::Kind::LinearKernel) {
            mj["kind"] = "linear";
            mj["G"] = to_json(d.manifold->G);
        } else {
            mj["kind"] = "residual";
        }
        dj["manifold"] = mj;
    }
    dj["sampling_box"] = Json{{"lo", to_json(d.sampling_box.lo)}, {"hi", to_json(d.sampling_box.hi)}};
    dj["samples"] = d.samples;
    dj["horizons"] = d.horizons;
    if (d.c_hat) dj["c_hat"] = *d.c_hat;
    if (d.trajectory_csv) dj["trajectory_csv"] = *d.trajectory_csv;
    dj["seed"] = d.seed;
    root["diagnostics"] = dj;
    root["output"] = Json{{"directory", pf.output.directory}, {"formats", pf.output.formats}};
    return root;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline void write_report_json(const Json& report, const std::filesystem::path& path) {
    write_text_file(path, dump_json(report));
}

inline Json to_json(const Trajectory& t) {
    Json j;
    j["scheme"] = std::string(to_string(t.scheme));
    j["h"] = t.h;
    j["N"] = t.horizon();
    Json states = Json::array(), inputs = Json::array();
    for (const Vector& x : t.states) states.push_back(to_json(x));
    for (const Vector& u : t.inputs) inputs.push_back(to_json(u));
    j["states"] = states;
    j["inputs"] = inputs;
    return j;
}

inline Json to_json(const OCPSolution& s) {
    Json j;
    j["status"] = std::string(to_string(s.status));
    j["cost"] = number(s.cost);
    j["terminal_defect"] = number(s.terminal_defect);
    j["kkt_residual"] = number(s.kkt_residual);
    j["outer_iterations"] = s.outer_iterations;
    j["inner_iterations"] = s.inner_iterations;
    j["start_index"] = s.start_index;
    j["starts_tried"] = s.starts_tried;
    j["trajectory"] = to_json(s.trajectory);
    return j;
}

inline Json to_json(const DissipationReport& r) {
    Json j;
    j["alpha"] = Json{{"form", "h*c_hat^2*s^2"}, {"c_hat", number(r.c_hat)}, {"h", r.h}};
    j["storage"] = "H";
    j["verdict"] = std::string(verdict(r.satisfied));
    j["violations"] = r.violations();
    Json steps = Json::array();
    for (const DissipationStep& s : r.steps) {
        Json e;
        e["k"] = s.k;
        e["stage_cost"] = number(s.stage_cost);
        e["storage_delta"] = number(s.storage_delta);
        e["distance"] = number(s.distance);
        e["alpha"] = number(s.alpha);
        e["slack"] = number(s.slack);
        e["verdict"] = std::string(verdict(s.satisfied));
        e["surrogate_distance"] = s.surrogate;
        steps.push_back(std::move(e));
    }
    j["steps"] = steps;
    j["summed"] = Json{{"stage_cost", number(r.total_cost)},
                       {"storage_delta", number(r.total_storage_delta)},
                       {"alpha", number(r.total_alpha)},
                       {"slack", number(r.total_slack)}};
    return j;
}

inline Json to_json(const CounterexampleReport& r) {
    Json j;
    j["scheme"] = "midpoint";
    j["N"] = 1;
    j["h"] = r.problem.h;
    j["x0"] = to_json(r.x0);
    j["xN"] = to_json(r.xN);
    j["u"] = to_json(r.u);
    j["output_norm"] = number(r.output_norm);
    j["cost"] = number(r.cost);
    j["storage_delta"] = number(r.storage_delta);
    j["distance_x0"] = number(r.distance);
    j["verdict"] = std::string(verdict(r.dissipation.satisfied));
    j["dissipation"] = to_json(r.dissipation);
    return j;
}

inline Json to_json(const SteadyState& s) {
    Json j;
    j["x_bar"] = to_json(s.x_bar);
    j["u_bar"] = to_json(s.u_bar);
    j["cost"] = number(s.cost);
    j["residual"] = number(s.residual);
    j["dissipation"] = number(s.dissipation);
    j["identity_gap"] = number(s.identity_gap);
    j["zero_cost"] = s.zero_cost;
    j["membership_residual"] = number(s.membership_residual);
    return j;
}

inline Json to_json(const SteadyStateSearch& s) {
    Json j;
    Json acc = Json::array();
    for (const SteadyState& a : s.accepted) acc.push_back(to_json(a));
    j["accepted"] = acc;
    j["failures"] = s.failures;
    return j;
}

inline Json to_json(const ManifoldConstant& c) {
    Json j;
    j["c_hat"] = number(c.c_hat);
    j["min_ratio"] = number(c.min_ratio);
    j["median_ratio"] = number(c.median_ratio);
    j["max_ratio"] = number(c.max_ratio);
    j["valid_samples"] = c.valid_samples;
    j["excluded_samples"] = c.excluded_samples;
    j["singular_value"] = c.singular_value ? number(*c.singular_value) : Json(nullptr);
    return j;
}

inline Json to_json(const TurnpikeScan& s) {
    Json j;
    j["scheme"] = std::string(to_string(s.scheme));
    j["distance_x0"] = number(s.distance_x0);
    Json hs = Json::array();
    for (const ScanEntry& e : s.entries) {
        Json h;
        h["N"] = e.N;
        h["status"] = e.status;
        if (!e.error.empty()) h["error"] = e.error;
        h["cost"] = number(e.cost);
        h["terminal_defect"] = number(e.terminal_defect);
        h["sum_turnpike_metric"] = number(e.sum_metric);
        h["middle_third_max_distance"] = number(e.middle_max_distance);
        h["max_distance"] = number(e.max_distance);
        h["max_state_norm"] = number(e.max_state_norm);
        if (e.certificate) {
            const WarmStartCertificate& c = *e.certificate;
            h["warm_start"] = Json{{"x_bar", to_json(c.x_bar)},      {"u_bar", to_json(c.u_bar)},
                                   {"k1", c.k1},                     {"k2", c.k2},
                                   {"transient_cost", number(c.transient_cost)}, {"cost", number(c.cost)}};
        } else {
            h["warm_start"] = nullptr;
        }
        hs.push_back(std::move(h));
    }
    j["horizons"] = hs;
    return j;
}

// ---------------------------------------------------------------------------
// CSV

/// 17 significant digits, '.' decimal separator regardless of locale.
inline std::string csv_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Columns k, x1..xn, u (u1..um), Y (Y1..Ym), H, dist, stage_cost,
/// energy_residual. Input-side cells are empty on the final row.
inline std::string trajectory_csv(const Trajectory& t, const PHSystem& sys, const std::optional<ManifoldSpec>& manifold) {
    const int n = sys.n(), m = sys.m();
    std::string out = "k";
    for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
    if (m == 1) {
        out += ",u,Y";
    } else {
        for (int i = 1; i <= m; ++i) out += ",u" + std::to_string(i);
        for (int i = 1; i <= m; ++i) out += ",Y" + std::to_string(i);
    }
    out += ",H,dist,stage_cost,energy_residual\n";
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        const bool step = k < t.inputs.size();
        const Vector& x = t.states[k];
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (!std::isfinite(x(i))) throw Error(ErrorCode::InvalidArgument, "trajectory state is not finite");
        }
        out += std::to_string(k);
        for (int i = 0; i < n; ++i) out += "," + csv_number(x(i));
        for (int i = 0; i < m; ++i) out += "," + (step ? csv_number(t.inputs[k](i)) : std::string());
        for (int i = 0; i < m; ++i) out += "," + (step ? csv_number(t.outputs[k](i)) : std::string());
        out += "," + csv_number(hamiltonian(sys, x));
        out += "," + (manifold ? csv_number(manifold_distance(*manifold, x)) : std::string());
        out += "," + (step ? csv_number(t.stage_costs[k]) : std::string());
        out += "," + (step ? csv_number(t.residuals[k]) : std::string());
        out += "\n";
    }
    return out;
}

inline void write_trajectory_csv(const Trajectory& t, const PHSystem& sys, const std::optional<ManifoldSpec>& manifold,
                                 const std::filesystem::path& path) {
    write_text_file(path, trajectory_csv(t, sys, manifold));
}

/// Per-step dissipation table.
inline std::string dissipation_csv(const DissipationReport& r) {
    std::string out = "k,stage_cost,storage_delta,dist,alpha,slack,verdict\n";
    for (const DissipationStep& s : r.steps) {
        out += std::to_string(s.k) + "," + csv_number(s.stage_cost) + "," + csv_number(s.storage_delta) + "," +
               csv_number(s.distance) + "," + csv_number(s.alpha) + "," + csv_number(s.slack) + "," +
               std::string(verdict(s.satisfied)) + "\n";
    }
    return out;
}

/// A trajectory table read back from CSV.
struct TrajectoryTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

inline TrajectoryTable parse_csv_table(const std::string& text, const std::string& source) {
    TrajectoryTable t;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t pos = s.find(',', start);
            cells.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return cells;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (t.header.empty()) {
            t.header = split(line);
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::SchemaError, source + ":" + std::to_string(line_no) + ": expected " +
                                                    std::to_string(t.header.size()) + " cells");
        }
        std::vector<std::optional<double>> row;
        for (const std::string& c : cells) {
            if (c.empty()) {
                row.emplace_back();
                continue;
            }
            double v = 0.0;
            const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
                throw Error(ErrorCode::SchemaError, source + ":" + std::to_string(line_no) + ": bad number '" + c + "'");
            }
            row.emplace_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw Error(ErrorCode::SchemaError, source + ": empty CSV");
    return t;
}

/// Rebuilds states, inputs, outputs and stage costs from a trajectory CSV.
inline Trajectory read_trajectory_csv(const std::filesystem::path& path, int n, int m, SchemeKind scheme, double h) {
    const std::string source = path.string();
    const TrajectoryTable t = parse_csv_table(read_text_file(path), source);
    auto col = [&](const std::string& name) {
        const int c = t.column(name);
        if (c < 0) throw Error(ErrorCode::SchemaError, source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(c);
    };
    std::vector<std::size_t> xc, uc, yc;
    for (int i = 1; i <= n; ++i) xc.push_back(col("x" + std::to_string(i)));
    for (int i = 1; i <= m; ++i) uc.push_back(col(m == 1 ? "u" : "u" + std::to_string(i)));
    for (int i = 1; i <= m; ++i) yc.push_back(col(m == 1 ? "Y" : "Y" + std::to_string(i)));
    const std::size_t hc = col("H"), lc = col("stage_cost"), rc = col("energy_residual");
    Trajectory tr;
    tr.scheme = scheme;
    tr.h = h;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto need = [&](std::size_t c) {
            if (!row[c]) {
                throw Error(ErrorCode::SchemaError, source + ": row " + std::to_string(r) + " lacks '" + t.header[c] + "'");
            }
            return *row[c];
        };
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = need(xc[static_cast<std::size_t>(i)]);
        tr.states.push_back(x);
        tr.energies.push_back(need(hc));
        if (r + 1 == t.rows.size()) break;
        Vector u(m), y(m);
        for (int i = 0; i < m; ++i) {
            u(i) = need(uc[static_cast<std::size_t>(i)]);
            y(i) = need(yc[static_cast<std::size_t>(i)]);
        }
        tr.inputs.push_back(u);
        tr.outputs.push_back(y);
        tr.stage_costs.push_back(need(lc));
        tr.dissipated.push_back(0.0);
        tr.residuals.push_back(need(rc));
    }
    if (tr.states.empty()) throw Error(ErrorCode::SchemaError, source + ": no rows");
    return tr;
}

}  // namespace phdiss

#endif  // PHDISS_CONFIG_IO_HPP
