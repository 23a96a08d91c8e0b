#pragma once

// Batch front end: JSON run configuration, pipeline orchestration, and
// deterministic artifact emission.
//
// A run is described by a JSON config with sections {link, grids, selection,
// solver, stability, seed} and a command name. Every command writes a
// summary.json echoing the normalized config plus its own results; table
// artifacts (spectrum.csv, u_field.csv, residual.csv, stability.json) are
// written next to it. All floating point output uses 17 significant digits,
// nothing embeds timestamps or machine state, and every pipeline runs a fixed
// reduction order, so re-running a command byte-reproduces its artifacts.
//
// Exit protocol: 0 on success, 1 on configuration problems (no artifacts are
// written), 2 on numerical failure (an error.json record is written).

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "conelab/picard.hpp"
#include "conelab/stability.hpp"

namespace conelab {

struct SolverSection {
    double lambda = 0.01;
    std::string psi_type = "first_high";            // "first_high" or "modes"
    std::vector<std::pair<int, double>> psi_modes;  // used when psi_type == "modes"
    double tol_fixed_point = 1e-8;
    int max_iter = 50;
    int contraction_window = 5;
    std::vector<double> lambda_list = {0.0, 0.005, 0.01, 0.02};
};

struct StabilitySection {
    int battery_modes = 20;
    int hardy_samples = 50;
    int hardy_band = 12;
};

struct RunConfig {
    int p = 2, q = 1;
    WorkspaceConfig grids;
    SolverSection solver;
    StabilitySection stability;
    std::uint32_t seed = 12345;
};

// Parsed command line of one batch invocation.
struct RunManifest {
    std::string command;
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;  // empty disables caching
    int threads = 1;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) known = true;
        require(known, ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
    }
}

inline double json_number(const json& obj, const std::string& where, const char* key,
                          double fallback) {
    if (!obj.contains(key)) return fallback;
    require(obj[key].is_number(), ErrorCode::ConfigError, where + "." + key + " must be a number");
    return obj[key].get<double>();
}

inline int json_int(const json& obj, const std::string& where, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    require(obj[key].is_number_integer(), ErrorCode::ConfigError,
            where + "." + key + " must be an integer");
    return obj[key].get<int>();
}

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::ConfigError, "cannot open artifact for writing: " + path.string());
    out << text;
    out.flush();
    require(out.good(), ErrorCode::ConfigError, "failed writing artifact: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::ConfigError, "cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string spectrum_csv(const std::vector<Mode>& modes) {
    std::string out = "k,l,parity,mu,re_gamma_plus,im_gamma_plus\n";
    for (const Mode& m : modes) {
        out += std::to_string(m.k) + ',' + std::to_string(m.l) + ',' + std::to_string(m.parity) +
               ',' + format17(m.mu) + ',' + format17(m.gamma_plus.real()) + ',' +
               format17(m.gamma_plus.imag()) + '\n';
    }
    return out;
}

inline std::string field_csv(const Workspace& ws, const Eigen::MatrixXd& values,
                             const char* column) {
    std::string out = std::string("t,theta1,theta2,") + column + "\n";
    out.reserve(out.size() + static_cast<std::size_t>(values.size()) * 80);
    for (int i = 0; i < ws.radial.count(); ++i) {
        const std::string t = format17(ws.radial.t[static_cast<std::size_t>(i)]);
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1) {
            const std::string th1 = format17(ws.angular.theta1(i1));
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2) {
                out += t + ',' + th1 + ',' + format17(ws.angular.theta2(i2)) + ',' +
                       format17(values(i, ws.angular.index(i1, i2))) + '\n';
            }
        }
    }
    return out;
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["link"] = {{"p", c.p}, {"q", c.q}};
    j["grids"] = {{"t_min", c.grids.t_min},
                  {"radial_nodes", c.grids.radial_nodes},
                  {"angular_nodes1", c.grids.angular_nodes1},
                  {"angular_nodes2", c.grids.angular_nodes2}};
    j["selection"] = {{"mode_budget", c.grids.mode_budget}, {"epsilon", c.grids.epsilon}};
    if (c.grids.m_requested) j["selection"]["weight_threshold"] = *c.grids.m_requested;
    nlohmann::json psi;
    psi["type"] = c.solver.psi_type;
    if (c.solver.psi_type == "modes") {
        psi["entries"] = nlohmann::json::array();
        for (const auto& [index, value] : c.solver.psi_modes)
            psi["entries"].push_back({{"index", index}, {"value", value}});
    }
    j["solver"] = {{"lambda", c.solver.lambda},
                   {"psi", psi},
                   {"tol_fixed_point", c.solver.tol_fixed_point},
                   {"max_iter", c.solver.max_iter},
                   {"contraction_window", c.solver.contraction_window},
                   {"lambda_list", c.solver.lambda_list}};
    j["stability"] = {{"battery_modes", c.stability.battery_modes},
                      {"hardy_samples", c.stability.hardy_samples},
                      {"hardy_band", c.stability.hardy_band}};
    j["seed"] = c.seed;
    return j;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::json_int;
    using detail::json_number;
    require(j.is_object(), ErrorCode::ConfigError, "config root must be a JSON object");
    detail::check_keys(j, "config",
                       {"link", "grids", "selection", "solver", "stability", "seed"});
    RunConfig c;
    if (j.contains("link")) {
        const auto& link = j["link"];
        require(link.is_object(), ErrorCode::ConfigError, "link section must be an object");
        detail::check_keys(link, "link", {"p", "q"});
        c.p = json_int(link, "link", "p", c.p);
        c.q = json_int(link, "link", "q", c.q);
        require(c.p >= 1 && c.q >= 1, ErrorCode::ConfigError, "link.p and link.q must be >= 1");
    }
    if (j.contains("grids")) {
        const auto& g = j["grids"];
        require(g.is_object(), ErrorCode::ConfigError, "grids section must be an object");
        detail::check_keys(g, "grids", {"t_min", "radial_nodes", "angular_nodes1", "angular_nodes2"});
        c.grids.t_min = json_number(g, "grids", "t_min", c.grids.t_min);
        c.grids.radial_nodes = json_int(g, "grids", "radial_nodes", c.grids.radial_nodes);
        c.grids.angular_nodes1 = json_int(g, "grids", "angular_nodes1", c.grids.angular_nodes1);
        c.grids.angular_nodes2 = json_int(g, "grids", "angular_nodes2", c.grids.angular_nodes2);
    }
    if (j.contains("selection")) {
        const auto& s = j["selection"];
        require(s.is_object(), ErrorCode::ConfigError, "selection section must be an object");
        detail::check_keys(s, "selection", {"mode_budget", "epsilon", "weight_threshold"});
        c.grids.mode_budget = json_int(s, "selection", "mode_budget", c.grids.mode_budget);
        c.grids.epsilon = json_number(s, "selection", "epsilon", c.grids.epsilon);
        if (s.contains("weight_threshold"))
            c.grids.m_requested = json_number(s, "selection", "weight_threshold", 0.0);
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        require(s.is_object(), ErrorCode::ConfigError, "solver section must be an object");
        detail::check_keys(s, "solver",
                           {"lambda", "psi", "tol_fixed_point", "max_iter", "contraction_window",
                            "lambda_list"});
        c.solver.lambda = json_number(s, "solver", "lambda", c.solver.lambda);
        c.solver.tol_fixed_point =
            json_number(s, "solver", "tol_fixed_point", c.solver.tol_fixed_point);
        c.solver.max_iter = json_int(s, "solver", "max_iter", c.solver.max_iter);
        c.solver.contraction_window =
            json_int(s, "solver", "contraction_window", c.solver.contraction_window);
        if (s.contains("psi")) {
            const auto& psi = s["psi"];
            require(psi.is_object(), ErrorCode::ConfigError, "solver.psi must be an object");
            detail::check_keys(psi, "solver.psi", {"type", "entries"});
            require(psi.contains("type") && psi["type"].is_string(), ErrorCode::ConfigError,
                    "solver.psi.type must be a string");
            c.solver.psi_type = psi["type"].get<std::string>();
            require(c.solver.psi_type == "first_high" || c.solver.psi_type == "modes",
                    ErrorCode::ConfigError, "solver.psi.type must be 'first_high' or 'modes'");
            if (c.solver.psi_type == "modes") {
                require(psi.contains("entries") && psi["entries"].is_array(),
                        ErrorCode::ConfigError, "solver.psi.entries must be an array");
                for (const auto& entry : psi["entries"]) {
                    require(entry.is_object(), ErrorCode::ConfigError,
                            "solver.psi.entries must hold objects");
                    detail::check_keys(entry, "solver.psi.entries[]", {"index", "value"});
                    c.solver.psi_modes.emplace_back(
                        json_int(entry, "solver.psi.entries[]", "index", -1),
                        json_number(entry, "solver.psi.entries[]", "value", 0.0));
                }
                require(!c.solver.psi_modes.empty(), ErrorCode::ConfigError,
                        "solver.psi.entries must not be empty");
            }
        }
        if (s.contains("lambda_list")) {
            require(s["lambda_list"].is_array(), ErrorCode::ConfigError,
                    "solver.lambda_list must be an array of numbers");
            c.solver.lambda_list.clear();
            for (const auto& v : s["lambda_list"]) {
                require(v.is_number(), ErrorCode::ConfigError,
                        "solver.lambda_list must be an array of numbers");
                c.solver.lambda_list.push_back(v.get<double>());
            }
        }
    }
    if (j.contains("stability")) {
        const auto& s = j["stability"];
        require(s.is_object(), ErrorCode::ConfigError, "stability section must be an object");
        detail::check_keys(s, "stability", {"battery_modes", "hardy_samples", "hardy_band"});
        c.stability.battery_modes =
            json_int(s, "stability", "battery_modes", c.stability.battery_modes);
        c.stability.hardy_samples =
            json_int(s, "stability", "hardy_samples", c.stability.hardy_samples);
        c.stability.hardy_band = json_int(s, "stability", "hardy_band", c.stability.hardy_band);
        require(c.stability.battery_modes >= 1 && c.stability.hardy_samples >= 1 &&
                    c.stability.hardy_band >= 1,
                ErrorCode::ConfigError, "stability counts must be >= 1");
    }
    if (j.contains("seed")) {
        require(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0,
                ErrorCode::ConfigError, "seed must be a nonnegative integer");
        c.seed = static_cast<std::uint32_t>(j["seed"].get<long long>());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    require(in.good(), ErrorCode::ConfigError, "cannot open config file: " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

namespace detail {

inline SolverConfig solver_config_for(const Workspace& ws, const RunConfig& cfg) {
    SolverConfig sc;
    sc.lambda = cfg.solver.lambda;
    sc.tol_fixed_point = cfg.solver.tol_fixed_point;
    sc.max_iter = cfg.solver.max_iter;
    sc.contraction_window = cfg.solver.contraction_window;
    sc.psi = Eigen::VectorXd::Zero(ws.n_modes());
    if (cfg.solver.psi_type == "first_high") {
        require(ws.selection.J < ws.n_modes(), ErrorCode::ConfigError,
                "selection retains no mode above the weight threshold");
        sc.psi(ws.selection.J) = 1.0;
    } else {
        for (const auto& [index, value] : cfg.solver.psi_modes) {
            require(index >= 0 && index < ws.n_modes(), ErrorCode::ConfigError,
                    "psi mode index outside the retained basis");
            sc.psi(index) = value;
        }
    }
    return sc;
}

inline json diagnostics_json(const Diagnostics& d) {
    json out;
    out["iterations"] = d.iterations;
    out["final_update_norm"] = d.final_update_norm;
    out["window_ratio"] = d.window_ratio;
    out["embedded_residual"] = d.embedded_residual;
    out["contraction_ratios"] = d.contraction_ratios;
    out["prop1_ratio"] = d.prop1_ratio;
    out["prop2_ratio"] = d.prop2_ratio;
    return out;
}

// Cone principal curvature calibration: the multiset at u = 0 must be
// {0, lambda_i / t}; reported as the sup of |t kappa - expected| over nodes.
inline double cone_curvature_deviation(const Workspace& ws) {
    const EmbeddedGraph g = embed_graph(ws, make_zero_field(ws));
    std::vector<double> expected;
    expected.push_back(0.0);
    for (int r = 0; r < ws.link.p; ++r) expected.push_back(ws.link.lambda1());
    for (int r = 0; r < ws.link.q; ++r) expected.push_back(ws.link.lambda2());
    std::sort(expected.begin(), expected.end());
    double dev = 0.0;
    scan_graph_curvatures(g, [&](int i, const Eigen::MatrixXd& kappa) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        for (int a = 0; a < kappa.rows(); ++a) {
            Eigen::VectorXd row = t * kappa.row(a).transpose();
            std::sort(row.data(), row.data() + row.size());
            for (int c = 0; c < row.size(); ++c)
                dev = std::max(dev, std::abs(row(c) - expected[static_cast<std::size_t>(c)]));
        }
    });
    return dev;
}

// Agreement of the two Jacobi operator evaluations on a seeded band-limited
// field, normalized by the sup of the divergence form.
inline double jacobi_form_gap(const Workspace& ws, std::uint32_t seed) {
    std::mt19937 rng(seed);
    ConeField u = random_test_field(ws, rng, std::min(8, ws.n_modes()));
    u.profiles = field_coefficients(ws, u);
    u.has_profiles = true;
    const ConeField spectral = jacobi_apply(ws, u, JacobiForm::Spectral);
    const ConeField divergence = jacobi_apply(ws, u, JacobiForm::Divergence);
    const double scale = divergence.values.cwiseAbs().maxCoeff();
    require(scale > 0.0, ErrorCode::ZeroDenominator, "seeded verification field vanished");
    return (spectral.values - divergence.values).cwiseAbs().maxCoeff() / scale;
}

}  // namespace detail

// Executes one batch command. Returns the process exit code (0 or 2); throws
// Error for configuration and numerical failures that abort the pipeline.
inline int run_command(const RunManifest& m) {
    namespace fs = std::filesystem;
    using detail::format17;
    using nlohmann::json;
    require(m.threads >= 1, ErrorCode::ConfigError, "--threads must be >= 1");
    require(!m.out_dir.empty(), ErrorCode::ConfigError, "an output directory is required");
    const RunConfig cfg = load_run_config(m.config_path);

    json summary;
    summary["command"] = m.command;
    summary["config"] = config_to_json(cfg);
    summary["threads"] = m.threads;

    const auto emit = [&](const fs::path& name, const std::string& text) {
        std::error_code ec;
        fs::create_directories(m.out_dir, ec);
        require(!ec, ErrorCode::ConfigError, "cannot create output directory: " + m.out_dir.string());
        detail::write_file(m.out_dir / name, text);
    };
    const auto emit_summary = [&] { emit("summary.json", summary.dump(2) + "\n"); };

    if (m.command == "link") {
        const CliffordLink link = solve_scalar_flat_radii(cfg.p, cfg.q);
        const CurvatureInvariants inv = invariants(link);
        summary["link"] = {{"p", link.p},          {"q", link.q},
                           {"a1", link.a1},        {"a2", link.a2},
                           {"sigma", link.sigma},  {"lambda1", link.lambda1()},
                           {"lambda2", link.lambda2()}};
        summary["invariants"] = {{"S1", inv.S1}, {"S2", inv.S2}, {"S3", inv.S3},
                                 {"S4", inv.S4}, {"P2", inv.P2}, {"P3", inv.P3},
                                 {"P4", inv.P4}};
        emit_summary();
        return 0;
    }

    const Workspace ws = make_workspace(cfg.p, cfg.q, cfg.grids);
    summary["selection"] = {{"weight_threshold", ws.selection.m},
                            {"low_modes", ws.selection.J},
                            {"retained_modes", ws.n_modes()}};

    if (m.command == "spectrum") {
        std::string table;
        bool cache_hit = false;
        fs::path cache_file;
        if (!m.cache_dir.empty()) {
            cache_file = m.cache_dir / ("spectrum_p" + std::to_string(cfg.p) + "_q" +
                                        std::to_string(cfg.q) + "_b" +
                                        std::to_string(cfg.grids.mode_budget) + ".csv");
            if (fs::exists(cache_file)) {
                table = detail::read_file(cache_file);
                cache_hit = true;
            }
        }
        if (!cache_hit) {
            table = detail::spectrum_csv(ws.basis.modes);
            if (!cache_file.empty()) {
                std::error_code ec;
                fs::create_directories(m.cache_dir, ec);
                require(!ec, ErrorCode::ConfigError,
                        "cannot create cache directory: " + m.cache_dir.string());
                detail::write_file(cache_file, table);
            }
        }
        emit("spectrum.csv", table);
        summary["cache_hit"] = cache_hit;
        summary["rows"] = ws.n_modes();
        emit_summary();
        return 0;
    }

    if (m.command == "solve-linear") {
        const SolverConfig sc = detail::solver_config_for(ws, cfg);
        const ConeField u = picard_step(ws, make_zero_field(ws), sc);
        emit("u_field.csv", detail::field_csv(ws, u.values, "u"));
        summary["lambda"] = sc.lambda;
        summary["norms"] = {{"global", global_norm(ws, u, ws.selection.m)},
                            {"decay_sup", decay_sup(ws, u, ws.selection.m, ws.selection.epsilon)}};
        emit_summary();
        return 0;
    }

    if (m.command == "solve-graph") {
        const SolverConfig sc = detail::solver_config_for(ws, cfg);
        Diagnostics diag;
        const ConeField u = solve_graph(ws, sc, &diag);
        emit("u_field.csv", detail::field_csv(ws, u.values, "u"));
        const EmbeddedGraph g = embed_graph(ws, u);
        const SymmetricFields fields = symmetric_functions_field(g);
        Eigen::MatrixXd residual(ws.radial.count(), ws.angular.size());
        for (int i = 0; i < ws.radial.count(); ++i) {
            const double t = ws.radial.t[static_cast<std::size_t>(i)];
            residual.row(i) = (t * t * t) * fields.s2.row(i);
        }
        emit("residual.csv", detail::field_csv(ws, residual, "weighted_s2"));
        summary["lambda"] = sc.lambda;
        summary["converged"] = true;
        summary["diagnostics"] = detail::diagnostics_json(diag);
        emit_summary();
        return 0;
    }

    if (m.command == "verify") {
        // Radial stencils are second order, angular stencils fourth order;
        // the tolerance tracks whichever spacing dominates.
        const double s1 = ws.angular.theta1(1) - ws.angular.theta1(0);
        const double s2 = ws.angular.theta2(1) - ws.angular.theta2(0);
        const double model =
            ws.radial.h * ws.radial.h + s1 * s1 * s1 * s1 + s2 * s2 * s2 * s2;
        struct Check {
            const char* name;
            double value;
            double tolerance;
        };
        const std::vector<Check> checks = {
            {"cone_curvature_deviation", detail::cone_curvature_deviation(ws), 1.0 * model},
            {"jacobi_form_gap", detail::jacobi_form_gap(ws, cfg.seed), 5.0 * model},
        };
        bool all_pass = true;
        summary["checks"] = json::array();
        for (const Check& c : checks) {
            const bool pass = c.value < c.tolerance;
            all_pass = all_pass && pass;
            summary["checks"].push_back({{"name", c.name},
                                         {"value", c.value},
                                         {"tolerance", c.tolerance},
                                         {"pass", pass}});
        }
        summary["all_pass"] = all_pass;
        emit_summary();
        if (!all_pass) {
            json err = {{"error",
                         {{"code", "VerificationFailure"},
                          {"message", "one or more oracle cross-checks exceeded tolerance"}}}};
            emit("error.json", err.dump(2) + "\n");
            return 2;
        }
        return 0;
    }

    if (m.command == "stability") {
        const StabilityReport report = cone_stability(ws.link, ws.n());
        json st;
        st["report"] = {{"mu1", report.mu1},
                        {"mu1_minus", report.mu1_minus},
                        {"mu_M", report.mu_M},
                        {"classification", to_string(report.classification)}};
        if (report.witness) {
            st["report"]["witness"] = {{"sigma", report.witness->sigma},
                                       {"tau", report.witness->tau},
                                       {"quotient", report.witness->quotient}};
            const InstabilityWitness wit = instability_witness(ws);
            st["grid_witness"] = {{"sigma", wit.sigma},
                                  {"tau", wit.tau},
                                  {"quotient", wit.quotient},
                                  {"lowest_eigenvalue", wit.lowest_eigenvalue}};
        }
        {
            std::mt19937 rng(cfg.seed);
            const double slack = 1.0 + 10.0 * ws.radial.h * ws.radial.h;
            int violations = 0;
            double worst_margin = std::numeric_limits<double>::infinity();
            const int band = std::min(cfg.stability.hardy_band, ws.n_modes());
            for (int s = 0; s < cfg.stability.hardy_samples; ++s) {
                const ConeField u = random_test_field(ws, rng, band);
                const HardyTerms terms = hardy_terms(ws, u);
                worst_margin = std::min(worst_margin, terms.rhs - terms.lhs);
                if (terms.lhs > slack * terms.rhs) ++violations;
            }
            st["hardy"] = {{"samples", cfg.stability.hardy_samples},
                           {"band", band},
                           {"violations", violations},
                           {"worst_margin", worst_margin}};
        }
        {
            const BatteryReport battery =
                perturbed_form_battery(ws, make_zero_field(ws), cfg.stability.battery_modes);
            st["battery"] = {{"entries", battery.entries.size()},
                             {"min_value", battery.min_value},
                             {"bound", battery.bound}};
        }
        emit("stability.json", st.dump(2) + "\n");
        summary["classification"] = to_string(report.classification);
        summary["mu_M"] = report.mu_M;
        summary["artifacts"] = {"stability.json"};
        emit_summary();
        return 0;
    }

    if (m.command == "lambda-scan") {
        const SolverConfig sc = detail::solver_config_for(ws, cfg);
        const LambdaScan scan = lambda_threshold_scan(ws, sc, cfg.solver.lambda_list);
        summary["rows"] = json::array();
        for (const ScanRow& row : scan.rows) {
            summary["rows"].push_back({{"lambda", row.lambda},
                                       {"converged", row.converged},
                                       {"iterations", row.iterations},
                                       {"window_ratio", row.window_ratio},
                                       {"embedded_residual", row.embedded_residual},
                                       {"note", row.note}});
        }
        summary["lambda_hat"] = scan.lambda_hat;
        summary["truncated"] = scan.truncated;
        emit_summary();
        return 0;
    }

    fail(ErrorCode::ConfigError, "unknown command: " + m.command);
}

}  // namespace conelab
