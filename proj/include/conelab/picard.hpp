#pragma once

// Picard iteration for the scalar-flat graph equation. One step maps a guess v
// to the solution of the linear problem with the nonlinear remainder of v as
// source and the prescribed high-mode boundary data,
//
//   U(v) = solve_linear(-Q(v), lambda psi),
//
// so every iterate carries the exact boundary certificate and a fixed point
// solves the full equation. The iteration norm is the weighted C^2 norm used
// throughout the solution class.

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/embedding.hpp"
#include "conelab/radial_solver.hpp"

namespace conelab {

struct SolverConfig {
    double lambda = 0.0;          // boundary amplitude, >= 0
    Eigen::VectorXd psi;          // boundary mode coefficients; low entries ignored
    double tol_fixed_point = 1e-10;
    int max_iter = 50;
    int contraction_window = 5;   // ratios averaged over the last k recorded steps
};

struct StepDiagnostics {
    double q_decay = 0.0;      // sup_t t^{2-m-eps} |Q(v)|_t
    double input_norm = 0.0;   // weighted C^2 norm of v
    double bound_ratio = 0.0;  // q_decay / input_norm^2, the empirical quadratic constant
    LinearDiagnostics linear;
};

struct Diagnostics {
    int iterations = 0;
    std::vector<double> contraction_ratios;  // ||U(v_k)-U(v_{k-1})|| / ||v_k-v_{k-1}||
    double final_update_norm = 0.0;
    double window_ratio = 0.0;      // mean over the trailing contraction window
    double embedded_residual = 0.0; // sup over the grid (tip row excluded) of t^3 |S2(u)|
    double prop1_ratio = 0.0;       // linear solver load ratio at the last step
    double prop2_ratio = 0.0;       // empirical quadratic-remainder constant at the last step
};

// Shares the flat-cone oracle baseline across remainder evaluations.
class RemainderOracle {
  public:
    explicit RemainderOracle(const Workspace& ws)
        : ws_(&ws), base_s2_(symmetric_functions_field(embed_graph(ws, make_zero_field(ws))).s2) {}

    // Raw embedded S2 field of the graph of u.
    Eigen::MatrixXd embedded_s2(const ConeField& u) const {
        ConeField uu = u;
        if (!uu.has_values) synthesize_field(*ws_, uu);
        return symmetric_functions_field(embed_graph(*ws_, uu)).s2;
    }

    // Baseline-subtracted quadratic remainder Q(u) = [S2(u) - S2(0)] - Lu.
    ConeField remainder(const ConeField& u) const {
        ConeField uu = u;
        if (!uu.has_values) synthesize_field(*ws_, uu);
        const ConeField lu = jacobi_apply(
            *ws_, uu, uu.has_profiles ? JacobiForm::Spectral : JacobiForm::Divergence);
        ConeField out;
        out.values = (embedded_s2(uu) - base_s2_) - lu.values;
        out.has_values = true;
        return out;
    }

  private:
    const Workspace* ws_;
    Eigen::MatrixXd base_s2_;
};

namespace detail {

inline void validate_solver_config(const Workspace& ws, const SolverConfig& cfg) {
    require(cfg.lambda >= 0.0, ErrorCode::ConfigError, "boundary amplitude must be non-negative");
    require(cfg.tol_fixed_point > 0.0, ErrorCode::ConfigError, "fixed point tolerance must be positive");
    require(cfg.max_iter >= 1, ErrorCode::ConfigError, "iteration budget must be at least 1");
    require(cfg.contraction_window >= 1, ErrorCode::ConfigError, "contraction window must be at least 1");
    require(cfg.psi.size() == ws.n_modes(), ErrorCode::ConfigError,
            "boundary data does not match the retained modes");
}

inline ConeField field_difference(const ConeField& a, const ConeField& b) {
    ConeField d;
    d.values = a.values - b.values;
    d.has_values = true;
    if (a.has_profiles && b.has_profiles) {
        d.profiles = a.profiles - b.profiles;
        d.has_profiles = true;
    }
    return d;
}

}  // namespace detail

// One Picard step U(v); `oracle` may be shared across steps to reuse the
// flat-cone baseline.
inline ConeField picard_step(const Workspace& ws, const ConeField& v, const SolverConfig& cfg,
                             StepDiagnostics* sd = nullptr,
                             const RemainderOracle* oracle = nullptr) {
    detail::validate_solver_config(ws, cfg);
    std::optional<RemainderOracle> local;
    if (oracle == nullptr) {
        local.emplace(ws);
        oracle = &*local;
    }

    ConeField source = oracle->remainder(v);
    source.values = -source.values;
    const Eigen::VectorXd boundary = cfg.lambda * cfg.psi;
    LinearDiagnostics lin;
    ConeField u = solve_linear(ws, source, boundary, sd ? &lin : nullptr);
    if (sd) {
        const double m = ws.selection.m, eps = ws.selection.epsilon;
        ConeField q = source;
        q.values = -q.values;
        sd->q_decay = decay_sup(ws, q, m, eps);
        sd->input_norm = weighted_c2_norm(ws, v, m);
        sd->bound_ratio = sd->input_norm > 0.0 ? sd->q_decay / sq(sd->input_norm) : 0.0;
        sd->linear = lin;
    }
    return u;
}

// Fixed-point iteration from the harmonic extension of the boundary data.
inline ConeField solve_graph(const Workspace& ws, const SolverConfig& cfg,
                             Diagnostics* out = nullptr) {
    detail::validate_solver_config(ws, cfg);
    const double m = ws.selection.m;
    RemainderOracle oracle(ws);

    ConeField v = harmonic_extension(ws, (cfg.lambda * cfg.psi).eval());
    Diagnostics diag;
    std::vector<double> updates;
    double prev_update = -1.0, first_update = -1.0;
    int growth_streak = 0;
    bool converged = false;
    ConeField u;

    for (int k = 1; k <= cfg.max_iter; ++k) {
        StepDiagnostics sd;
        ConeField next = picard_step(ws, v, cfg, &sd, &oracle);
        const double update = weighted_c2_norm(ws, detail::field_difference(next, v), m);
        updates.push_back(update);
        if (first_update < 0.0) first_update = update;
        if (prev_update > 0.0) diag.contraction_ratios.push_back(update / prev_update);
        diag.prop1_ratio = sd.linear.prop1_ratio;
        diag.prop2_ratio = sd.bound_ratio;
        diag.iterations = k;
        diag.final_update_norm = update;
        if (update <= cfg.tol_fixed_point) {
            u = next;
            converged = true;
            break;
        }
        // Growth only counts above the roundoff floor of the weighted norm
        // (~eps_mach * t_min^{-m}); below that scale updates rattle harmlessly.
        const bool measurable = update > 100.0 * cfg.tol_fixed_point;
        if (prev_update >= 0.0 && update > prev_update && measurable)
            ++growth_streak;
        else if (update <= prev_update || !measurable)
            growth_streak = 0;
        const bool runaway = first_update > 0.0 && update > 10.0 * first_update && measurable;
        if (growth_streak >= 3 || runaway) {
            std::ostringstream msg;
            msg << "picard iteration diverged after " << k << " steps; update norms:";
            for (double s : updates) msg << ' ' << s;
            fail(ErrorCode::NonConvergence, msg.str());
        }
        prev_update = update;
        v = next;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "no fixed point within " << cfg.max_iter << " iterations";
        if (!updates.empty() && updates.back() <= 100.0 * cfg.tol_fixed_point)
            msg << " (updates stalled near the roundoff floor of the weighted norm;"
                   " raise tol_fixed_point above it)";
        msg << "; update norms:";
        for (double s : updates) msg << ' ' << s;
        fail(ErrorCode::NonConvergence, msg.str());
    }

    if (out) {
        const int window =
            std::min<int>(cfg.contraction_window, static_cast<int>(diag.contraction_ratios.size()));
        if (window > 0) {
            double acc = 0.0;
            for (int i = 0; i < window; ++i)
                acc += diag.contraction_ratios[diag.contraction_ratios.size() -
                                               static_cast<std::size_t>(i) - 1];
            diag.window_ratio = acc / window;
        }
        const Eigen::MatrixXd s2 = oracle.embedded_s2(u);
        double res = 0.0;
        for (int i = 1; i < ws.radial.count(); ++i) {
            const double t3 = std::pow(ws.radial.t[static_cast<std::size_t>(i)], 3);
            for (int a = 0; a < ws.angular.size(); ++a)
                res = std::max(res, t3 * std::abs(s2(i, a)));
        }
        diag.embedded_residual = res;
        *out = diag;
    }
    return u;
}

// One row of the amplitude threshold scan.
struct ScanRow {
    double lambda = 0.0;
    bool converged = false;
    int iterations = 0;
    double window_ratio = 0.0;
    double embedded_residual = 0.0;
    std::string note;
};

struct LambdaScan {
    std::vector<ScanRow> rows;
    double lambda_hat = -1.0;  // largest converging amplitude, -1 when none converged
    bool truncated = false;    // stopped at the first failure
};

// Runs solve_graph for each amplitude in ascending order; failures are data
// and truncate the scan so the presentation stays monotone.
inline LambdaScan lambda_threshold_scan(const Workspace& ws, SolverConfig cfg,
                                        const std::vector<double>& lambdas) {
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        require(lambdas[i] > lambdas[i - 1], ErrorCode::ConfigError,
                "amplitude list must be ascending");
    LambdaScan scan;
    for (double lam : lambdas) {
        cfg.lambda = lam;
        ScanRow row;
        row.lambda = lam;
        try {
            Diagnostics diag;
            solve_graph(ws, cfg, &diag);
            row.converged = true;
            row.iterations = diag.iterations;
            row.window_ratio = diag.window_ratio;
            row.embedded_residual = diag.embedded_residual;
            scan.lambda_hat = lam;
        } catch (const Error& e) {
            row.converged = false;
            row.note = std::string("scan truncated: ") + e.what();
            scan.rows.push_back(row);
            scan.truncated = true;
            break;
        }
        scan.rows.push_back(row);
    }
    return scan;
}

}  // namespace conelab
