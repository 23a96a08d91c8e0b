#pragma once

// Mode-by-mode solution of the linearised equation on the truncated cone.
//
// For each retained mode the equation reduces to the radial ODE
//     t^2 a'' + (n-2) t a' - mu a = t^3 f(t),
// whose solution with decay at the tip and boundary amplitude alpha at t = 1 is
//     a(t) = alpha t^g + t^g int_beta^t s^{2-n-2g} int_0^s tau^{n-1+g} f(tau) dtau ds,
// g the upper indicial root. Low modes (Re g below the weight m) take beta = 0
// and no boundary amplitude; high modes take beta = 1 so that a(1) = alpha
// exactly. In x = ln t every integral is an exponential e^{Ax} against a smooth
// factor, evaluated by the product quadrature of the radial grid. The part of
// the integrals below the grid is closed by the power-law model
// f(tau) ~ f(t_min) (tau/t_min)^s. The exponent s defaults to the decay-class
// value m - 2 + eps; when three tip samples agree on a cleaner slope whose tail
// integrals converge, that slope is used instead, so power-law sources are
// reproduced to machine precision. Either way the closure only fixes the
// normalisation of the particular solution (a different tail shifts the result
// by homogeneous modes), so the ODE residual on the grid never depends on it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "conelab/calculus.hpp"
#include "conelab/field.hpp"

namespace conelab {

struct ModeSolveOptions {
    // Keep solving through a repeated indicial root with the logarithmic
    // branch instead of refusing with DegenerateRoot.
    bool allow_log_branch = false;
};

namespace detail {

// Measured exponent of the power-law model f ~ f(t_min) (t/t_min)^s below the
// grid, or nothing when the first three samples do not agree on one slope.
inline std::optional<double> measured_tail_slope(const Eigen::VectorXcd& f, double h) {
    const double m0 = std::abs(f(0)), m1 = std::abs(f(1)), m2 = std::abs(f(2));
    if (m0 < 1e-280 || m1 < 1e-280 || m2 < 1e-280) return std::nullopt;
    const double s01 = std::log(m1 / m0) / h;
    const double s12 = std::log(m2 / m1) / h;
    if (!std::isfinite(s01) || !std::isfinite(s12) || std::abs(s01 - s12) > 0.5)
        return std::nullopt;
    return std::clamp(s01, -4.0, 40.0);
}

inline std::vector<cplx> to_samples(const Eigen::VectorXcd& v) {
    return std::vector<cplx>(v.data(), v.data() + v.size());
}

}  // namespace detail

// Radial profile of one mode of the linearised equation. `f` holds the density
// profile samples on the radial grid; `alpha` is the boundary amplitude at
// t = 1 and is ignored for low modes.
inline Eigen::VectorXcd solve_mode(const Workspace& ws, const Mode& mode,
                                   const Eigen::VectorXcd& f, cplx alpha,
                                   const ModeSolveOptions& opts = {}) {
    const int nr = ws.radial.count();
    require(f.size() == nr, ErrorCode::ConfigError, "mode source does not match the radial grid");
    const double n = ws.n();
    const double m = ws.selection.m, eps = ws.selection.epsilon;
    const bool degenerate = std::abs(mode.gamma_plus - mode.gamma_minus) < 1e-9;
    if (degenerate && !opts.allow_log_branch)
        fail(ErrorCode::DegenerateRoot, "repeated indicial root; enable the log branch to proceed");
    const cplx g = degenerate ? 0.5 * (mode.gamma_plus + mode.gamma_minus) : mode.gamma_plus;
    const bool low = g.real() < m;

    // Sub-grid closure exponent: decay-class default, refined to the measured
    // slope only when the refined tail integrals stay clearly convergent.
    const double x_min = ws.radial.x.front();
    double s_tail = m - 2.0 + eps;
    if (const auto s_est = detail::measured_tail_slope(f, ws.radial.h)) {
        const bool inner_ok = (n + g + *s_est).real() > 0.1;
        const bool outer_ok = !low || (3.0 - g + *s_est).real() > 0.1;
        if (inner_ok && outer_ok) s_tail = *s_est;
    }

    // Inner integral F(x) = int_{-inf}^{x} e^{(n+g) xi} f d xi, tail modelled.
    const cplx denom_f = n + g + s_tail;
    require(denom_f.real() > 0.0, ErrorCode::QuadratureUnderflow,
            "sub-grid tail of the inner integral diverges");
    const cplx tail_f = f(0) * std::exp((n + g) * x_min) / denom_f;
    auto F = cumulative_exp_product(ws.radial, n + g, detail::to_samples(f));
    for (auto& v : F) v += tail_f;

    Eigen::VectorXcd a(nr);
    if (degenerate) {
        // Repeated root: the outer exponent vanishes identically, so the outer
        // integral is a plain cumulative of F.
        auto O = low ? cumulative_exp_product(ws.radial, cplx(0.0), F)
                     : suffix_cumulative_exp_product(ws.radial, cplx(0.0), F);
        if (low) {
            const cplx tail_o = f(0) * std::exp((n + g) * x_min) / (denom_f * denom_f);
            for (auto& v : O) v += tail_o;
        } else {
            for (auto& v : O) v = -v;
        }
        for (int i = 0; i < nr; ++i) {
            const cplx growth = std::exp(g * ws.radial.x[static_cast<std::size_t>(i)]);
            a(i) = growth * O[static_cast<std::size_t>(i)];
            if (!low) a(i) += alpha * growth;
        }
        return a;
    }

    // Outer integral by parts: with D = 3 - n - 2g,
    //   int e^{Dx} F dx = (e^{Dx} F - W)/D,  W(x) = int e^{(3-g) xi} f d xi.
    const cplx D = cplx(3.0 - n) - 2.0 * g;
    if (low) {
        auto W = cumulative_exp_product(ws.radial, 3.0 - g, detail::to_samples(f));
        const cplx denom_w = 3.0 - g + s_tail;
        require(denom_w.real() > 0.0, ErrorCode::QuadratureUnderflow,
                "sub-grid tail of the outer integral diverges");
        const cplx tail_w = f(0) * std::exp((3.0 - g) * x_min) / denom_w;
        for (auto& v : W) v += tail_w;
        for (int i = 0; i < nr; ++i) {
            const double x = ws.radial.x[static_cast<std::size_t>(i)];
            const cplx I =
                (std::exp(D * x) * F[static_cast<std::size_t>(i)] - W[static_cast<std::size_t>(i)]) /
                D;
            a(i) = std::exp(g * x) * I;
        }
        return a;
    }
    // High: W enters only through W(0) - W(x), accumulated from the boundary
    // downward so the Re(3-g) < 0 growth toward the tip never cancels.
    const auto Wtop = suffix_cumulative_exp_product(ws.radial, 3.0 - g, detail::to_samples(f));
    const cplx F1 = F.back();
    for (int i = 0; i < nr; ++i) {
        const double x = ws.radial.x[static_cast<std::size_t>(i)];
        const cplx I = (std::exp(D * x) * F[static_cast<std::size_t>(i)] - F1 +
                        Wtop[static_cast<std::size_t>(i)]) /
                       D;
        a(i) = std::exp(g * x) * (alpha + I);
    }
    return a;
}

// Residual of the mode ODE in density form: (t^2 a'' + (n-2) t a' - mu a)/t^3 - f.
inline Eigen::VectorXcd mode_ode_residual(const Workspace& ws, const Mode& mode,
                                          const Eigen::VectorXcd& a, const Eigen::VectorXcd& f) {
    const Eigen::MatrixXcd ax = d_radial(ws, a, 1);
    const Eigen::MatrixXcd axx = d_radial(ws, a, 2);
    Eigen::VectorXcd r(ws.radial.count());
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        r(i) = (axx(i, 0) + (ws.n() - 3.0) * ax(i, 0) - mode.mu * a(i)) / (t * t * t) - f(i);
    }
    return r;
}

// Boundary coefficients with the low modes annihilated.
inline Eigen::VectorXd high_projection(const Workspace& ws, Eigen::VectorXd coeffs) {
    require(coeffs.size() == ws.n_modes(), ErrorCode::ConfigError,
            "coefficient vector does not match the retained modes");
    for (int j = 0; j < ws.n_modes(); ++j)
        if (ws.low_mode(j)) coeffs(j) = 0.0;
    return coeffs;
}

// Harmonic extension of boundary data along the high indicial powers:
// H(psi) = sum_{high j} psi_j t^{g_j} phi_j.
inline ConeField harmonic_extension(const Workspace& ws, const Eigen::VectorXd& psi) {
    require(psi.size() == ws.n_modes(), ErrorCode::ConfigError,
            "boundary data does not match the retained modes");
    ConeField u;
    u.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
    for (int j = 0; j < ws.n_modes(); ++j) {
        if (ws.low_mode(j) || psi(j) == 0.0) continue;
        const cplx g = ws.basis.modes[static_cast<std::size_t>(j)].gamma_plus;
        for (int i = 0; i < ws.radial.count(); ++i)
            u.profiles(j, i) = psi(j) * std::exp(g * ws.radial.x[static_cast<std::size_t>(i)]);
    }
    u.has_profiles = true;
    synthesize_field(ws, u);
    return u;
}

struct LinearDiagnostics {
    double source_decay_sup = 0.0;     // sup_t t^{2-m-eps} |f|_t
    double boundary_high_norm = 0.0;   // l2 norm of the high boundary coefficients
    double solution_weight_sup = 0.0;  // sup_t t^{-m} |u|_t
    double prop1_ratio = 0.0;          // solution sup over source-plus-boundary size
    double max_ode_residual = 0.0;     // worst per-mode ODE residual (density scale)
    bool decay_class_violation = false;
};

struct LinearSolveOptions {
    ModeSolveOptions mode;
    double violation_cap = 1e8;  // prop1_ratio beyond this flags a violation
    bool compute_residual = false;
};

// Solution of Lu = f with boundary trace psi at t = 1: low modes carry the
// particular solution alone, high modes are anchored to the boundary
// coefficients. `f` is a source density (profiles in density convention;
// projected from values if absent) and `psi` holds field-convention
// coefficients of the boundary data.
inline ConeField solve_linear(const Workspace& ws, const ConeField& f, const Eigen::VectorXd& psi,
                              LinearDiagnostics* diag = nullptr,
                              const LinearSolveOptions& opts = {}) {
    require(psi.size() == ws.n_modes(), ErrorCode::ConfigError,
            "boundary data does not match the retained modes");
    const Eigen::MatrixXcd fm = f.has_profiles ? f.profiles : project_modes(ws, f);
    require(fm.rows() == ws.n_modes() && fm.cols() == ws.radial.count(), ErrorCode::ConfigError,
            "source profiles do not match the workspace");

    ConeField u;
    u.profiles.resize(ws.n_modes(), ws.radial.count());
    double max_res = 0.0;
    for (int j = 0; j < ws.n_modes(); ++j) {
        const Mode& mode = ws.basis.modes[static_cast<std::size_t>(j)];
        const Eigen::VectorXcd fj = fm.row(j).transpose();
        const cplx alpha = ws.low_mode(j) ? cplx(0.0) : cplx(psi(j));
        const Eigen::VectorXcd aj = solve_mode(ws, mode, fj, alpha, opts.mode);
        u.profiles.row(j) = aj.transpose();
        if (opts.compute_residual)
            max_res = std::max(max_res,
                               mode_ode_residual(ws, mode, aj, fj).cwiseAbs().maxCoeff());
    }
    u.has_profiles = true;
    synthesize_field(ws, u);

    if (diag) {
        const double m = ws.selection.m, eps = ws.selection.epsilon;
        ConeField fv = f;
        if (!fv.has_values && fv.has_profiles) {
            // Density values from profiles for the decay statistic.
            fv.values.resize(ws.radial.count(), ws.angular.size());
            const Eigen::MatrixXd re = fv.profiles.real();
            for (int i = 0; i < ws.radial.count(); ++i)
                fv.values.row(i) = ws.inv.S1 * ws.basis.synthesize(re.col(i)).transpose();
            fv.has_values = true;
        }
        diag->source_decay_sup = decay_sup(ws, fv, m, eps);
        diag->boundary_high_norm = high_projection(ws, psi).norm();
        const Eigen::VectorXd slice = slice_norms(ws, u);
        double sup = 0.0;
        for (int i = 0; i < ws.radial.count(); ++i)
            sup = std::max(sup,
                           std::pow(ws.radial.t[static_cast<std::size_t>(i)], -m) * slice(i));
        diag->solution_weight_sup = sup;
        const double load = diag->source_decay_sup + diag->boundary_high_norm;
        diag->prop1_ratio = load > 0.0 ? sup / load : 0.0;
        diag->max_ode_residual = max_res;
        diag->decay_class_violation = diag->prop1_ratio > opts.violation_cap;
    }
    return u;
}

// Norm bundle of the weighted solution class.
struct WeightedNorms {
    double global = 0.0;        // (int t^{4-2m} |u|_t^2 dt)^{1/2}
    double source_decay = 0.0;  // sup_t t^{2-m-eps} |u|_t
    double solution_sup = 0.0;  // sup_t t^{-m} |u|_t
    double c2 = 0.0;            // weighted C^2 norm over annuli
};

inline WeightedNorms weighted_norms(const Workspace& ws, const ConeField& u, double m,
                                    double eps) {
    WeightedNorms out;
    out.global = global_norm(ws, u, m);
    out.source_decay = decay_sup(ws, u, m, eps);
    const Eigen::VectorXd slice = slice_norms(ws, u);
    for (int i = 0; i < ws.radial.count(); ++i)
        out.solution_sup = std::max(
            out.solution_sup, std::pow(ws.radial.t[static_cast<std::size_t>(i)], -m) * slice(i));
    out.c2 = weighted_c2_norm(ws, u, m);
    return out;
}

}  // namespace conelab
