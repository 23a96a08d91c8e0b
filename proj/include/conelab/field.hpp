#pragma once

// Fields on the truncated cone in dual representation: values on the
// (radial x angular) tensor grid, and radial profiles per retained mode.
//
// Conventions. A field u synthesises as u = sum_j a_j(t) phi_j(theta) with
// a_j = S1 int u phi_j dV; a source density f synthesises as
// f = S1 sum_j f_j(t) phi_j(theta) with f_j = int f phi_j dV. The phi_j are
// S1-orthonormal, so both round trips are exact for band-limited data.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "conelab/angular.hpp"
#include "conelab/core.hpp"
#include "conelab/link.hpp"
#include "conelab/radial.hpp"
#include "conelab/spectrum.hpp"

namespace conelab {

struct WorkspaceConfig {
    double t_min = 1e-3;
    int radial_nodes = 257;
    int angular_nodes1 = 33;
    int angular_nodes2 = 32;
    int mode_budget = 80;
    double epsilon = 0.5;
    std::optional<double> m_requested;
};

// Everything a solver run needs about one scalar-flat cone: link data, grids,
// retained modes with basis values, and the weight threshold.
struct Workspace {
    CliffordLink link;
    CurvatureInvariants inv;
    RadialGrid radial;
    AngularGrid angular;
    SpectralBasis basis;
    ThresholdSelection selection;

    int n() const { return link.n(); }
    int n_modes() const { return basis.count(); }
    bool low_mode(int j) const {
        return basis.modes[static_cast<std::size_t>(j)].gamma_plus.real() < selection.m;
    }
};

inline Workspace make_workspace(int p, int q, const WorkspaceConfig& cfg = {}) {
    Workspace ws;
    ws.link = solve_scalar_flat_radii(p, q);
    ws.inv = invariants(ws.link);
    ws.radial = make_radial_grid(cfg.t_min, cfg.radial_nodes);
    ws.angular = make_angular_grid(ws.link, cfg.angular_nodes1, cfg.angular_nodes2);
    auto modes = enumerate_modes(ws.link, ws.inv, cfg.mode_budget);
    ws.selection = select_threshold(modes, cfg.epsilon, cfg.m_requested);
    ws.basis = build_basis(ws.link, ws.inv, ws.angular, std::move(modes));
    return ws;
}

struct ConeField {
    Eigen::MatrixXd values;     // radial nodes x angular nodes
    Eigen::MatrixXcd profiles;  // retained modes x radial nodes
    bool has_values = false;
    bool has_profiles = false;
};

inline ConeField make_zero_field(const Workspace& ws) {
    ConeField f;
    f.values = Eigen::MatrixXd::Zero(ws.radial.count(), ws.angular.size());
    f.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
    f.has_values = true;
    f.has_profiles = true;
    return f;
}

// Per-mode profiles of a source density: f_j(t) = int f phi_j dV.
inline Eigen::MatrixXcd project_modes(const Workspace& ws, const ConeField& f) {
    require(f.has_values, ErrorCode::MissingProfiles, "density has no grid values");
    Eigen::MatrixXcd out(ws.n_modes(), ws.radial.count());
    for (int i = 0; i < ws.radial.count(); ++i)
        out.col(i) = ws.basis.project_density(f.values.row(i).transpose()).cast<cplx>();
    return out;
}

// Per-mode profiles of a field: a_j(t) = S1 int u phi_j dV.
inline Eigen::MatrixXcd field_coefficients(const Workspace& ws, const ConeField& u) {
    require(u.has_values, ErrorCode::MissingProfiles, "field has no grid values");
    Eigen::MatrixXcd out(ws.n_modes(), ws.radial.count());
    for (int i = 0; i < ws.radial.count(); ++i)
        out.col(i) = ws.basis.project_field(u.values.row(i).transpose()).cast<cplx>();
    return out;
}

// Grid values of a field from its mode profiles (real parts synthesised).
inline void synthesize_field(const Workspace& ws, ConeField& u) {
    require(u.has_profiles, ErrorCode::MissingProfiles, "field has no mode profiles");
    u.values.resize(ws.radial.count(), ws.angular.size());
    const Eigen::MatrixXd re = u.profiles.real();
    for (int i = 0; i < ws.radial.count(); ++i)
        u.values.row(i) = ws.basis.synthesize(re.col(i)).transpose();
    u.has_values = true;
}

// Slice norms |f|_t = (int f(t,.)^2 S1^{-1} dV)^{1/2} at every radial node.
inline Eigen::VectorXd slice_norms(const Workspace& ws, const ConeField& f) {
    require(f.has_values, ErrorCode::MissingProfiles, "field has no grid values");
    Eigen::VectorXd out(ws.radial.count());
    for (int i = 0; i < ws.radial.count(); ++i) {
        const Eigen::VectorXd row = f.values.row(i).transpose();
        out(i) = std::sqrt(row.cwiseAbs2().dot(ws.angular.w) / ws.inv.S1);
    }
    return out;
}

// Global weighted norm ||f||^2 = int_{t_min}^1 t^{4-2m} |f|_t^2 dt.
inline double global_norm(const Workspace& ws, const ConeField& f, double m) {
    const Eigen::VectorXd slice = slice_norms(ws, f);
    std::vector<double> g(static_cast<std::size_t>(ws.radial.count()));
    for (int i = 0; i < ws.radial.count(); ++i) g[static_cast<std::size_t>(i)] = sq(slice(i));
    const auto cum = cumulative_exp_product(ws.radial, cplx(5.0 - 2.0 * m, 0.0), g);
    const double total = cum.back().real();
    require(total >= -1e-14, ErrorCode::QuadratureUnderflow, "negative norm integral");
    return std::sqrt(std::max(total, 0.0));
}

// Decay-class statistic sup_t t^{2-m-eps} |f|_t.
inline double decay_sup(const Workspace& ws, const ConeField& f, double m, double eps) {
    const Eigen::VectorXd slice = slice_norms(ws, f);
    double s = 0.0;
    for (int i = 0; i < ws.radial.count(); ++i)
        s = std::max(s, std::pow(ws.radial.t[static_cast<std::size_t>(i)], 2.0 - m - eps) * slice(i));
    return s;
}

}  // namespace conelab
