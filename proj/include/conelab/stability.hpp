#pragma once

// Stability analysis for the scalar-flat cones and their graph deformations.
//
// The cone over a minimal Clifford link is 1-stable exactly when the modified
// mass number mu_M = 1 - 4 mu1^- / (n-3)^2 is nonnegative, where mu1 is the
// lowest angular eigenvalue 3 S3 / S1. This header provides that classification
// together with the quadratic-form machinery used to check it numerically:
// Rayleigh quotients of compactly supported fields on truncated cones, the
// Hardy inequality terms behind the lower bound, the explicit instability
// witness built from a truncated Jacobi field when mu_M < 0, and the perturbed
// quadratic form evaluated on embedded graphs for the graph-stability check.
//
// All truncated integrals treat grid fields as continuous piecewise linear
// functions of x = ln t and clamp them to zero outside the truncation window
// by inserting a virtual zero node at each window edge. That quadrature
// integrates kinked truncations (such as the witness, which vanishes at its
// window edges but has corners there) without first-order endpoint error.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "conelab/calculus.hpp"
#include "conelab/embedding.hpp"
#include "conelab/field.hpp"

namespace conelab {

enum class StabilityClass { StrictlyOneStable, OneStableOnly, NotOneStable };

inline const char* to_string(StabilityClass c) {
    switch (c) {
        case StabilityClass::StrictlyOneStable: return "strictly-1-stable";
        case StabilityClass::OneStableOnly: return "1-stable-only";
        case StabilityClass::NotOneStable: return "not-1-stable";
    }
    return "unknown";
}

// Closed-form data of the explicit unstable direction: the real part of
// t^{gamma_1} times the lowest mode, truncated between consecutive zeros.
struct WitnessSummary {
    double sigma = 0.0;     // inner truncation radius exp(-3 pi / (2 omega))
    double tau = 0.0;       // outer truncation radius exp(-pi / (2 omega))
    double quotient = 0.0;  // analytic Rayleigh quotient of the truncated field
};

struct StabilityReport {
    double mu1 = 0.0;        // lowest angular eigenvalue, 3 S3 / S1
    double mu1_minus = 0.0;  // negative part max(-mu1, 0)
    double mu_M = 0.0;       // 1 - 4 mu1_minus / (n-3)^2
    StabilityClass classification = StabilityClass::StrictlyOneStable;
    std::optional<WitnessSummary> witness;  // present exactly when mu_M < 0
};

// Classification from the lowest angular eigenvalue alone. When mu_M < 0 the
// leading indicial root is complex and the report carries the closed-form
// truncation radii of the witness; its Rayleigh quotient is exactly zero
// because the profile solves the radial Jacobi equation.
inline StabilityReport classify_stability(double mu1, int n) {
    require(n >= 4, ErrorCode::ConfigError, "stability classification needs dimension >= 4");
    StabilityReport r;
    r.mu1 = mu1;
    r.mu1_minus = std::max(-mu1, 0.0);
    const double d = static_cast<double>(n - 3);
    r.mu_M = 1.0 - 4.0 * r.mu1_minus / (d * d);
    if (r.mu_M > 0.0)
        r.classification = StabilityClass::StrictlyOneStable;
    else if (r.mu_M == 0.0)
        r.classification = StabilityClass::OneStableOnly;
    else
        r.classification = StabilityClass::NotOneStable;
    if (r.mu_M < 0.0) {
        const double omega = std::abs(indicial_roots(n, mu1).second.imag());
        WitnessSummary w;
        w.tau = std::exp(-pi / (2.0 * omega));
        w.sigma = std::exp(-3.0 * pi / (2.0 * omega));
        w.quotient = 0.0;
        r.witness = w;
    }
    return r;
}

// Stability classification of the cone over the link. The lowest eigenvalue
// comes from the constant mode; a scan over the first bands of the mode
// lattice asserts that it really is the lattice minimum.
inline StabilityReport cone_stability(const CliffordLink& link, int n) {
    require(n >= 4, ErrorCode::ConfigError, "cone stability needs dimension >= 4");
    require(n == link.n(), ErrorCode::ConfigError, "dimension does not match the link");
    const CurvatureInvariants inv = invariants(link);
    const double mu1 = mode_eigenvalue(link, inv, 0, 0);
    double lattice_min = mu1;
    for (int k = 0; k < 8; ++k)
        for (int l = 0; l < 8; ++l)
            lattice_min = std::min(lattice_min, mode_eigenvalue(link, inv, k, l));
    require(mu1 <= lattice_min + 1e-12, ErrorCode::SolverFailure,
            "constant mode is not the minimum of the mode lattice");
    return classify_stability(mu1, n);
}

namespace detail {

// Moments of a grid field under the cone volume element t^{n-1} dt dtheta,
// clamped to the window [sigma, tau]. In x = ln t every integrand below
// carries the common radial density e^{(n-3)x}:
//   uu = int e^{(n-3)x} sum_a w_a u^2        xx = the same with u_x^2
//   t1 = the same with (d u / d theta1)^2    t2 = the same with theta2.
// Piecewise-linear-in-x quadrature with virtual zero nodes at the window
// edges; the density is sampled at segment midpoints.
struct FormMoments {
    double uu = 0.0, xx = 0.0, t1 = 0.0, t2 = 0.0;
};

inline FormMoments form_moments(const Workspace& ws, const Eigen::MatrixXd& values, double sigma,
                                double tau) {
    const int nr = ws.radial.count(), A = ws.angular.size();
    require(values.rows() == nr && values.cols() == A, ErrorCode::ConfigError,
            "field values do not match the workspace grid");
    const Eigen::MatrixXd dt1 = d_theta(ws, values, 1, 1);
    const Eigen::MatrixXd dt2 = d_theta(ws, values, 2, 1);
    const double xs = std::log(sigma), xt = std::log(tau);
    const double d = static_cast<double>(ws.n() - 3);
    const Eigen::VectorXd& w = ws.angular.w;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(A);
    // int of the product of two linear segments with endpoint values (a0, a1),
    // (b0, b1) over a unit-length segment
    const auto p1_product = [&](const Eigen::VectorXd& a0, const Eigen::VectorXd& a1,
                                const Eigen::VectorXd& b0, const Eigen::VectorXd& b1) {
        return (2.0 * (a0.cwiseProduct(b0) + a1.cwiseProduct(b1)) + a0.cwiseProduct(b1) +
                a1.cwiseProduct(b0))
                   .dot(w) /
               6.0;
    };
    FormMoments m;
    for (int i = 0; i + 1 < nr; ++i) {
        const double xi = ws.radial.x[static_cast<std::size_t>(i)];
        const double xj = ws.radial.x[static_cast<std::size_t>(i + 1)];
        const double lo = std::max(xi, xs), hi = std::min(xj, xt);
        if (hi <= lo) continue;
        const bool keep_left = xs <= xi, keep_right = xt >= xj;
        const Eigen::VectorXd uL = keep_left ? values.row(i).transpose() : zero;
        const Eigen::VectorXd uR = keep_right ? values.row(i + 1).transpose() : zero;
        const Eigen::VectorXd gL = keep_left ? dt1.row(i).transpose() : zero;
        const Eigen::VectorXd gR = keep_right ? dt1.row(i + 1).transpose() : zero;
        const Eigen::VectorXd hL = keep_left ? dt2.row(i).transpose() : zero;
        const Eigen::VectorXd hR = keep_right ? dt2.row(i + 1).transpose() : zero;
        const double len = hi - lo;
        const double rho = std::exp(d * 0.5 * (lo + hi));
        const Eigen::VectorXd slope = (uR - uL) / len;
        m.uu += rho * len * p1_product(uL, uR, uL, uR);
        m.xx += rho * len * slope.cwiseAbs2().dot(w);
        m.t1 += rho * len * p1_product(gL, gR, gL, gR);
        m.t2 += rho * len * p1_product(hL, hR, hL, hR);
    }
    return m;
}

}  // namespace detail

// Numerator and denominator of the cone Rayleigh quotient over the window
// [sigma, tau]: the integrated-by-parts quadratic form of the Jacobi operator
//   numerator   = int <T1 grad u, grad u> + 3 S3 u^2  dM
//   denominator = int (u^2 / t^2) S1 dM
// with dM = t^{n-1} dt dtheta and the Newton tensor eigenvalues (S1 - lambda_i)/t.
struct ConeFormTerms {
    double numerator = 0.0, denominator = 0.0;
};

inline ConeFormTerms cone_form_terms(const Workspace& ws, const ConeField& u, double sigma,
                                     double tau) {
    require(u.has_values, ErrorCode::MissingProfiles, "quadratic form needs grid values");
    require(sigma > 0.0 && tau > sigma, ErrorCode::ConfigError, "truncation window is empty");
    const auto m = detail::form_moments(ws, u.values, sigma, tau);
    const double S1 = ws.inv.S1, S3 = ws.inv.S3;
    const double c1 = (S1 - ws.link.lambda1()) / (ws.link.a1 * ws.link.a1);
    const double c2 = (S1 - ws.link.lambda2()) / (ws.link.a2 * ws.link.a2);
    ConeFormTerms out;
    out.numerator = S1 * m.xx + c1 * m.t1 + c2 * m.t2 + 3.0 * S3 * m.uu;
    out.denominator = S1 * m.uu;
    return out;
}

inline double rayleigh_quotient(const Workspace& ws, const ConeField& u, double sigma,
                                double tau) {
    const ConeFormTerms terms = cone_form_terms(ws, u, sigma, tau);
    require(terms.denominator > 0.0, ErrorCode::ZeroDenominator,
            "test field vanishes on the truncation window");
    return terms.numerator / terms.denominator;
}

// Both sides of the Hardy inequality for fields vanishing at the radial ends:
//   int u^2 t^{-2} S1 dM  <=  (4 / (n-3)^2) int u_t^2 S1 dM
// evaluated over the whole grid annulus.
struct HardyTerms {
    double lhs = 0.0, rhs = 0.0;
};

inline HardyTerms hardy_terms(const Workspace& ws, const ConeField& u) {
    require(u.has_values, ErrorCode::MissingProfiles, "hardy terms need grid values");
    const auto m = detail::form_moments(ws, u.values, 0.5 * ws.radial.t.front(),
                                        2.0 * ws.radial.t.back());
    const double d = static_cast<double>(ws.n() - 3);
    HardyTerms out;
    out.lhs = ws.inv.S1 * m.uu;
    out.rhs = 4.0 / (d * d) * ws.inv.S1 * m.xx;
    return out;
}

// Lowest eigenvalue of the Dirichlet problem L u + t^{-2} S1 lambda u = 0 on
// the annulus sigma < t < tau. The operator separates over the angular modes;
// in x = ln t each mode block reads
//   -(a_xx + (n-3) a_x) + mu_j a = lambda a
// so every block shares one Sturm-Liouville form with density e^{(n-3)x} and
// differs only by the additive constant mu_j. The shared block is discretised
// with linear elements and lumped mass on a dedicated uniform grid, and the
// returned global minimum is min_j mu_j plus its ground value.
inline double lowest_dirichlet_eigenvalue(const Workspace& ws, double sigma, double tau) {
    require(sigma > 0.0 && tau > sigma, ErrorCode::ConfigError, "eigenvalue annulus is empty");
    const int count = std::max(ws.radial.count(), 8);
    const double x0 = std::log(sigma), x1 = std::log(tau);
    const double hd = (x1 - x0) / (count - 1);
    const double d = static_cast<double>(ws.n() - 3);
    const int interior = count - 2;
    const auto rho_mid = [&](int i) { return std::exp(d * (x0 + (i + 0.5) * hd)); };
    Eigen::VectorXd mass(interior);
    for (int i = 0; i < interior; ++i) mass(i) = hd * std::exp(d * (x0 + (i + 1) * hd));
    Eigen::MatrixXd stiff = Eigen::MatrixXd::Zero(interior, interior);
    for (int i = 0; i < interior; ++i) {
        stiff(i, i) = (rho_mid(i) + rho_mid(i + 1)) / hd;
        if (i + 1 < interior) stiff(i, i + 1) = stiff(i + 1, i) = -rho_mid(i + 1) / hd;
    }
    const Eigen::VectorXd scale = mass.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd sym = scale.asDiagonal() * stiff * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorCode::SolverFailure,
            "Dirichlet eigenproblem failed to converge");
    double mu_min = ws.basis.modes.front().mu;
    for (const Mode& mode : ws.basis.modes) mu_min = std::min(mu_min, mode.mu);
    return mu_min + es.eigenvalues()(0);
}

// Explicit unstable direction on a grid: the truncated Jacobi field
// t^{(3-n)/2} cos(omega ln t) times the lowest mode, supported between
// consecutive zeros of the cosine.
struct InstabilityWitness {
    ConeField w;
    double sigma = 0.0, tau = 0.0;
    double quotient = 0.0;           // grid Rayleigh quotient of w on [sigma, tau]
    double lowest_eigenvalue = 0.0;  // Dirichlet ground value on (sigma / 2, 1)
};

inline InstabilityWitness instability_witness(const Workspace& ws) {
    const StabilityReport report = cone_stability(ws.link, ws.n());
    require(report.mu_M < 0.0, ErrorCode::NotUnstable,
            "cone is 1-stable; no instability witness exists");
    InstabilityWitness out;
    out.sigma = report.witness->sigma;
    out.tau = report.witness->tau;
    require(ws.radial.t.front() <= 0.5 * out.sigma, ErrorCode::ConfigError,
            "radial grid starts above the witness support");
    const double omega = std::abs(indicial_roots(ws.n(), report.mu1).second.imag());
    const double power = 0.5 * (3.0 - ws.n());
    const int nr = ws.radial.count(), A = ws.angular.size();
    out.w.values = Eigen::MatrixXd::Zero(nr, A);
    for (int i = 0; i < nr; ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        if (t < out.sigma || t > out.tau) continue;
        const double prof = std::pow(t, power) * std::cos(omega * std::log(t));
        out.w.values.row(i).setConstant(prof);
    }
    out.w.has_values = true;
    out.w.profiles = field_coefficients(ws, out.w);
    out.w.has_profiles = true;
    out.quotient = rayleigh_quotient(ws, out.w, out.sigma, out.tau);
    out.lowest_eigenvalue = lowest_dirichlet_eigenvalue(ws, 0.5 * out.sigma, 1.0);
    return out;
}

// Normalized boundedness statistic of the graph deformation of the third
// symmetric function: sup over interior nodes of |t^3 S3(graph) - S3| / |S3|,
// divided by lambda. The zero graph is the cone itself, so the statistic is 0
// at lambda = 0 by definition.
inline double graph_s3_deviation(const Workspace& ws, const ConeField& u_lambda, double lambda) {
    require(lambda >= 0.0, ErrorCode::ConfigError, "deviation statistic needs lambda >= 0");
    if (lambda == 0.0) return 0.0;
    const EmbeddedGraph g = embed_graph(ws, u_lambda);
    const SymmetricFields fields = symmetric_functions_field(g);
    const double S3 = ws.inv.S3;
    const int nr = ws.radial.count(), A = ws.angular.size();
    double sup = 0.0;
    for (int i = 1; i + 1 < nr; ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        const double t3 = t * t * t;
        for (int a = 0; a < A; ++a)
            sup = std::max(sup, std::abs(t3 * fields.s3(i, a) - S3) / std::abs(S3));
    }
    return sup / lambda;
}

namespace detail {

// C^1 window profiles used by the form battery: three sin^2 bumps of width
// L / 2 at offsets 0, L / 4, L / 2 across the log-radial range.
inline double battery_bump(double x, double x0, double length, int which, double* deriv) {
    const double lo = x0 + 0.25 * length * which;
    const double width = 0.5 * length;
    const double xi = (x - lo) / width;
    if (xi <= 0.0 || xi >= 1.0) {
        if (deriv) *deriv = 0.0;
        return 0.0;
    }
    const double s = std::sin(pi * xi);
    if (deriv) *deriv = pi / width * std::sin(2.0 * pi * xi);
    return s * s;
}

}  // namespace detail

// One evaluation of the perturbed quadratic form on the embedded graph.
struct BatteryEntry {
    int mode = 0;
    int bump = 0;
    double value = 0.0;
};

struct BatteryReport {
    std::vector<BatteryEntry> entries;
    double min_value = 0.0;
    double bound = 0.0;  // reference threshold mu_M / 2 of the underlying cone
};

// Evaluates the graph stability form
//   int <T1(graph) grad v, grad v> + 3 S3(graph) v^2  dM(graph)
// normalized by int (v^2 / t^2) S1(graph) dM(graph) = 1, on a deterministic
// battery of test fields: the first n_test_modes angular modes times three
// radial bump profiles. All geometric data (fundamental forms, curvature
// sums, volume cells) comes from the embedding oracle, so the check shares
// nothing with the linearised operator it probes.
inline BatteryReport perturbed_form_battery(const Workspace& ws, const ConeField& u_graph,
                                            int n_test_modes = 20) {
    require(u_graph.has_values, ErrorCode::MissingProfiles, "form battery needs grid values");
    require(n_test_modes >= 1 && n_test_modes <= ws.n_modes(), ErrorCode::ConfigError,
            "battery mode count exceeds the retained basis");
    const EmbeddedGraph g = embed_graph(ws, u_graph);
    const SymmetricFields fields = symmetric_functions_field(g);
    const int nr = ws.radial.count(), A = ws.angular.size();
    const int p = ws.link.p, q = ws.link.q;
    const double a1 = ws.link.a1, a2 = ws.link.a2;
    const double sg = static_cast<double>(ws.link.sigma);

    // Per-node quadratic form coefficients E = s1 G^{-1} - G^{-1} II G^{-1}
    // (upper triangle), volume cell, and the two scalar term densities.
    Eigen::MatrixXd e11(nr, A), e12(nr, A), e13(nr, A), e22(nr, A), e23(nr, A), e33(nr, A);
    Eigen::MatrixXd cell(nr, A);
    scan_graph_shape(g, [&](int i, const ShapeRow& row) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        const double tmass = (i == 0 || i == nr - 1 ? 0.5 : 1.0) * ws.radial.h * t;
        for (int a = 0; a < A; ++a) {
            const Eigen::Matrix3d& G = row.metric[static_cast<std::size_t>(a)];
            const Eigen::Matrix3d Minv = G.inverse();
            const Eigen::Matrix3d E = fields.s1(i, a) * Minv -
                                      Minv * row.second[static_cast<std::size_t>(a)] * Minv;
            e11(i, a) = E(0, 0);
            e12(i, a) = E(0, 1);
            e13(i, a) = E(0, 2);
            e22(i, a) = E(1, 1);
            e23(i, a) = E(1, 2);
            e33(i, a) = E(2, 2);
            const double r1 = t * a1 - sg * g.u(i, a) * a2;
            const double r2 = t * a2 + sg * g.u(i, a) * a1;
            const double orbit = std::pow(r1 / a1, p - 1) / a1 * std::pow(r2 / a2, q - 1) / a2;
            cell(i, a) = std::sqrt(std::max(G.determinant(), 0.0)) * orbit *
                         ws.angular.w(a) * tmass;
        }
    });

    const double x0 = ws.radial.x.front();
    const double length = -x0;
    BatteryReport report;
    report.bound = 0.5 * cone_stability(ws.link, ws.n()).mu_M;
    Eigen::MatrixXd v(nr, A), vx(nr, A);
    for (int j = 0; j < n_test_modes; ++j) {
        const Eigen::RowVectorXd phi = ws.basis.phi.row(j);
        for (int b = 0; b < 3; ++b) {
            for (int i = 0; i < nr; ++i) {
                double db = 0.0;
                const double bv =
                    detail::battery_bump(ws.radial.x[static_cast<std::size_t>(i)], x0, length, b,
                                         &db);
                v.row(i) = bv * phi;
                vx.row(i) = db * phi;
            }
            const Eigen::MatrixXd v1 = d_theta(ws, v, 1, 1);
            const Eigen::MatrixXd v2 = d_theta(ws, v, 2, 1);
            double num = 0.0, den = 0.0;
            for (int i = 0; i < nr; ++i) {
                const double t = ws.radial.t[static_cast<std::size_t>(i)];
                for (int a = 0; a < A; ++a) {
                    const double du0 = vx(i, a) / t, du1 = v1(i, a), du2 = v2(i, a);
                    const double quad = e11(i, a) * du0 * du0 + e22(i, a) * du1 * du1 +
                                        e33(i, a) * du2 * du2 +
                                        2.0 * (e12(i, a) * du0 * du1 + e13(i, a) * du0 * du2 +
                                               e23(i, a) * du1 * du2);
                    const double vv = v(i, a) * v(i, a);
                    num += cell(i, a) * (quad + 3.0 * fields.s3(i, a) * vv);
                    den += cell(i, a) * fields.s1(i, a) * vv / (t * t);
                }
            }
            require(den > 0.0, ErrorCode::ZeroDenominator, "battery field has zero norm");
            report.entries.push_back({j, b, num / den});
        }
    }
    report.min_value = report.entries.front().value;
    for (const BatteryEntry& e : report.entries)
        report.min_value = std::min(report.min_value, e.value);
    return report;
}

// Deterministic band-limited test field for inequality sweeps: a random
// mixture of the first max_modes angular modes with smooth radial envelopes
// vanishing at both ends of the grid.
inline ConeField random_test_field(const Workspace& ws, std::mt19937& rng, int max_modes) {
    require(max_modes >= 1 && max_modes <= ws.n_modes(), ErrorCode::ConfigError,
            "test field band exceeds the retained basis");
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int nr = ws.radial.count(), A = ws.angular.size();
    const double x0 = ws.radial.x.front();
    const double length = -x0;
    ConeField u;
    u.values = Eigen::MatrixXd::Zero(nr, A);
    for (int j = 0; j < max_modes; ++j) {
        const Eigen::RowVectorXd phi = ws.basis.phi.row(j);
        for (int harmonic = 1; harmonic <= 4; ++harmonic) {
            const double c = gauss(rng) / ((1.0 + j) * harmonic);
            for (int i = 0; i < nr; ++i) {
                const double xi = (ws.radial.x[static_cast<std::size_t>(i)] - x0) / length;
                u.values.row(i) += c * std::sin(harmonic * pi * xi) * phi;
            }
        }
    }
    u.has_values = true;
    return u;
}

}  // namespace conelab
