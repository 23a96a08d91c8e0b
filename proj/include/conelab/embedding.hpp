#pragma once

// Curvature oracle for normal graphs over the cone. A height field u over the
// cone grid is embedded through the rotated-radii closed form
//
//   rho1 = t a1 - sigma u a2,   rho2 = t a2 + sigma u a1,
//
// and the hypersurface point is (rho1 w1, rho2 w2) with w1, w2 on the two
// sphere factors. Because the graph is equivariant, the whole geometry is
// visible in the reduced four-dimensional ambient block
//
//   P = (rho1 cos t1, rho1 sin t1, rho2 cos t2, rho2 sin t2),
//
// parametrised by (t, theta1, theta2); the remaining principal directions are
// orbit rotations whose curvature is -nu_{x1}/x1 (and -nu_{y1}/y1) in these
// coordinates. The oracle recovers the full principal curvature multiset by
// finite differences of the position field alone, so it shares no curvature
// formulas with the Jacobi operator it is used to check.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "conelab/calculus.hpp"
#include "conelab/field.hpp"

namespace conelab {

struct EmbeddedGraph {
    const Workspace* ws = nullptr;
    Eigen::MatrixXd u;   // height values over the cone grid (radial x angular)
    double scale = 1.0;  // joint homothety applied to (t, u)
};

// Validates that the rotated radii stay positive on every node, i.e. that the
// closed-form embedding is an immersion, and returns the lightweight graph
// handle. The workspace must outlive the returned value.
inline EmbeddedGraph embed_graph(const Workspace& ws, const ConeField& u, double scale = 1.0) {
    require(u.has_values, ErrorCode::MissingProfiles, "embed_graph needs grid values");
    require(u.values.rows() == ws.radial.count() && u.values.cols() == ws.angular.size(),
            ErrorCode::ConfigError, "height field does not match the workspace grid");
    require(scale > 0.0, ErrorCode::ConfigError, "embedding scale must be positive");
    const double a1 = ws.link.a1, a2 = ws.link.a2;
    const double sg = static_cast<double>(ws.link.sigma);
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        for (int a = 0; a < ws.angular.size(); ++a) {
            const double h = u.values(i, a);
            require(t * a1 - sg * h * a2 > 0.0 && t * a2 + sg * h * a1 > 0.0,
                    ErrorCode::ImmersionFailure, "rotated radius is not positive");
        }
    }
    EmbeddedGraph g;
    g.ws = &ws;
    g.u = u.values;
    g.scale = scale;
    return g;
}

// Ambient position of one grid node in the reduced four-dimensional block.
inline Eigen::Vector4d graph_point(const EmbeddedGraph& g, int i, int a) {
    const Workspace& ws = *g.ws;
    const double t = ws.radial.t[static_cast<std::size_t>(i)];
    const double h = g.u(i, a);
    const double sg = static_cast<double>(ws.link.sigma);
    const double r1 = g.scale * (t * ws.link.a1 - sg * h * ws.link.a2);
    const double r2 = g.scale * (t * ws.link.a2 + sg * h * ws.link.a1);
    const int i1 = a / ws.angular.n2(), i2 = a % ws.angular.n2();
    const double t1 = ws.angular.theta1(i1), t2 = ws.angular.theta2(i2);
    return {r1 * std::cos(t1), r1 * std::sin(t1), r2 * std::cos(t2), r2 * std::sin(t2)};
}

namespace detail {

// One radial row of the four ambient components.
struct AmbientRow {
    int row = -1;
    std::array<Eigen::MatrixXd, 4> comp;  // each 1 x angular
};

// Cosine and sine of every angular node of one factor.
struct FactorTrig {
    Eigen::VectorXd c, s;
};

inline FactorTrig factor_trig(const FactorGrid& f) {
    FactorTrig out;
    out.c.resize(f.size());
    out.s.resize(f.size());
    for (int i = 0; i < f.size(); ++i) {
        out.c(i) = std::cos(f.theta[static_cast<std::size_t>(i)]);
        out.s(i) = std::sin(f.theta[static_cast<std::size_t>(i)]);
    }
    return out;
}

inline void build_ambient_row(const EmbeddedGraph& g, int i, const FactorTrig& tr1,
                              const FactorTrig& tr2, AmbientRow& out) {
    const Workspace& ws = *g.ws;
    const int n1 = ws.angular.n1(), n2 = ws.angular.n2(), A = ws.angular.size();
    const double t = ws.radial.t[static_cast<std::size_t>(i)];
    const double a1 = ws.link.a1, a2 = ws.link.a2;
    const double sg = static_cast<double>(ws.link.sigma);
    for (auto& c : out.comp)
        if (c.cols() != A) c.resize(1, A);
    for (int i1 = 0; i1 < n1; ++i1) {
        const double c1 = tr1.c(i1), s1 = tr1.s(i1);
        for (int i2 = 0; i2 < n2; ++i2) {
            const int a = i1 * n2 + i2;
            const double h = g.u(i, a);
            const double r1 = g.scale * (t * a1 - sg * h * a2);
            const double r2 = g.scale * (t * a2 + sg * h * a1);
            out.comp[0](0, a) = r1 * c1;
            out.comp[1](0, a) = r1 * s1;
            out.comp[2](0, a) = r2 * tr2.c(i2);
            out.comp[3](0, a) = r2 * tr2.s(i2);
        }
    }
    out.row = i;
}

// The sin components are odd across the polar endpoints of their own factor;
// everything else extends evenly.
inline bool odd_component(int comp, int factor) {
    return (factor == 1 && comp == 1) || (factor == 2 && comp == 3);
}

}  // namespace detail

// Shape data of one radial row of the embedded graph: the first and second
// fundamental forms of the visible (t, theta1, theta2) block at every angular
// node, plus the two orbit principal curvatures (zero when the corresponding
// factor is a circle and contributes no orbit directions). References are
// only valid during the sink call.
struct ShapeRow {
    std::vector<Eigen::Matrix3d> metric;
    std::vector<Eigen::Matrix3d> second;
    Eigen::VectorXd orbit1, orbit2;
};

// Streams the fundamental forms of the embedded graph row by row. This is the
// full differential-geometry pass; curvature eigenvalues and quadratic forms
// are cheap post-processing on top of it.
template <typename Sink>
inline void scan_graph_shape(const EmbeddedGraph& g, Sink&& sink) {
    const Workspace& ws = *g.ws;
    const int nr = ws.radial.count(), A = ws.angular.size();
    const int n2 = ws.angular.n2();
    const int p = ws.link.p, q = ws.link.q;
    require(nr >= 6, ErrorCode::ConfigError, "radial grid too short for stencils");
    const auto st1 = detail::make_axis_stencils(ws.radial.h, 1);
    const auto st2 = detail::make_axis_stencils(ws.radial.h, 2);
    constexpr double kPole = 1e-9;

    const detail::FactorTrig tr1 = detail::factor_trig(ws.angular.f1);
    const detail::FactorTrig tr2 = detail::factor_trig(ws.angular.f2);

    // Rolling cache of ambient rows; windows advance monotonically so a ring
    // of eight entries never evicts a row that is still needed.
    std::array<detail::AmbientRow, 8> ring;
    const auto ambient_row = [&](int r) -> const detail::AmbientRow& {
        detail::AmbientRow& slot = ring[static_cast<std::size_t>(r % 8)];
        if (slot.row != r) detail::build_ambient_row(g, r, tr1, tr2, slot);
        return slot;
    };

    ShapeRow row;
    row.metric.resize(static_cast<std::size_t>(A));
    row.second.resize(static_cast<std::size_t>(A));
    row.orbit1 = Eigen::VectorXd::Zero(A);
    row.orbit2 = Eigen::VectorXd::Zero(A);
    std::array<Eigen::MatrixXd, 4> dX, d2X;
    std::array<Eigen::MatrixXd, 4> Xt1, Xt2, Xt11, Xt22, Xt12, dXt1, dXt2;
    Eigen::VectorXd nu1row(A), nu3row(A);

    for (int i = 0; i < nr; ++i) {
        int base = 0;
        const std::vector<double>* w1 = nullptr;
        const std::vector<double>* w2 = nullptr;
        if (i <= 1) {
            base = 0;
            w1 = &st1.head[static_cast<std::size_t>(i)];
            w2 = &st2.head[static_cast<std::size_t>(i)];
        } else if (i >= nr - 2) {
            base = nr - 6;
            w1 = &st1.tail[static_cast<std::size_t>(i - (nr - 2))];
            w2 = &st2.tail[static_cast<std::size_t>(i - (nr - 2))];
        } else {
            base = i - 2;
        }
        const detail::AmbientRow& self = ambient_row(i);
        for (int c = 0; c < 4; ++c) {
            dX[c] = Eigen::MatrixXd::Zero(1, A);
            d2X[c] = Eigen::MatrixXd::Zero(1, A);
        }
        if (w1 != nullptr) {
            for (int k = 0; k < 6; ++k) {
                const detail::AmbientRow& r = ambient_row(base + k);
                for (int c = 0; c < 4; ++c) {
                    dX[c] += (*w1)[static_cast<std::size_t>(k)] * r.comp[c];
                    d2X[c] += (*w2)[static_cast<std::size_t>(k)] * r.comp[c];
                }
            }
        } else {
            for (int k = 0; k < 5; ++k) {
                const detail::AmbientRow& r = ambient_row(base + k);
                for (int c = 0; c < 4; ++c) {
                    dX[c] += st1.centred[static_cast<std::size_t>(k)] * r.comp[c];
                    d2X[c] += st2.centred[static_cast<std::size_t>(k)] * r.comp[c];
                }
            }
        }
        for (int c = 0; c < 4; ++c) {
            const bool o1 = detail::odd_component(c, 1), o2 = detail::odd_component(c, 2);
            Xt1[c] = d_theta(ws, self.comp[c], 1, 1, o1);
            Xt2[c] = d_theta(ws, self.comp[c], 2, 1, o2);
            Xt11[c] = d_theta(ws, self.comp[c], 1, 2, o1);
            Xt22[c] = d_theta(ws, self.comp[c], 2, 2, o2);
            Xt12[c] = d_theta(ws, Xt1[c], 2, 1, o2);
            dXt1[c] = d_theta(ws, dX[c], 1, 1, o1);
            dXt2[c] = d_theta(ws, dX[c], 2, 1, o2);
        }

        const double te = g.scale * ws.radial.t[static_cast<std::size_t>(i)];
        const double a1 = ws.link.a1, a2 = ws.link.a2;
        const double sg = static_cast<double>(ws.link.sigma);
        for (int a = 0; a < A; ++a) {
            Eigen::Matrix<double, 3, 4> T;  // rows: tangents along t, theta1, theta2
            Eigen::Matrix<double, 6, 4> D;  // second partials tt, t1, t2, 11, 12, 22
            for (int c = 0; c < 4; ++c) {
                T(0, c) = dX[c](0, a) / te;
                T(1, c) = Xt1[c](0, a);
                T(2, c) = Xt2[c](0, a);
                D(0, c) = (d2X[c](0, a) - dX[c](0, a)) / (te * te);
                D(1, c) = dXt1[c](0, a) / te;
                D(2, c) = dXt2[c](0, a) / te;
                D(3, c) = Xt11[c](0, a);
                D(4, c) = Xt12[c](0, a);
                D(5, c) = Xt22[c](0, a);
            }
            // Normal through the four-dimensional cross product of the tangents.
            Eigen::Vector4d nu;
            double sign = 1.0;
            for (int c = 0; c < 4; ++c) {
                Eigen::Matrix3d minor;
                int col = 0;
                for (int cc = 0; cc < 4; ++cc) {
                    if (cc == c) continue;
                    minor.col(col++) = T.col(cc);
                }
                nu(c) = sign * minor.determinant();
                sign = -sign;
            }
            const double tangent_scale =
                T.row(0).norm() * T.row(1).norm() * T.row(2).norm();
            require(nu.norm() > 1e-12 * tangent_scale && tangent_scale > 0.0,
                    ErrorCode::NormalDegeneracy, "tangent block is numerically rank deficient");
            nu.normalize();
            const int i1 = a / n2, i2 = a % n2;
            const double c1 = tr1.c(i1), s1 = tr1.s(i1);
            const double c2 = tr2.c(i2), s2 = tr2.s(i2);
            const double ref = sg * (-a2 * (nu(0) * c1 + nu(1) * s1) + a1 * (nu(2) * c2 + nu(3) * s2));
            if (ref < 0.0) nu = -nu;

            Eigen::Matrix3d G = T * T.transpose();
            Eigen::Matrix3d II;
            II(0, 0) = D.row(0).dot(nu);
            II(0, 1) = II(1, 0) = D.row(1).dot(nu);
            II(0, 2) = II(2, 0) = D.row(2).dot(nu);
            II(1, 1) = D.row(3).dot(nu);
            II(1, 2) = II(2, 1) = D.row(4).dot(nu);
            II(2, 2) = D.row(5).dot(nu);
            row.metric[static_cast<std::size_t>(a)] = G;
            row.second[static_cast<std::size_t>(a)] = II;
            nu1row(a) = nu(1);
            nu3row(a) = nu(3);
        }

        // Orbit curvatures -nu_{x1}/x1 and -nu_{y1}/y1; at a polar endpoint
        // both numerator and denominator vanish to first order and the limit
        // is taken as a ratio of one-sided odd-extension derivatives.
        const detail::AmbientRow& rowX = self;
        for (int a = 0; a < A; ++a) {
            const int i1 = a / n2, i2 = a % n2;
            if (p >= 2) {
                const double s1 = tr1.s(i1);
                if (std::abs(s1) > kPole) {
                    row.orbit1(a) = -nu1row(a) / rowX.comp[1](0, a);
                } else {
                    const int dir = i1 == 0 ? 1 : -1;
                    const int j1 = i1 + dir, j2 = i1 + 2 * dir;
                    const double fn = 16.0 * nu1row(j1 * n2 + i2) - 2.0 * nu1row(j2 * n2 + i2);
                    const double fd = 16.0 * rowX.comp[1](0, j1 * n2 + i2) -
                                      2.0 * rowX.comp[1](0, j2 * n2 + i2);
                    require(std::abs(fd) > 0.0, ErrorCode::NormalDegeneracy,
                            "orbit radius derivative vanished at a pole");
                    row.orbit1(a) = -fn / fd;
                }
            }
            if (q >= 2) {
                const double s2 = tr2.s(i2);
                if (std::abs(s2) > kPole) {
                    row.orbit2(a) = -nu3row(a) / rowX.comp[3](0, a);
                } else {
                    const int dir = i2 == 0 ? 1 : -1;
                    const int j1 = i2 + dir, j2 = i2 + 2 * dir;
                    const double fn = 16.0 * nu3row(i1 * n2 + j1) - 2.0 * nu3row(i1 * n2 + j2);
                    const double fd = 16.0 * rowX.comp[3](0, i1 * n2 + j1) -
                                      2.0 * rowX.comp[3](0, i1 * n2 + j2);
                    require(std::abs(fd) > 0.0, ErrorCode::NormalDegeneracy,
                            "orbit radius derivative vanished at a pole");
                    row.orbit2(a) = -fn / fd;
                }
            }
        }
        sink(i, static_cast<const ShapeRow&>(row));
    }
}

// Streams the principal curvature multiset of the embedded graph row by row.
// For each radial index i the sink receives a matrix with one row per angular
// node and n columns: the three curvatures of the visible (t, theta1, theta2)
// block in ascending order, then the orbit curvature of the first factor
// repeated (p - 1) times, then the second factor repeated (q - 1) times. The
// matrix reference is only valid during the sink call.
template <typename Sink>
inline void scan_graph_curvatures(const EmbeddedGraph& g, Sink&& sink) {
    const Workspace& ws = *g.ws;
    const int A = ws.angular.size(), n = ws.n();
    const int p = ws.link.p, q = ws.link.q;
    Eigen::MatrixXd kappa(A, n);
    scan_graph_shape(g, [&](int i, const ShapeRow& row) {
        for (int a = 0; a < A; ++a) {
            Eigen::LLT<Eigen::Matrix3d> llt(row.metric[static_cast<std::size_t>(a)]);
            require(llt.info() == Eigen::Success, ErrorCode::NormalDegeneracy,
                    "first fundamental form is not positive definite");
            const Eigen::Matrix3d L = llt.matrixL();
            const Eigen::Matrix3d Y =
                L.triangularView<Eigen::Lower>().solve(row.second[static_cast<std::size_t>(a)]);
            Eigen::Matrix3d B =
                L.triangularView<Eigen::Lower>().solve(Eigen::Matrix3d(Y.transpose()));
            B = 0.5 * (B + B.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
            es.computeDirect(B, Eigen::EigenvaluesOnly);
            kappa(a, 0) = es.eigenvalues()(0);
            kappa(a, 1) = es.eigenvalues()(1);
            kappa(a, 2) = es.eigenvalues()(2);
            int col = 3;
            for (int r = 0; r < p - 1; ++r) kappa(a, col++) = row.orbit1(a);
            for (int r = 0; r < q - 1; ++r) kappa(a, col++) = row.orbit2(a);
        }
        sink(i, kappa);
    });
}

// Pointwise elementary symmetric functions of the principal curvatures.
struct SymmetricFields {
    Eigen::MatrixXd s1, s2, s3;  // radial nodes x angular nodes
};

inline SymmetricFields symmetric_functions_field(const EmbeddedGraph& g) {
    const Workspace& ws = *g.ws;
    const int nr = ws.radial.count(), A = ws.angular.size(), n = ws.n();
    SymmetricFields out;
    out.s1.resize(nr, A);
    out.s2.resize(nr, A);
    out.s3.resize(nr, A);
    scan_graph_curvatures(g, [&](int i, const Eigen::MatrixXd& kappa) {
        for (int a = 0; a < A; ++a) {
            double p1 = 0.0, p2 = 0.0, p3 = 0.0;
            for (int c = 0; c < n; ++c) {
                const double k = kappa(a, c);
                p1 += k;
                p2 += k * k;
                p3 += k * k * k;
            }
            out.s1(i, a) = p1;
            out.s2(i, a) = 0.5 * (p1 * p1 - p2);
            out.s3(i, a) = (p1 * p1 * p1 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0;
        }
    });
    return out;
}

// Quadratic-and-higher remainder of the scalar curvature functional: the
// embedded S2 of the graph, with the flat-cone baseline of the same grid
// subtracted to cancel the discretisation bias, minus the linearised operator.
// Vanishes identically at u = 0 by construction.
inline ConeField nonlinear_remainder(const Workspace& ws, const ConeField& u) {
    ConeField uu = u;
    if (!uu.has_values) synthesize_field(ws, uu);
    const SymmetricFields bent = symmetric_functions_field(embed_graph(ws, uu));
    const SymmetricFields base = symmetric_functions_field(embed_graph(ws, make_zero_field(ws)));
    const ConeField lu = jacobi_apply(
        ws, uu, uu.has_profiles ? JacobiForm::Spectral : JacobiForm::Divergence);
    ConeField out;
    out.values = (bent.s2 - base.s2) - lu.values;
    out.has_values = true;
    return out;
}

}  // namespace conelab
