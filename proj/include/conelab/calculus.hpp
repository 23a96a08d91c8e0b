#pragma once

// Differential operators on the truncated cone in zonal coordinates (t, theta1,
// theta2): finite-difference derivative fields, the orthonormal-frame Hessian
// (with the orbit directions handled analytically), the Jacobi operator in its
// spectral and divergence forms, the explicit leading quadratic remainder, and
// the weighted C^2 norm of the solution class.
//
// Frame conventions. At a point of the cone the orthonormal frame consists of
// the ray direction, the polar direction of each sphere factor, and the orbit
// directions inside each factor. For doubly-zonal fields all components over an
// orbit direction coincide, so every tensor reduces to a handful of scalar
// fields; the cot(theta) orbit terms get their pole values from the smooth even
// extension (L'Hopital).

#include <cmath>
#include <random>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "conelab/field.hpp"

namespace conelab {

// Finite-difference weights on arbitrary nodes (Fornberg's recursion) for the
// derivative of the given order evaluated at x0.
inline std::vector<double> fd_weights(double x0, const std::vector<double>& xs, int order) {
    const int n = static_cast<int>(xs.size());
    require(order >= 0 && order < n, ErrorCode::InvalidOrder, "stencil too short for order");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, order + 1);
    C(0, 0) = 1.0;
    double c1 = 1.0, c4 = xs[0] - x0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, order);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = xs[static_cast<std::size_t>(i)] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    C(i, k) = c1 * (k * C(i - 1, k - 1) - c5 * C(i - 1, k)) / c2;
                C(i, 0) = -c1 * c5 * C(i - 1, 0) / c2;
            }
            for (int k = mn; k >= 1; --k) C(j, k) = (c4 * C(j, k) - k * C(j, k - 1)) / c3;
            C(j, 0) = c4 * C(j, 0) / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = C(i, order);
    return w;
}

namespace detail {

// Fourth-order stencil set for a uniform axis: centred 5-point rules plus
// one-sided 6-point rules for the first two and last two nodes.
struct AxisStencils {
    std::vector<double> centred;            // offsets -2 .. 2
    std::vector<std::vector<double>> head;  // nodes 0, 1 over offsets 0 .. 5
    std::vector<std::vector<double>> tail;  // nodes n-2, n-1 over offsets -5 .. 0
};

inline AxisStencils make_axis_stencils(double h, int order) {
    AxisStencils s;
    const std::vector<double> c5 = {-2.0 * h, -h, 0.0, h, 2.0 * h};
    s.centred = fd_weights(0.0, c5, order);
    std::vector<double> six(6);
    for (int i = 0; i < 6; ++i) six[static_cast<std::size_t>(i)] = i * h;
    s.head.push_back(fd_weights(0.0, six, order));
    s.head.push_back(fd_weights(h, six, order));
    for (int i = 0; i < 6; ++i) six[static_cast<std::size_t>(i)] = (i - 5) * h;
    s.tail.push_back(fd_weights(-h, six, order));
    s.tail.push_back(fd_weights(0.0, six, order));
    return s;
}

enum class AxisKind { OneSided, EvenReflect, OddReflect, Periodic };

// Derivative of `v` along an index axis of length `len`, where the axis entries
// of one line are fetched/stored through `get`/`set`. Reflection ghosts encode
// the smooth even (or odd) extension across polar endpoints.
template <typename Get, typename Set>
inline void axis_derivative_line(const AxisStencils& s, AxisKind kind, int len, Get get, Set set) {
    const auto reflect = [len](int idx) {
        if (idx < 0) return -idx;
        if (idx >= len) return 2 * (len - 1) - idx;
        return idx;
    };
    const auto wrap = [len](int idx) { return ((idx % len) + len) % len; };
    using Value = std::decay_t<decltype(get(0))>;
    for (int i = 0; i < len; ++i) {
        Value acc{};
        if (kind == AxisKind::Periodic) {
            for (int o = -2; o <= 2; ++o)
                acc += s.centred[static_cast<std::size_t>(o + 2)] * get(wrap(i + o));
        } else if (kind == AxisKind::EvenReflect || kind == AxisKind::OddReflect) {
            for (int o = -2; o <= 2; ++o) {
                const int idx = i + o;
                const int r = reflect(idx);
                const double sgn = (kind == AxisKind::OddReflect && idx != r) ? -1.0 : 1.0;
                acc += sgn * s.centred[static_cast<std::size_t>(o + 2)] * get(r);
            }
        } else if (i <= 1) {
            for (int o = 0; o < 6; ++o)
                acc += s.head[static_cast<std::size_t>(i)][static_cast<std::size_t>(o)] * get(o);
        } else if (i >= len - 2) {
            for (int o = 0; o < 6; ++o)
                acc += s.tail[static_cast<std::size_t>(i - (len - 2))][static_cast<std::size_t>(o)] *
                       get(len - 6 + o);
        } else {
            for (int o = -2; o <= 2; ++o)
                acc += s.centred[static_cast<std::size_t>(o + 2)] * get(i + o);
        }
        set(i, acc);
    }
}

}  // namespace detail

// d^order/dx^order along the log-radial axis (x = ln t), any matrix scalar.
template <typename Derived>
inline typename Derived::PlainObject d_radial(const Workspace& ws,
                                              const Eigen::MatrixBase<Derived>& v, int order) {
    require(ws.radial.count() >= 6, ErrorCode::ConfigError, "radial grid too short for stencils");
    const auto s = detail::make_axis_stencils(ws.radial.h, order);
    typename Derived::PlainObject out(v.rows(), v.cols());
    for (Eigen::Index col = 0; col < v.cols(); ++col)
        detail::axis_derivative_line(
            s, detail::AxisKind::OneSided, static_cast<int>(v.rows()),
            [&](int i) { return v(i, col); }, [&](int i, auto val) { out(i, col) = val; });
    return out;
}

// Derivative along the first or second angular factor of a (radial x angular)
// value matrix; polar factors use the even reflection at the poles.
inline Eigen::MatrixXd d_theta(const Workspace& ws, const Eigen::MatrixXd& v, int factor,
                               int order, bool odd_parity = false) {
    const FactorGrid& f = factor == 1 ? ws.angular.f1 : ws.angular.f2;
    require(f.size() >= 6, ErrorCode::ConfigError, "angular factor too short for stencils");
    const double h = f.circle ? 2.0 * pi / f.size() : pi / (f.size() - 1);
    const auto s = detail::make_axis_stencils(h, order);
    const auto kind = f.circle ? detail::AxisKind::Periodic
                               : (odd_parity ? detail::AxisKind::OddReflect
                                             : detail::AxisKind::EvenReflect);
    const int n1 = ws.angular.n1(), n2 = ws.angular.n2();
    Eigen::MatrixXd out(v.rows(), v.cols());
    for (Eigen::Index row = 0; row < v.rows(); ++row) {
        if (factor == 1) {
            for (int i2 = 0; i2 < n2; ++i2)
                detail::axis_derivative_line(
                    s, kind, n1, [&](int i1) { return v(row, ws.angular.index(i1, i2)); },
                    [&](int i1, double val) { out(row, ws.angular.index(i1, i2)) = val; });
        } else {
            for (int i1 = 0; i1 < n1; ++i1)
                detail::axis_derivative_line(
                    s, kind, n2, [&](int i2) { return v(row, ws.angular.index(i1, i2)); },
                    [&](int i2, double val) { out(row, ws.angular.index(i1, i2)) = val; });
        }
    }
    return out;
}

// All first and second coordinate derivatives of a grid field.
struct ConeDerivatives {
    Eigen::MatrixXd ut, utt;             // d/dt, d2/dt2
    Eigen::MatrixXd d1, d11, d2, d22;    // angular derivatives
    Eigen::MatrixXd td1, td2, d12;       // mixed: d/dt d/dtheta, cross-factor
};

inline ConeDerivatives compute_derivatives(const Workspace& ws, const Eigen::MatrixXd& v) {
    ConeDerivatives d;
    const Eigen::MatrixXd vx = d_radial(ws, v, 1);
    const Eigen::MatrixXd vxx = d_radial(ws, v, 2);
    d.d1 = d_theta(ws, v, 1, 1);
    d.d11 = d_theta(ws, v, 1, 2);
    d.d2 = d_theta(ws, v, 2, 1);
    d.d22 = d_theta(ws, v, 2, 2);
    d.d12 = d_theta(ws, d.d1, 2, 1);
    const Eigen::MatrixXd d1x = d_radial(ws, d.d1, 1);
    const Eigen::MatrixXd d2x = d_radial(ws, d.d2, 1);
    d.ut.resizeLike(v);
    d.utt.resizeLike(v);
    d.td1.resizeLike(v);
    d.td2.resizeLike(v);
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        d.ut.row(i) = vx.row(i) / t;
        d.utt.row(i) = (vxx.row(i) - vx.row(i)) / (t * t);
        d.td1.row(i) = d1x.row(i) / t;
        d.td2.row(i) = d2x.row(i) / t;
    }
    return d;
}

// Orthonormal-frame Hessian components, gradient components, and Laplacian.
struct FrameFields {
    Eigen::MatrixXd Htt, H11, H22, h1, h2;  // diagonal (h1, h2: orbit directions)
    Eigen::MatrixXd Ht1, Ht2, H12;          // off-diagonal
    Eigen::MatrixXd gt, g1, g2;             // frame gradient
    Eigen::MatrixXd lap;
};

inline FrameFields frame_fields(const Workspace& ws, const ConeDerivatives& d) {
    const int nr = ws.radial.count(), na = ws.angular.size();
    const double a1 = ws.link.a1, a2 = ws.link.a2;
    const int p = ws.link.p, q = ws.link.q;
    FrameFields ff;
    for (Eigen::MatrixXd* m :
         {&ff.Htt, &ff.H11, &ff.H22, &ff.h1, &ff.h2, &ff.Ht1, &ff.Ht2, &ff.H12, &ff.gt, &ff.g1,
          &ff.g2, &ff.lap})
        m->resize(nr, na);

    constexpr double kPole = 1e-9;
    for (int i = 0; i < nr; ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1) {
            const double th1 = ws.angular.theta1(i1);
            const double sin1 = std::sin(th1), cos1 = std::cos(th1);
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2) {
                const double th2 = ws.angular.theta2(i2);
                const int a = ws.angular.index(i1, i2);
                const double ut = d.ut(i, a);
                ff.Htt(i, a) = d.utt(i, a);
                ff.H11(i, a) = d.d11(i, a) / (t * t * a1 * a1) + ut / t;
                ff.H22(i, a) = d.d22(i, a) / (t * t * a2 * a2) + ut / t;
                ff.Ht1(i, a) = (d.td1(i, a) - d.d1(i, a) / t) / (t * a1);
                ff.Ht2(i, a) = (d.td2(i, a) - d.d2(i, a) / t) / (t * a2);
                ff.H12(i, a) = d.d12(i, a) / (t * t * a1 * a2);
                ff.gt(i, a) = ut;
                ff.g1(i, a) = d.d1(i, a) / (t * a1);
                ff.g2(i, a) = d.d2(i, a) / (t * a2);
                if (p >= 2) {
                    ff.h1(i, a) = std::abs(sin1) < kPole
                                      ? ut / t + d.d11(i, a) / (t * t * a1 * a1)
                                      : ut / t + cos1 * d.d1(i, a) / (t * t * a1 * a1 * sin1);
                } else {
                    ff.h1(i, a) = 0.0;
                }
                if (q >= 2) {
                    const double sin2 = std::sin(th2), cos2 = std::cos(th2);
                    ff.h2(i, a) = std::abs(sin2) < kPole
                                      ? ut / t + d.d22(i, a) / (t * t * a2 * a2)
                                      : ut / t + cos2 * d.d2(i, a) / (t * t * a2 * a2 * sin2);
                } else {
                    ff.h2(i, a) = 0.0;
                }
                ff.lap(i, a) = ff.Htt(i, a) + ff.H11(i, a) + ff.H22(i, a) +
                               (p - 1) * ff.h1(i, a) + (q - 1) * ff.h2(i, a);
            }
        }
    }
    return ff;
}

inline Eigen::MatrixXd hessian_frobenius_sq(const Workspace& ws, const FrameFields& ff) {
    const int p = ws.link.p, q = ws.link.q;
    return ff.Htt.cwiseAbs2() + ff.H11.cwiseAbs2() + ff.H22.cwiseAbs2() +
           (p - 1) * ff.h1.cwiseAbs2() + (q - 1) * ff.h2.cwiseAbs2() +
           2.0 * (ff.Ht1.cwiseAbs2() + ff.Ht2.cwiseAbs2() + ff.H12.cwiseAbs2());
}

// Static curvature data of the scalar-flat cone.
struct ConeGeometry {
    CliffordLink link;
    CurvatureInvariants inv;
    // S_r of the cone cross-section scales as t^{-r}.
    double sbar(int r, double t) const {
        switch (r) {
            case 1: return inv.S1 / t;
            case 2: return inv.S2 / (t * t);
            case 3: return inv.S3 / (t * t * t);
            case 4: return inv.S4 / (t * t * t * t);
            default: fail(ErrorCode::InvalidOrder, "sbar supports r in 1..4");
        }
    }
};

inline ConeGeometry make_geometry(const Workspace& ws) { return {ws.link, ws.inv}; }

enum class JacobiForm { Spectral, Divergence };

// Jacobi operator (linearised scalar curvature) applied to u. The result is a
// source density: values hold Lu pointwise and, for the spectral form, the
// profiles hold the density coefficients (Lu)_j = (t^2 a_j'' + (n-2) t a_j' -
// mu_j a_j)/t^3, so that Lu = S1 sum_j (Lu)_j phi_j.
inline ConeField jacobi_apply(const Workspace& ws, const ConeField& u,
                              JacobiForm form = JacobiForm::Spectral) {
    const int n = ws.n();
    ConeField out;
    if (form == JacobiForm::Spectral) {
        require(u.has_profiles, ErrorCode::MissingProfiles,
                "spectral jacobi_apply needs mode profiles");
        const Eigen::MatrixXcd ax = d_radial(ws, u.profiles.transpose(), 1).transpose();
        const Eigen::MatrixXcd axx = d_radial(ws, u.profiles.transpose(), 2).transpose();
        out.profiles.resize(ws.n_modes(), ws.radial.count());
        for (int j = 0; j < ws.n_modes(); ++j) {
            const double mu = ws.basis.modes[static_cast<std::size_t>(j)].mu;
            for (int i = 0; i < ws.radial.count(); ++i) {
                const double t = ws.radial.t[static_cast<std::size_t>(i)];
                // t^2 a'' + (n-2) t a' - mu a = a_xx + (n-3) a_x - mu a in x = ln t.
                out.profiles(j, i) =
                    (axx(j, i) + (n - 3.0) * ax(j, i) - mu * u.profiles(j, i)) / (t * t * t);
            }
        }
        out.has_profiles = true;
        out.values.resize(ws.radial.count(), ws.angular.size());
        const Eigen::MatrixXd re = out.profiles.real();
        for (int i = 0; i < ws.radial.count(); ++i)
            out.values.row(i) = ws.inv.S1 * ws.basis.synthesize(re.col(i)).transpose();
        out.has_values = true;
        return out;
    }

    require(u.has_values, ErrorCode::MissingProfiles, "divergence jacobi_apply needs grid values");
    const auto d = compute_derivatives(ws, u.values);
    const double c1 = (ws.inv.S1 - ws.link.lambda1()) / (ws.link.a1 * ws.link.a1);
    const double c2 = (ws.inv.S1 - ws.link.lambda2()) / (ws.link.a2 * ws.link.a2);
    out.values.resize(ws.radial.count(), ws.angular.size());
    constexpr double kPole = 1e-9;
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1) {
            const double th1 = ws.angular.theta1(i1);
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2) {
                const int a = ws.angular.index(i1, i2);
                // Zonal Laplacians of the unit factors, poles by even limits.
                double lap1 = d.d11(i, a);
                if (ws.link.p >= 2) {
                    const double s = std::sin(th1);
                    lap1 = std::abs(s) < kPole
                               ? ws.link.p * d.d11(i, a)
                               : d.d11(i, a) + (ws.link.p - 1) * std::cos(th1) / s * d.d1(i, a);
                }
                const double th2 = ws.angular.theta2(i2);
                double lap2 = d.d22(i, a);
                if (ws.link.q >= 2) {
                    const double s = std::sin(th2);
                    lap2 = std::abs(s) < kPole
                               ? ws.link.q * d.d22(i, a)
                               : d.d22(i, a) + (ws.link.q - 1) * std::cos(th2) / s * d.d2(i, a);
                }
                out.values(i, a) = ws.inv.S1 * (d.utt(i, a) / t + (n - 2.0) * d.ut(i, a) / (t * t)) +
                                   (c1 * lap1 + c2 * lap2) / (t * t * t) -
                                   3.0 * ws.inv.S3 * u.values(i, a) / (t * t * t);
            }
        }
    }
    out.has_values = true;
    return out;
}

// Explicit quadratic remainder of the scalar-curvature expansion at the cone:
// the complete second-order term of S2 of the normal graph, assembled from the
// frame Hessian and the cone curvatures. Valid on scalar-flat cones.
inline ConeField explicit_leading_Q(const Workspace& ws, const ConeField& u) {
    require(u.has_values, ErrorCode::MissingProfiles, "explicit_leading_Q needs grid values");
    const auto d = compute_derivatives(ws, u.values);
    const auto ff = frame_fields(ws, d);
    const Eigen::MatrixXd hess2 = hessian_frobenius_sq(ws, ff);
    const double S1 = ws.inv.S1, P3 = ws.inv.P3, P4 = ws.inv.P4;
    const double l1 = ws.link.lambda1(), l2 = ws.link.lambda2();
    const int p = ws.link.p, q = ws.link.q;
    const double quartic = 0.5 * sq(sq(S1)) + S1 * P3 - 1.5 * P4;

    ConeField out;
    out.values.resize(ws.radial.count(), ws.angular.size());
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        for (int a = 0; a < ws.angular.size(); ++a) {
            const double uval = u.values(i, a);
            const double lap = ff.lap(i, a);
            const double tr1 = ff.H11(i, a) + (p - 1) * ff.h1(i, a);  // factor-1 Hessian trace
            const double tr2 = ff.H22(i, a) + (q - 1) * ff.h2(i, a);
            const double trAH = (l1 * tr1 + l2 * tr2) / t;
            const double trA2H = (l1 * l1 * tr1 + l2 * l2 * tr2) / (t * t);
            const double newton_grad = (S1 - l1) * l1 / (t * t) * sq(ff.g1(i, a)) +
                                       (S1 - l2) * l2 / (t * t) * sq(ff.g2(i, a));
            out.values(i, a) = 0.5 * (sq(lap) - hess2(i, a)) +
                               uval * (sq(S1 / t) * lap + 2.0 * (S1 / t) * trAH - 3.0 * trA2H) +
                               newton_grad + sq(uval) * quartic / (t * t * t * t);
        }
    }
    out.has_values = true;
    return out;
}

// Weighted C^2 norm: sup_t t^{-m} sup_{A_t} (|v| + t|grad v| + t^2 |Hess v|),
// with A_t the annulus t <= |X| <= 2t intersected with the grid.
inline double weighted_c2_norm(const Workspace& ws, const ConeField& v, double m) {
    require(v.has_values, ErrorCode::MissingProfiles, "weighted_c2_norm needs grid values");
    const auto d = compute_derivatives(ws, v.values);
    const auto ff = frame_fields(ws, d);
    const Eigen::MatrixXd hess = hessian_frobenius_sq(ws, ff).cwiseSqrt();

    const int nr = ws.radial.count();
    Eigen::VectorXd pointwise(nr);
    for (int i = 0; i < nr; ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        double s = 0.0;
        for (int a = 0; a < ws.angular.size(); ++a) {
            const double grad = std::sqrt(sq(ff.gt(i, a)) + sq(ff.g1(i, a)) + sq(ff.g2(i, a)));
            s = std::max(s, std::abs(v.values(i, a)) + t * grad + t * t * hess(i, a));
        }
        pointwise(i) = s;
    }
    double norm = 0.0;
    for (int i = 0; i < nr; ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        double annulus = 0.0;
        for (int j = i; j < nr && ws.radial.t[static_cast<std::size_t>(j)] <= 2.0 * t * (1.0 + 1e-12);
             ++j)
            annulus = std::max(annulus, pointwise(j));
        norm = std::max(norm, std::pow(t, -m) * annulus);
    }
    return norm;
}

// Sampled Holder-type quotient of the Hessian over random node pairs inside a
// shared annulus; a completeness diagnostic, not a proof-grade seminorm.
inline double sampled_holder_quotient(const Workspace& ws, const ConeField& v, double m,
                                      double alpha, int samples, std::uint64_t seed) {
    require(v.has_values, ErrorCode::MissingProfiles, "holder quotient needs grid values");
    const auto d = compute_derivatives(ws, v.values);
    const auto ff = frame_fields(ws, d);
    const Eigen::MatrixXd hess = hessian_frobenius_sq(ws, ff).cwiseSqrt();

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_r(0, ws.radial.count() - 2);
    std::uniform_int_distribution<int> pick_a(0, ws.angular.size() - 1);
    double quot = 0.0;
    for (int s = 0; s < samples; ++s) {
        const int i = pick_r(rng);
        int j = std::min(i + 1 + static_cast<int>(rng() % 3), ws.radial.count() - 1);
        const int a = pick_a(rng), b = pick_a(rng);
        const double ti = ws.radial.t[static_cast<std::size_t>(i)];
        const double tj = ws.radial.t[static_cast<std::size_t>(j)];
        const int a1i = a / ws.angular.n2(), a2i = a % ws.angular.n2();
        const int b1i = b / ws.angular.n2(), b2i = b % ws.angular.n2();
        const double dist = std::hypot(
            tj - ti, ti * ws.link.a1 * (ws.angular.theta1(a1i) - ws.angular.theta1(b1i)),
            ti * ws.link.a2 * (ws.angular.theta2(a2i) - ws.angular.theta2(b2i)));
        if (dist <= 0.0) continue;
        const double diff = std::abs(hess(i, a) - hess(j, b));
        quot = std::max(quot, std::pow(ti, 2.0 + alpha - m) * diff / std::pow(dist, alpha));
    }
    return quot;
}

}  // namespace conelab
