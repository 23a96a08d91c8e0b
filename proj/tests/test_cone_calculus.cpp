#include <catch2/catch_amalgamated.hpp>

#include "conelab/calculus.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace conelab;
using Catch::Approx;

namespace {

Workspace small_workspace(int radial = 129, int ang1 = 33, int ang2 = 32, int budget = 80) {
    WorkspaceConfig cfg;
    cfg.radial_nodes = radial;
    cfg.angular_nodes1 = ang1;
    cfg.angular_nodes2 = ang2;
    cfg.mode_budget = budget;
    return make_workspace(2, 1, cfg);
}

// Field u = t^s * w1(theta1) * w2(theta2) sampled on the workspace grid.
template <typename F1, typename F2>
ConeField sampled_field(const Workspace& ws, double s, F1 w1, F2 w2) {
    ConeField u;
    u.values.resize(ws.radial.count(), ws.angular.size());
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double ts = std::pow(ws.radial.t[static_cast<std::size_t>(i)], s);
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1)
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2)
                u.values(i, ws.angular.index(i1, i2)) =
                    ts * w1(ws.angular.theta1(i1)) * w2(ws.angular.theta2(i2));
    }
    u.has_values = true;
    return u;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("finite difference weights differentiate polynomials exactly", "[calculus]") {
    const std::vector<double> nodes = {0.0, 0.3, 0.7, 1.1, 1.6, 2.0};
    for (int order = 0; order <= 2; ++order) {
        const auto w = fd_weights(0.7, nodes, order);
        // Apply to x^k for k up to 5 and compare with the analytic derivative.
        for (int k = 0; k <= 5; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < nodes.size(); ++i) acc += w[i] * std::pow(nodes[i], k);
            double exact = 1.0;
            for (int d = 0; d < order; ++d) exact *= k - d;
            exact = (k - order >= 0) ? exact * std::pow(0.7, k - order) : 0.0;
            CHECK(acc == Approx(exact).margin(1e-10));
        }
    }
    CHECK_THROWS_AS(fd_weights(0.0, {0.0, 1.0}, 2), Error);
}

TEST_CASE("derivative kit reaches fourth order on separable fields", "[calculus]") {
    const auto ws = small_workspace();
    // u = t^{5/2} cos(theta1) cos(2 theta2): smooth, zonal, band-limited.
    const auto u = sampled_field(
        ws, 2.5, [](double a) { return std::cos(a); }, [](double b) { return std::cos(2.0 * b); });
    const auto d = compute_derivatives(ws, u.values);

    double e_ut = 0.0, e_utt = 0.0, e_d1 = 0.0, e_d11 = 0.0, e_d2 = 0.0, e_d22 = 0.0,
           e_td1 = 0.0, e_d12 = 0.0;
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        const double ts = std::pow(t, 2.5);
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1)
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2) {
                const double c1 = std::cos(ws.angular.theta1(i1));
                const double s1 = std::sin(ws.angular.theta1(i1));
                const double c2 = std::cos(2.0 * ws.angular.theta2(i2));
                const double s2 = std::sin(2.0 * ws.angular.theta2(i2));
                const int a = ws.angular.index(i1, i2);
                e_ut = std::max(e_ut, std::abs(d.ut(i, a) - 2.5 * ts / t * c1 * c2));
                e_utt = std::max(e_utt, std::abs(d.utt(i, a) - 3.75 * ts / (t * t) * c1 * c2));
                e_d1 = std::max(e_d1, std::abs(d.d1(i, a) + ts * s1 * c2));
                e_d11 = std::max(e_d11, std::abs(d.d11(i, a) + ts * c1 * c2));
                e_d2 = std::max(e_d2, std::abs(d.d2(i, a) + 2.0 * ts * c1 * s2));
                e_d22 = std::max(e_d22, std::abs(d.d22(i, a) + 4.0 * ts * c1 * c2));
                e_td1 = std::max(e_td1, std::abs(d.td1(i, a) + 2.5 * ts / t * s1 * c2));
                e_d12 = std::max(e_d12, std::abs(d.d12(i, a) - 2.0 * ts * s1 * s2));
            }
    }
    for (double e : {e_ut, e_utt, e_d1, e_d11, e_d2, e_d22, e_td1, e_d12}) CHECK(e < 2e-3);

    // Radial refinement drops the radial-derivative error at fourth order.
    const auto ws2 = small_workspace(257);
    const auto u2 = sampled_field(
        ws2, 2.5, [](double a) { return std::cos(a); }, [](double b) { return std::cos(2.0 * b); });
    const auto dd = compute_derivatives(ws2, u2.values);
    double e2 = 0.0;
    for (int i = 0; i < ws2.radial.count(); ++i) {
        const double t = ws2.radial.t[static_cast<std::size_t>(i)];
        for (int a = 0; a < ws2.angular.size(); ++a) {
            const int i1 = a / ws2.angular.n2(), i2 = a % ws2.angular.n2();
            const double exact = 3.75 * std::pow(t, 0.5) * std::cos(ws2.angular.theta1(i1)) *
                                 std::cos(2.0 * ws2.angular.theta2(i2));
            e2 = std::max(e2, std::abs(dd.utt(i, a) - exact));
        }
    }
    CHECK(e2 < e_utt / 8.0);
}

TEST_CASE("frame Hessian of a radial parabola is the identity times two", "[calculus]") {
    const auto ws = small_workspace();
    const auto u = sampled_field(
        ws, 2.0, [](double) { return 1.0; }, [](double) { return 1.0; });
    const auto d = compute_derivatives(ws, u.values);
    const auto ff = frame_fields(ws, d);

    const int n = ws.n();
    CHECK(max_abs(ff.Htt - Eigen::MatrixXd::Constant(ff.Htt.rows(), ff.Htt.cols(), 2.0)) < 1e-3);
    CHECK(max_abs(ff.H11 - Eigen::MatrixXd::Constant(ff.H11.rows(), ff.H11.cols(), 2.0)) < 1e-3);
    CHECK(max_abs(ff.H22 - Eigen::MatrixXd::Constant(ff.H22.rows(), ff.H22.cols(), 2.0)) < 1e-3);
    CHECK(max_abs(ff.h1 - Eigen::MatrixXd::Constant(ff.h1.rows(), ff.h1.cols(), 2.0)) < 1e-3);
    CHECK(max_abs(ff.Ht1) < 1e-3);
    CHECK(max_abs(ff.Ht2) < 1e-3);
    CHECK(max_abs(ff.H12) < 1e-3);
    CHECK(max_abs(ff.lap - Eigen::MatrixXd::Constant(ff.lap.rows(), ff.lap.cols(), 2.0 * n)) <
          4e-3);
    // |Delta u|^2 - |Hess u|^2 = 4 n (n - 1) for u = t^2 on any cone.
    const Eigen::MatrixXd gap = ff.lap.cwiseAbs2() - hessian_frobenius_sq(ws, ff);
    CHECK(max_abs(gap - Eigen::MatrixXd::Constant(gap.rows(), gap.cols(), 4.0 * n * (n - 1.0))) <
          0.1);
}

TEST_CASE("frame Hessian matches closed forms on an angular mode", "[calculus]") {
    const auto ws = small_workspace();
    // u = t^2 cos(theta1): exercises the mixed radial-angular component and the
    // orbit diagonal away from the constant-field degeneracies.
    const auto u = sampled_field(
        ws, 2.0, [](double a) { return std::cos(a); }, [](double) { return 1.0; });
    const auto d = compute_derivatives(ws, u.values);
    const auto ff = frame_fields(ws, d);
    const double a1 = ws.link.a1;

    double e11 = 0.0, eh1 = 0.0, et1 = 0.0, elap = 0.0;
    for (int i = 0; i < ws.radial.count(); ++i)
        for (int i1 = 0; i1 < ws.angular.n1(); ++i1) {
            const double th = ws.angular.theta1(i1);
            const double c = std::cos(th), s = std::sin(th);
            for (int i2 = 0; i2 < ws.angular.n2(); ++i2) {
                const int a = ws.angular.index(i1, i2);
                e11 = std::max(e11, std::abs(ff.H11(i, a) - c * (2.0 - 1.0 / (a1 * a1))));
                eh1 = std::max(eh1, std::abs(ff.h1(i, a) - c * (2.0 - 1.0 / (a1 * a1))));
                et1 = std::max(et1, std::abs(ff.Ht1(i, a) + s / a1));
                elap = std::max(elap, std::abs(ff.lap(i, a) - c * (8.0 - 2.0 / (a1 * a1))));
            }
        }
    CHECK(e11 < 1e-3);
    CHECK(eh1 < 1e-3);
    CHECK(et1 < 1e-3);
    CHECK(elap < 4e-3);
}

TEST_CASE("Jacobi operator annihilates the indicial solutions", "[calculus]") {
    const auto coarse = small_workspace(65);
    const auto fine = small_workspace(129);
    double worst_fine = 0.0, worst_coarse = 0.0;
    for (const Workspace* wsp : {&coarse, &fine}) {
        const Workspace& ws = *wsp;
        double worst = 0.0;
        for (int j = 0; j < ws.n_modes(); ++j) {
            ConeField u;
            u.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
            const cplx g = ws.basis.modes[static_cast<std::size_t>(j)].gamma_plus;
            for (int i = 0; i < ws.radial.count(); ++i)
                u.profiles(j, i) = std::exp(g * ws.radial.x[static_cast<std::size_t>(i)]);
            u.has_profiles = true;
            const auto Lu = jacobi_apply(ws, u, JacobiForm::Spectral);
            // Interior nodes only: the one-sided end stencils carry a larger
            // constant and are checked by the refinement ratio below.
            const double mu = ws.basis.modes[static_cast<std::size_t>(j)].mu;
            for (int i = 2; i < ws.radial.count() - 2; ++i) {
                const double t = ws.radial.t[static_cast<std::size_t>(i)];
                const double scale =
                    (1.0 + std::abs(mu)) * std::abs(std::exp(g * std::log(t)));
                worst = std::max(worst,
                                 std::abs(Lu.profiles(j, i)) * t * t * t / scale);
            }
        }
        (wsp == &coarse ? worst_coarse : worst_fine) = worst;
    }
    CHECK(worst_fine < 5e-3);
    // Fourth-order radial stencils: halving the step should gain about 16x.
    CHECK(worst_fine < worst_coarse / 8.0);
}

TEST_CASE("Jacobi operator maps the cubic first-high profile to a constant source",
          "[calculus]") {
    const auto ws = small_workspace();
    int jstar = -1;
    for (int j = 0; j < ws.n_modes(); ++j) {
        const Mode& md = ws.basis.modes[static_cast<std::size_t>(j)];
        if (md.k == 1 && md.l == 1 && md.parity == 0) jstar = j;
    }
    REQUIRE(jstar >= 0);
    REQUIRE(ws.basis.modes[static_cast<std::size_t>(jstar)].mu == Approx(2.0).margin(1e-12));

    ConeField u;
    u.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
    for (int i = 0; i < ws.radial.count(); ++i)
        u.profiles(jstar, i) = std::pow(ws.radial.t[static_cast<std::size_t>(i)], 3.0);
    u.has_profiles = true;

    const auto Lu = jacobi_apply(ws, u, JacobiForm::Spectral);
    // t^2 a'' + 2 t a' - mu a = 10 t^3 for a = t^3, mu = 2: density profile 10.
    for (int i = 2; i < ws.radial.count() - 2; ++i)
        CHECK(std::abs(Lu.profiles(jstar, i) - 10.0) < 1e-3);
    for (int i = 0; i < ws.radial.count(); ++i)
        CHECK(std::abs(Lu.profiles(jstar, i) - 10.0) < 1e-2);

    // Grid values: Lu = 10 S1 phi_j pointwise.
    ConeField usyn = u;
    synthesize_field(ws, usyn);
    double vdev = 0.0;
    for (int i = 2; i < ws.radial.count() - 2; ++i)
        for (int a = 0; a < ws.angular.size(); ++a) {
            const double phi = usyn.values(i, a) /
                               std::pow(ws.radial.t[static_cast<std::size_t>(i)], 3.0);
            vdev = std::max(vdev, std::abs(Lu.values(i, a) - 10.0 * ws.inv.S1 * phi));
        }
    CHECK(vdev < 1e-2 * ws.inv.S1);

    // Divergence-form assembly agrees on the same input.
    const auto Ld = jacobi_apply(ws, usyn, JacobiForm::Divergence);
    double dev = 0.0;
    for (int i = 2; i < ws.radial.count() - 2; ++i)
        dev = std::max(dev, (Ld.values.row(i) - Lu.values.row(i)).cwiseAbs().maxCoeff());
    CHECK(dev < 2e-2);
}

TEST_CASE("spectral and divergence Jacobi forms agree on band-limited fields", "[calculus]") {
    std::mt19937_64 rng(2026u);
    std::uniform_real_distribution<double> amp(-1.0, 1.0), expo(0.5, 3.0);

    auto build = [&](const Workspace& ws, const std::vector<double>& coef,
                     const std::vector<double>& powers) {
        ConeField u;
        u.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
        for (int j = 0; j < ws.n_modes(); ++j) {
            const Mode& md = ws.basis.modes[static_cast<std::size_t>(j)];
            if (md.k > 2 || md.l > 2) continue;
            for (int i = 0; i < ws.radial.count(); ++i)
                u.profiles(j, i) =
                    coef[static_cast<std::size_t>(j)] *
                    std::pow(ws.radial.t[static_cast<std::size_t>(i)],
                             powers[static_cast<std::size_t>(j)]);
        }
        u.has_profiles = true;
        synthesize_field(ws, u);
        return u;
    };

    const auto coarse = make_workspace(2, 1, [] {
        WorkspaceConfig c;
        c.radial_nodes = 65;
        c.angular_nodes1 = 33;
        c.angular_nodes2 = 32;
        return c;
    }());
    const auto fine = make_workspace(2, 1, [] {
        WorkspaceConfig c;
        c.radial_nodes = 129;
        c.angular_nodes1 = 65;
        c.angular_nodes2 = 64;
        return c;
    }());
    REQUIRE(coarse.n_modes() == fine.n_modes());

    std::vector<double> coef, powers;
    for (int j = 0; j < coarse.n_modes(); ++j) {
        coef.push_back(amp(rng));
        powers.push_back(expo(rng));
    }

    double dev_coarse = 0.0, dev_fine = 0.0, scale = 0.0;
    for (const Workspace* wsp : {&coarse, &fine}) {
        const Workspace& ws = *wsp;
        const auto u = build(ws, coef, powers);
        const auto Ls = jacobi_apply(ws, u, JacobiForm::Spectral);
        const auto Ld = jacobi_apply(ws, u, JacobiForm::Divergence);
        double dev = 0.0;
        for (int i = 2; i < ws.radial.count() - 2; ++i) {
            const double t = ws.radial.t[static_cast<std::size_t>(i)];
            dev = std::max(dev, (Ls.values.row(i) - Ld.values.row(i)).cwiseAbs().maxCoeff() *
                                    t * t * t);
        }
        if (wsp == &coarse) {
            dev_coarse = dev;
        } else {
            dev_fine = dev;
            for (int i = 0; i < ws.radial.count(); ++i) {
                const double t = ws.radial.t[static_cast<std::size_t>(i)];
                scale = std::max(scale, Ls.values.row(i).cwiseAbs().maxCoeff() * t * t * t);
            }
        }
    }
    CHECK(dev_fine < 1e-3 * scale);
    // Both grid steps halved together: at least second-order decay overall.
    CHECK(dev_fine < dev_coarse / 4.0);
}

TEST_CASE("explicit quadratic remainder reproduces the tilted-cone family", "[calculus]") {
    const auto ws = small_workspace();
    const double c = 0.1;
    // u = c t over the scalar-flat cone: the second symmetric function of the
    // tilted cone is exactly linear-plus-quadratic, and the quadratic part per
    // unit c^2 is 21 / t^2 for this link.
    const auto u = sampled_field(
        ws, 1.0, [&](double) { return c; }, [](double) { return 1.0; });
    const auto Q = explicit_leading_Q(ws, u);
    double rel = 0.0;
    for (int i = 0; i < ws.radial.count(); ++i) {
        const double t = ws.radial.t[static_cast<std::size_t>(i)];
        const double exact = 21.0 * c * c / (t * t);
        for (int a = 0; a < ws.angular.size(); ++a)
            rel = std::max(rel, std::abs(Q.values(i, a) - exact) / exact);
    }
    CHECK(rel < 1e-3);
}

TEST_CASE("explicit quadratic remainder reproduces the parabolic graph family", "[calculus]") {
    const auto ws = small_workspace();
    const double eps = 0.01;
    const auto u = sampled_field(
        ws, 2.0, [&](double) { return eps; }, [](double) { return 1.0; });
    const auto Q = explicit_leading_Q(ws, u);
    // Constant remainder 60 eps^2 for u = eps t^2 on this link.
    double rel = 0.0;
    for (int i = 0; i < ws.radial.count(); ++i)
        for (int a = 0; a < ws.angular.size(); ++a)
            rel = std::max(rel, std::abs(Q.values(i, a) - 60.0 * eps * eps) / (60.0 * eps * eps));
    CHECK(rel < 1e-3);
}

TEST_CASE("explicit quadratic remainder is exactly homogeneous of degree two", "[calculus]") {
    const auto ws = small_workspace(65);
    std::mt19937_64 rng(7u);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    ConeField u;
    u.profiles = Eigen::MatrixXcd::Zero(ws.n_modes(), ws.radial.count());
    for (int j = 0; j < ws.n_modes(); ++j) {
        const Mode& md = ws.basis.modes[static_cast<std::size_t>(j)];
        if (md.k > 2 || md.l > 2) continue;
        const double cj = amp(rng);
        for (int i = 0; i < ws.radial.count(); ++i)
            u.profiles(j, i) = cj * std::pow(ws.radial.t[static_cast<std::size_t>(i)], 2.2);
    }
    u.has_profiles = true;
    synthesize_field(ws, u);

    ConeField u2 = u;
    u2.values *= 2.0;
    const auto Q1 = explicit_leading_Q(ws, u);
    const auto Q2 = explicit_leading_Q(ws, u2);
    const double scale = max_abs(Q1.values);
    CHECK(max_abs(Q2.values - 4.0 * Q1.values) < 1e-11 * scale);
}

TEST_CASE("weighted C2 norm scales linearly and sits in the expected band", "[calculus]") {
    const auto ws = small_workspace();
    const auto u = sampled_field(
        ws, 2.0, [](double) { return 1.0; }, [](double) { return 1.0; });
    // For u = t^2 at weight 2 the pointwise payload is 7 t^2, so the annulus
    // construction lands between 7 (degenerate top annulus) and 28 (full
    // doubling), whatever the grid alignment.
    const double norm = weighted_c2_norm(ws, u, 2.0);
    CHECK(norm > 7.0 - 1e-6);
    CHECK(norm < 28.0 + 1e-6);

    ConeField u3 = u;
    u3.values *= 3.0;
    CHECK(weighted_c2_norm(ws, u3, 2.0) == Approx(3.0 * norm).margin(1e-10 * norm));
}

TEST_CASE("sampled Holder quotient is small on smooth quadratic data", "[calculus]") {
    const auto ws = small_workspace();
    const auto u = sampled_field(
        ws, 2.0, [](double) { return 1.0; }, [](double) { return 1.0; });
    // Hessian is constant, so the sampled quotient only sees stencil noise.
    CHECK(sampled_holder_quotient(ws, u, 2.0, 0.5, 200, 11u) < 0.05);
    const auto v = sampled_field(
        ws, 2.5, [](double a) { return std::cos(a); }, [](double b) { return std::cos(b); });
    CHECK(sampled_holder_quotient(ws, v, 2.0, 0.5, 200, 11u) > 0.0);
}

TEST_CASE("cone geometry exposes the scaled curvature functions", "[calculus]") {
    const auto ws = small_workspace(65);
    const auto geo = make_geometry(ws);
    CHECK(geo.sbar(1, 0.5) == Approx(ws.inv.S1 / 0.5).margin(1e-14));
    CHECK(geo.sbar(2, 0.5) == Approx(0.0).margin(1e-12));
    CHECK(geo.sbar(3, 2.0) == Approx(ws.inv.S3 / 8.0).margin(1e-14));
    CHECK_THROWS_AS(geo.sbar(5, 1.0), Error);
}

TEST_CASE("calculus entry points validate their inputs", "[calculus]") {
    const auto ws = small_workspace(65);
    ConeField empty;
    CHECK_THROWS_AS(jacobi_apply(ws, empty, JacobiForm::Spectral), Error);
    CHECK_THROWS_AS(jacobi_apply(ws, empty, JacobiForm::Divergence), Error);
    CHECK_THROWS_AS(explicit_leading_Q(ws, empty), Error);
    CHECK_THROWS_AS(weighted_c2_norm(ws, empty, 2.0), Error);
    try {
        jacobi_apply(ws, empty, JacobiForm::Spectral);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingProfiles);
    }
}
