#pragma once

// Zonal tensor grids on product links S^p(a1) x S^q(a2).
//
// Zonal functions depend only on the polar angle of each factor, so the link
// collapses to a 2-torus-like parameter grid. Each sphere factor carries a 1D
// quadrature whose weights absorb the orbit measure: for a polar factor of
// dimension d >= 2 the weights reproduce the exact trigonometric moments of
// radius^d Vol(S^{d-1}) sin^{d-1}(theta) dtheta on [0, pi], and a circle
// factor uses the periodic trapezoid rule on [0, 2pi). Both rules integrate
// products of resolvable basis modes exactly, which keeps Gram matrices and
// projection round trips at machine precision.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "conelab/core.hpp"
#include "conelab/link.hpp"

namespace conelab {

// Gegenbauer polynomial C_k^alpha(x) via the ascending three-term recurrence.
inline double gegenbauer(int k, double alpha, double x) {
    require(k >= 0, ErrorCode::InvalidOrder, "gegenbauer order must be non-negative");
    if (k == 0) return 1.0;
    double prev = 1.0, cur = 2.0 * alpha * x;
    for (int j = 2; j <= k; ++j) {
        const double next = (2.0 * (j + alpha - 1.0) * x * cur - (j + 2.0 * alpha - 2.0) * prev) / j;
        prev = cur;
        cur = next;
    }
    return cur;
}

namespace detail {

inline double binomial(int n, int k) {
    double b = 1.0;
    for (int i = 1; i <= k; ++i) b *= static_cast<double>(n - k + i) / i;
    return b;
}

// Exact M_j = int_0^pi cos(j t) sin^nu(t) dt via the exponential expansion of sin^nu.
inline double polar_cos_moment(int j, int nu) {
    const auto line = [](int b) -> cplx {
        if (b == 0) return {pi, 0.0};
        if (b % 2 == 0) return {0.0, 0.0};
        return {0.0, 2.0 / b};  // (e^{i b pi} - 1) / (i b) with e^{i b pi} = -1
    };
    cplx sum = 0.0;
    for (int r = 0; r <= nu; ++r) {
        const double coeff = binomial(nu, r) * ((nu - r) % 2 == 0 ? 1.0 : -1.0);
        sum += coeff * (line(2 * r - nu + j) + line(2 * r - nu - j));
    }
    const cplx prefactor = 0.5 * std::pow(cplx(0.0, 2.0), -nu);
    return (prefactor * sum).real();
}

}  // namespace detail

struct FactorGrid {
    int dim = 0;          // sphere dimension of this factor
    double radius = 1.0;  // factor radius inside the unit sphere
    bool circle = false;  // dim == 1, periodic parametrisation
    std::vector<double> theta;
    std::vector<double> weight;  // includes the full orbit measure of the factor

    int size() const { return static_cast<int>(theta.size()); }
    double total() const {
        double s = 0.0;
        for (double w : weight) s += w;
        return s;
    }
};

inline FactorGrid make_polar_factor(int dim, double radius, int nodes) {
    require(dim >= 2, ErrorCode::UnsupportedFactor, "polar factor needs dim >= 2");
    require(nodes >= 4, ErrorCode::ConfigError, "polar factor needs at least 4 nodes");
    FactorGrid f;
    f.dim = dim;
    f.radius = radius;
    f.circle = false;
    f.theta.resize(static_cast<std::size_t>(nodes));
    const double h = pi / (nodes - 1);
    for (int i = 0; i < nodes; ++i) f.theta[static_cast<std::size_t>(i)] = i * h;

    // Weights from the exact moments of sin^{dim-1}: solve the cos-Vandermonde
    // system sum_i w_i cos(j theta_i) = M_j for j = 0 .. nodes-1. The matrix is
    // the (well conditioned) DCT-I matrix on the uniform grid.
    Eigen::MatrixXd C(nodes, nodes);
    Eigen::VectorXd M(nodes);
    for (int j = 0; j < nodes; ++j) {
        M(j) = detail::polar_cos_moment(j, dim - 1);
        for (int i = 0; i < nodes; ++i) C(j, i) = std::cos(j * f.theta[static_cast<std::size_t>(i)]);
    }
    const Eigen::VectorXd w = C.partialPivLu().solve(M);
    const double orbit = std::pow(radius, dim) * sphere_volume(dim - 1);
    f.weight.resize(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) f.weight[static_cast<std::size_t>(i)] = orbit * w(i);
    return f;
}

inline FactorGrid make_circle_factor(double radius, int nodes) {
    require(nodes >= 4, ErrorCode::ConfigError, "circle factor needs at least 4 nodes");
    FactorGrid f;
    f.dim = 1;
    f.radius = radius;
    f.circle = true;
    f.theta.resize(static_cast<std::size_t>(nodes));
    f.weight.assign(static_cast<std::size_t>(nodes), radius * 2.0 * pi / nodes);
    for (int i = 0; i < nodes; ++i) f.theta[static_cast<std::size_t>(i)] = 2.0 * pi * i / nodes;
    return f;
}

inline FactorGrid make_factor(int dim, double radius, int nodes) {
    return dim == 1 ? make_circle_factor(radius, nodes) : make_polar_factor(dim, radius, nodes);
}

// Tensor grid over both factors, flattened row-major (factor 1 slow, factor 2 fast).
struct AngularGrid {
    FactorGrid f1, f2;
    Eigen::VectorXd w;  // product weights, size n1 * n2

    int n1() const { return f1.size(); }
    int n2() const { return f2.size(); }
    int size() const { return n1() * n2(); }
    int index(int i1, int i2) const { return i1 * n2() + i2; }

    double theta1(int i1) const { return f1.theta[static_cast<std::size_t>(i1)]; }
    double theta2(int i2) const { return f2.theta[static_cast<std::size_t>(i2)]; }
};

inline AngularGrid make_angular_grid(const CliffordLink& link, int nodes1, int nodes2) {
    AngularGrid g;
    g.f1 = make_factor(link.p, link.a1, nodes1);
    g.f2 = make_factor(link.q, link.a2, nodes2);
    g.w.resize(g.size());
    for (int i1 = 0; i1 < g.n1(); ++i1)
        for (int i2 = 0; i2 < g.n2(); ++i2)
            g.w(g.index(i1, i2)) = g.f1.weight[static_cast<std::size_t>(i1)] *
                                   g.f2.weight[static_cast<std::size_t>(i2)];
    return g;
}

}  // namespace conelab
