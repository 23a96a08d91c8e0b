#pragma once

// Log-spaced radial grids on the truncated cone (t_min, 1] and the cumulative
// quadrature for integrals of the form int e^{A x} g(x) dx on that grid.
//
// The nested mode integrals all reduce, in the variable x = ln t, to products
// of a known exponential e^{A x} (A collects dimension and indicial exponents,
// possibly complex) with a smooth sampled factor g. Each grid interval
// integrates the exponential exactly against a local quadratic interpolant of
// g, so constant g is reproduced to machine precision regardless of A; smooth
// g picks up an O(h^3) composite error.

#include <array>
#include <cmath>
#include <vector>

#include "conelab/core.hpp"

namespace conelab {

struct RadialGrid {
    double t_min = 1e-3;
    std::vector<double> t;  // strictly increasing, t.front() = t_min, t.back() = 1
    std::vector<double> x;  // ln t, uniformly spaced
    double h = 0.0;         // log-grid step

    int count() const { return static_cast<int>(t.size()); }
};

inline RadialGrid make_radial_grid(double t_min, int count) {
    require(t_min > 0.0 && t_min < 1.0, ErrorCode::ConfigError, "t_min must lie in (0, 1)");
    require(count >= 3, ErrorCode::ConfigError, "radial grid needs at least 3 nodes");
    RadialGrid g;
    g.t_min = t_min;
    const double x0 = std::log(t_min);
    g.h = -x0 / (count - 1);
    g.t.resize(static_cast<std::size_t>(count));
    g.x.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double xi = x0 * (1.0 - static_cast<double>(i) / (count - 1));
        g.x[static_cast<std::size_t>(i)] = xi;
        g.t[static_cast<std::size_t>(i)] = std::exp(xi);
    }
    g.t.front() = t_min;
    g.t.back() = 1.0;
    g.x.back() = 0.0;
    return g;
}

namespace detail {

// Moments M_j = int_0^h xi^j e^{A xi} d xi for j = 0, 1, 2. Series expansion
// near Ah = 0 avoids the cancellation in the closed forms.
inline std::array<cplx, 3> exp_moments(cplx A, double h) {
    const cplx z = A * h;
    std::array<cplx, 3> M;
    if (std::abs(z) < 0.5) {
        for (int j = 0; j < 3; ++j) {
            cplx term = 1.0, sum = 1.0 / (j + 1.0);
            for (int s = 1; s <= 24; ++s) {
                term *= z / static_cast<double>(s);
                sum += term / (j + s + 1.0);
            }
            M[static_cast<std::size_t>(j)] = std::pow(h, j + 1) * sum;
        }
        return M;
    }
    const cplx E = std::exp(z);
    M[0] = h * (E - 1.0) / z;
    M[1] = h * h * (E * (z - 1.0) + 1.0) / (z * z);
    M[2] = h * h * h * (E * (z * z - 2.0 * z + 2.0) - 2.0) / (z * z * z);
    return M;
}

}  // namespace detail

namespace detail {

// Exact-in-the-exponential integral of e^{A x} g(x) over each grid interval,
// with g replaced by its local quadratic interpolant.
template <typename Scalar>
inline std::vector<cplx> interval_integrals(const RadialGrid& grid, cplx A,
                                            const std::vector<Scalar>& g) {
    const int n = grid.count();
    require(static_cast<int>(g.size()) == n, ErrorCode::ConfigError,
            "sample count does not match the radial grid");
    const double h = grid.h;
    const auto Mfwd = exp_moments(A, h);   // over (0, h) about the centre
    const auto Mbwd = exp_moments(-A, h);  // reflected onto (-h, 0)
    const std::array<cplx, 3> Mrev = {Mbwd[0], -Mbwd[1], Mbwd[2]};

    std::vector<cplx> out(static_cast<std::size_t>(n - 1));
    for (int i = 0; i + 1 < n; ++i) {
        // Quadratic interpolant of g centred on node c with neighbours c -+ 1.
        const int c = i == 0 ? 1 : i;
        const cplx g0 = cplx(g[static_cast<std::size_t>(c)]);
        const cplx d1 =
            (cplx(g[static_cast<std::size_t>(c + 1)]) - cplx(g[static_cast<std::size_t>(c - 1)])) /
            (2.0 * h);
        const cplx d2 = (cplx(g[static_cast<std::size_t>(c + 1)]) - 2.0 * g0 +
                         cplx(g[static_cast<std::size_t>(c - 1)])) /
                        (h * h);
        const auto& M = i == 0 ? Mrev : Mfwd;
        const cplx base = std::exp(A * grid.x[static_cast<std::size_t>(c)]);
        out[static_cast<std::size_t>(i)] = base * (g0 * M[0] + d1 * M[1] + 0.5 * d2 * M[2]);
    }
    return out;
}

}  // namespace detail

// Cumulative integral out[i] = int_{x_0}^{x_i} e^{A x} g(x) dx for samples of g
// on the uniform log grid. Works for real or complex g samples.
template <typename Scalar>
inline std::vector<cplx> cumulative_exp_product(const RadialGrid& grid, cplx A,
                                                const std::vector<Scalar>& g) {
    const auto parts = detail::interval_integrals(grid, A, g);
    std::vector<cplx> out(static_cast<std::size_t>(grid.count()));
    out[0] = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) out[i + 1] = out[i] + parts[i];
    return out;
}

// Suffix counterpart out[i] = int_{x_i}^{x_{n-1}} e^{A x} g(x) dx, accumulated
// from the top so that decaying integrands are never formed as differences of
// large prefix sums.
template <typename Scalar>
inline std::vector<cplx> suffix_cumulative_exp_product(const RadialGrid& grid, cplx A,
                                                       const std::vector<Scalar>& g) {
    const auto parts = detail::interval_integrals(grid, A, g);
    std::vector<cplx> out(static_cast<std::size_t>(grid.count()));
    out.back() = 0.0;
    for (std::size_t i = parts.size(); i-- > 0;) out[i] = out[i + 1] + parts[i];
    return out;
}

}  // namespace conelab
