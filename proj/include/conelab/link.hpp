#pragma once

// Product links S^p(a1) x S^q(a2) inside S^n and their curvature data.
//
// The cone over such a link is scalar-flat exactly when the second elementary
// symmetric function of the link's principal curvatures vanishes. With
// y = (a2/a1)^2 that condition reads C(p,2) y^2 - pq y + C(q,2) = 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "conelab/core.hpp"

namespace conelab {

struct CliffordLink {
    int p = 0;        // dimension of the first sphere factor
    int q = 0;        // dimension of the second sphere factor
    double a1 = 0.0;  // radius of the first factor
    double a2 = 0.0;  // radius of the second factor
    int sigma = 1;    // normal orientation, chosen so that S1 > 0

    int n() const { return p + q + 1; }  // cone dimension (hypersurface in R^{n+1})
    double lambda1() const { return sigma * a2 / a1; }  // multiplicity p
    double lambda2() const { return -sigma * a1 / a2; } // multiplicity q

    // Principal curvature multiset as (value, multiplicity) pairs.
    std::array<std::pair<double, int>, 2> curvatures() const {
        return {std::pair{lambda1(), p}, std::pair{lambda2(), q}};
    }
};

// e_r of a list of reals via the stable ascending recurrence.
inline double elementary_symmetric(const std::vector<double>& values, int r) {
    require(r >= 0 && r <= static_cast<int>(values.size()), ErrorCode::InvalidOrder,
            "elementary symmetric order out of range");
    std::vector<double> e(static_cast<std::size_t>(r) + 1, 0.0);
    e[0] = 1.0;
    for (int i = 0; i < static_cast<int>(values.size()); ++i)
        for (int k = std::min(r, i + 1); k >= 1; --k) e[k] += values[static_cast<std::size_t>(i)] * e[k - 1];
    return e[r];
}

inline double power_sum(const std::vector<double>& values, int k) {
    require(k >= 0, ErrorCode::InvalidOrder, "power sum order must be non-negative");
    double s = 0.0;
    for (double v : values) s += std::pow(v, k);
    return s;
}

inline std::vector<double> curvature_list(const CliffordLink& link) {
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(link.p + link.q));
    vals.insert(vals.end(), static_cast<std::size_t>(link.p), link.lambda1());
    vals.insert(vals.end(), static_cast<std::size_t>(link.q), link.lambda2());
    return vals;
}

struct CurvatureInvariants {
    double S1 = 0.0;
    double S2 = 0.0;  // ~0 for scalar-flat links; kept as a diagnostic
    double S3 = 0.0;
    double S4 = 0.0;
    std::array<double, 2> t1_eigs{};  // {S1 - lambda1, S1 - lambda2}
    double tr_T1_A2 = 0.0;            // sum (S1 - lambda_i) lambda_i^2
    double P2 = 0.0, P3 = 0.0, P4 = 0.0;  // power sums of the curvatures
};

inline CurvatureInvariants invariants(const CliffordLink& link) {
    const auto vals = curvature_list(link);
    CurvatureInvariants inv;
    inv.S1 = elementary_symmetric(vals, 1);
    inv.S2 = elementary_symmetric(vals, 2);
    inv.S3 = elementary_symmetric(vals, 3);
    inv.S4 = static_cast<int>(vals.size()) >= 4 ? elementary_symmetric(vals, 4) : 0.0;
    inv.t1_eigs = {inv.S1 - link.lambda1(), inv.S1 - link.lambda2()};
    inv.P2 = power_sum(vals, 2);
    inv.P3 = power_sum(vals, 3);
    inv.P4 = power_sum(vals, 4);
    double tr = 0.0;
    for (double v : vals) tr += (inv.S1 - v) * v * v;
    inv.tr_T1_A2 = tr;
    return inv;
}

namespace detail {

// Larger positive root of C(p,2) y^2 - pq y + C(q,2) = 0, assuming p >= q.
inline double scalar_flat_ratio_sq(int p, int q) {
    const double c2 = 0.5 * p * (p - 1), c1 = static_cast<double>(p) * q, c0 = 0.5 * q * (q - 1);
    if (c2 == 0.0) {
        // p = 1 (so q = 1 here): the equation degenerates to -y = 0.
        fail(ErrorCode::NoScalarFlatRadii, "S^1 x S^1 admits no scalar-flat radii");
    }
    if (c0 == 0.0) return c1 / c2;  // q = 1: roots {0, pq / C(p,2)}
    const double disc = c1 * c1 - 4.0 * c2 * c0;  // = pq (p+q-1) > 0
    return (c1 + std::sqrt(disc)) / (2.0 * c2);
}

}  // namespace detail

// Radii making the cone over S^p(a1) x S^q(a2) scalar-flat. When the defining
// quadratic has two positive roots the larger one is taken for p >= q and the
// factor-swapped counterpart for p < q, so swapping (p, q) swaps (a1, a2).
inline CliffordLink solve_scalar_flat_radii(int p, int q) {
    require(p >= 1 && q >= 1, ErrorCode::UnsupportedFactor, "factor dimensions must be >= 1");
    if (p == 1 && q == 1) fail(ErrorCode::NoScalarFlatRadii, "S^1 x S^1 admits no scalar-flat radii");

    double y;  // (a2/a1)^2
    if (p >= q) {
        y = detail::scalar_flat_ratio_sq(p, q);
    } else {
        y = 1.0 / detail::scalar_flat_ratio_sq(q, p);
    }
    require(y > 0.0 && std::isfinite(y), ErrorCode::NoScalarFlatRadii, "no positive radius ratio");

    CliffordLink link;
    link.p = p;
    link.q = q;
    link.a1 = std::sqrt(1.0 / (1.0 + y));
    link.a2 = std::sqrt(y / (1.0 + y));

    const double x = link.a2 / link.a1;
    const double s1_plus = p * x - q / x;
    require(std::abs(s1_plus) > 1e-14, ErrorCode::DegenerateLink, "mean curvature vanishes");
    link.sigma = s1_plus > 0.0 ? 1 : -1;
    return link;
}

}  // namespace conelab
