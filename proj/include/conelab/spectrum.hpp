#pragma once

// Jacobi-field mode spectrum of a scalar-flat cone over a product link.
//
// Separating the linearised operator on the cone into radial and angular parts
// leaves, for each product of zonal factor harmonics, the mode eigenvalue
//
//   mu(k, l) = [ (S1 - lambda1) k(k+p-1)/a1^2 + (S1 - lambda2) l(l+q-1)/a2^2 + 3 S3 ] / S1
//
// and the radial Euler equation t^2 a'' + (n-2) t a' - mu a = 0 with indicial
// roots gamma_pm = -(n-3)/2 +- sqrt((n-3)^2/4 + mu), complex below the Hardy
// threshold. Weight thresholds m are admissible when no indicial real part
// collides with them; the default picks the midpoint of the first spectral gap
// above 2.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "conelab/angular.hpp"
#include "conelab/core.hpp"
#include "conelab/link.hpp"

namespace conelab {

struct Mode {
    int k = 0;       // zonal band on the first factor
    int l = 0;       // zonal band on the second factor
    int parity = 0;  // 0 = cosine branch (or unique), 1 = sine branch on a circle factor
    double mu = 0.0;
    cplx gamma_plus{};
    cplx gamma_minus{};
    double norm_const = 1.0;  // filled by build_basis
};

inline double mode_eigenvalue(const CliffordLink& link, const CurvatureInvariants& inv, int k,
                              int l) {
    const double nu1 = static_cast<double>(k) * (k + link.p - 1);
    const double nu2 = static_cast<double>(l) * (l + link.q - 1);
    const double c1 = (inv.S1 - link.lambda1()) / (link.a1 * link.a1);
    const double c2 = (inv.S1 - link.lambda2()) / (link.a2 * link.a2);
    return (c1 * nu1 + c2 * nu2 + 3.0 * inv.S3) / inv.S1;
}

// Roots of gamma^2 + (n-3) gamma - mu = 0, returned as (gamma_minus, gamma_plus)
// with Re gamma_minus <= Re gamma_plus.
inline std::pair<cplx, cplx> indicial_roots(int n, double mu) {
    require(n >= 4, ErrorCode::UnsupportedFactor, "cone dimension must be at least 4");
    const double half = 0.5 * (n - 3);
    const cplx root = std::sqrt(cplx(half * half + mu, 0.0));
    return {-half - root, -half + root};
}

namespace detail {

// Deterministic mode order: eigenvalue first (quantised so that exact spectral
// coincidences are not split by last-ulp noise), then (k, l, parity).
inline bool mode_less(const Mode& a, const Mode& b) {
    const auto quantise = [](double mu) { return std::round(mu * 1e9); };
    const double qa = quantise(a.mu), qb = quantise(b.mu);
    if (qa != qb) return qa < qb;
    if (a.k != b.k) return a.k < b.k;
    if (a.l != b.l) return a.l < b.l;
    return a.parity < b.parity;
}

}  // namespace detail

// First `budget` modes in ascending eigenvalue order. Circle-factor bands >= 1
// contribute a cosine and a sine entry; everything else is a single entry.
inline std::vector<Mode> enumerate_modes(const CliffordLink& link, const CurvatureInvariants& inv,
                                         int budget) {
    require(budget >= 1, ErrorCode::ConfigError, "mode budget must be positive");
    const int n = link.n();
    int cap = 16;
    while (true) {
        std::vector<Mode> modes;
        modes.reserve(static_cast<std::size_t>(2 * cap * cap));
        for (int k = 0; k <= cap; ++k) {
            for (int l = 0; l <= cap; ++l) {
                Mode m;
                m.k = k;
                m.l = l;
                m.mu = mode_eigenvalue(link, inv, k, l);
                std::tie(m.gamma_minus, m.gamma_plus) = indicial_roots(n, m.mu);
                const bool doubled = (link.p == 1 && k >= 1) || (link.q == 1 && l >= 1);
                modes.push_back(m);
                if (doubled) {
                    m.parity = 1;
                    modes.push_back(m);
                }
            }
        }
        std::sort(modes.begin(), modes.end(), detail::mode_less);
        if (static_cast<int>(modes.size()) < budget) {
            cap *= 2;
            continue;
        }
        modes.resize(static_cast<std::size_t>(budget));
        const bool touches_cap = std::any_of(modes.begin(), modes.end(), [cap](const Mode& m) {
            return m.k == cap || m.l == cap;
        });
        if (!touches_cap) return modes;
        cap *= 2;
        require(cap <= 4096, ErrorCode::BudgetExceeded, "mode enumeration cap exploded");
    }
}

struct ThresholdSelection {
    double m = 0.0;      // selected weight threshold
    int J = 0;           // number of modes with Re(gamma_plus) < m
    double epsilon = 0.5;
    double gap_lo = 0.0, gap_hi = 0.0;  // spectral gap bracketing m (auto mode)
};

// Pick (or validate) the decay threshold m > 2 strictly between indicial real
// parts. Without a request, m is the midpoint of the first gap above 2.
inline ThresholdSelection select_threshold(const std::vector<Mode>& modes, double epsilon = 0.5,
                                           std::optional<double> requested = std::nullopt) {
    require(!modes.empty(), ErrorCode::BudgetExceeded, "no modes supplied");
    constexpr double kTie = 1e-9;

    ThresholdSelection sel;
    sel.epsilon = epsilon;

    if (requested) {
        const double m = *requested;
        require(m > 2.0, ErrorCode::ForbiddenWeight, "weight threshold must exceed 2");
        for (const auto& mode : modes)
            require(std::abs(mode.gamma_plus.real() - m) > kTie, ErrorCode::ForbiddenWeight,
                    "weight threshold collides with an indicial root");
        require(m < modes.back().gamma_plus.real() - kTie, ErrorCode::BudgetExceeded,
                "mode budget too small to certify the requested threshold");
        sel.m = m;
        sel.gap_lo = sel.gap_hi = m;
    } else {
        double lo = 2.0;
        bool found = false;
        for (const auto& mode : modes) {
            const double g = mode.gamma_plus.real();
            if (g > lo + kTie) {
                sel.gap_lo = lo;
                sel.gap_hi = g;
                sel.m = 0.5 * (lo + g);
                found = true;
                break;
            }
            lo = std::max(lo, g);
        }
        require(found, ErrorCode::BudgetExceeded, "no spectral gap above 2 within the mode budget");
    }

    sel.J = static_cast<int>(std::count_if(modes.begin(), modes.end(), [&](const Mode& mode) {
        return mode.gamma_plus.real() < sel.m;
    }));
    return sel;
}

// Mode functions sampled on an angular grid, orthonormal in the S1-weighted
// inner product <f, g> = S1 int f g dV under the grid quadrature.
struct SpectralBasis {
    std::vector<Mode> modes;
    Eigen::MatrixXd phi;  // modes x grid nodes
    Eigen::VectorXd w;    // plain grid weights
    double S1 = 0.0;

    int count() const { return static_cast<int>(modes.size()); }

    // Coefficients of a source density f: f_j = int f phi_j dV, so f = S1 sum f_j phi_j.
    Eigen::VectorXd project_density(const Eigen::VectorXd& slice) const {
        return phi * w.cwiseProduct(slice);
    }
    // Coefficients of a field u: a_j = S1 int u phi_j dV, so u = sum a_j phi_j.
    Eigen::VectorXd project_field(const Eigen::VectorXd& slice) const {
        return S1 * (phi * w.cwiseProduct(slice));
    }
    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const {
        return phi.transpose() * coeffs;
    }
};

namespace detail {

inline std::vector<double> factor_mode_values(const FactorGrid& f, int band, int parity,
                                              double* scale_out) {
    std::vector<double> vals(static_cast<std::size_t>(f.size()));
    if (f.circle) {
        for (int i = 0; i < f.size(); ++i) {
            const double t = band * f.theta[static_cast<std::size_t>(i)];
            vals[static_cast<std::size_t>(i)] = parity == 0 ? std::cos(t) : std::sin(t);
        }
    } else {
        const double alpha = 0.5 * (f.dim - 1);
        for (int i = 0; i < f.size(); ++i)
            vals[static_cast<std::size_t>(i)] =
                gegenbauer(band, alpha, std::cos(f.theta[static_cast<std::size_t>(i)]));
    }
    // Normalise against the factor's own quadrature so products stay exact.
    double nrm2 = 0.0;
    for (int i = 0; i < f.size(); ++i)
        nrm2 += f.weight[static_cast<std::size_t>(i)] * sq(vals[static_cast<std::size_t>(i)]);
    require(nrm2 > 0.0, ErrorCode::QuadratureUnderflow, "factor mode has zero grid norm");
    const double scale = 1.0 / std::sqrt(nrm2);
    for (auto& v : vals) v *= scale;
    if (scale_out) *scale_out = scale;
    return vals;
}

}  // namespace detail

inline SpectralBasis build_basis(const CliffordLink& link, const CurvatureInvariants& inv,
                                 const AngularGrid& grid, std::vector<Mode> modes) {
    int band1 = 0, band2 = 0;
    for (const auto& m : modes) {
        band1 = std::max(band1, m.k);
        band2 = std::max(band2, m.l);
    }
    require(2 * band1 <= grid.n1() - 1, ErrorCode::ConfigError,
            "first angular factor too coarse for the requested modes");
    require(2 * band2 <= grid.n2() - 1, ErrorCode::ConfigError,
            "second angular factor too coarse for the requested modes");

    SpectralBasis basis;
    basis.S1 = inv.S1;
    basis.w = grid.w;
    basis.phi.resize(static_cast<int>(modes.size()), grid.size());
    const double s1_scale = 1.0 / std::sqrt(inv.S1);
    for (int j = 0; j < static_cast<int>(modes.size()); ++j) {
        auto& m = modes[static_cast<std::size_t>(j)];
        const int par1 = link.p == 1 ? m.parity : 0;
        const int par2 = link.q == 1 ? m.parity : 0;
        double scale1 = 1.0, scale2 = 1.0;
        const auto v1 = detail::factor_mode_values(grid.f1, m.k, par1, &scale1);
        const auto v2 = detail::factor_mode_values(grid.f2, m.l, par2, &scale2);
        m.norm_const = s1_scale * scale1 * scale2;
        for (int i1 = 0; i1 < grid.n1(); ++i1)
            for (int i2 = 0; i2 < grid.n2(); ++i2)
                basis.phi(j, grid.index(i1, i2)) = s1_scale * v1[static_cast<std::size_t>(i1)] *
                                                   v2[static_cast<std::size_t>(i2)];
    }
    basis.modes = std::move(modes);
    return basis;
}

namespace detail {

// Finite-volume eigenvalues of the zonal Laplace operator on the unit S^dim:
// flux form -(w u')' / w with w = sin^{dim-1} on (0, pi) (natural regularity at
// the poles, where w vanishes), or w = 1 with Neumann ends for the circle's
// even half. Cell-centred nodes; second-order accurate; exact zero mode.
inline std::vector<double> factor_fv_eigenvalues(int dim, int cells) {
    require(cells >= 8, ErrorCode::ConfigError, "oracle needs at least 8 cells per factor");
    const double h = pi / cells;
    const auto w = [dim](double x) { return dim == 1 ? 1.0 : std::pow(std::sin(x), dim - 1); };

    // 5-point Gauss-Legendre cell masses of the weight.
    static constexpr double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                     0.5384693101056831, 0.9061798459386640};
    static constexpr double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                     0.4786286704993665, 0.2369268850561891};
    Eigen::VectorXd mass(cells), diag = Eigen::VectorXd::Zero(cells),
                    sub = Eigen::VectorXd::Zero(cells - 1);
    for (int i = 0; i < cells; ++i) {
        const double a = i * h, mid = a + 0.5 * h;
        double m = 0.0;
        for (int g = 0; g < 5; ++g) m += gw[g] * w(mid + 0.5 * h * gx[g]);
        mass(i) = 0.5 * h * m;
    }
    for (int i = 1; i < cells; ++i) {
        const double flux = w(i * h) / h;
        diag(i - 1) += flux;
        diag(i) += flux;
        sub(i - 1) = -flux;
    }
    // Symmetrise: B = M^{-1/2} K M^{-1/2} stays tridiagonal.
    Eigen::VectorXd bdiag(cells), bsub(cells - 1);
    for (int i = 0; i < cells; ++i) bdiag(i) = diag(i) / mass(i);
    for (int i = 0; i + 1 < cells; ++i) bsub(i) = sub(i) / std::sqrt(mass(i) * mass(i + 1));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(bdiag, bsub, Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorCode::SolverFailure,
            "factor eigenvalue iteration failed");
    std::vector<double> out(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

}  // namespace detail

// Independent check of the mode eigenvalues: per-factor discrete zonal spectra
// combined as Kronecker sums through the same curvature coefficients. Returns
// the lowest `count` values of the (k, l) lattice ascending, one entry per
// lattice point (no parity doubling).
inline std::vector<double> discrete_spectrum_oracle(const CliffordLink& link,
                                                    const AngularGrid& grid, int count) {
    require(grid.n1() >= 17 && grid.n2() >= 17, ErrorCode::ConfigError,
            "oracle needs at least 17 points per factor");
    require(count >= 1, ErrorCode::ConfigError, "count must be positive");
    const auto inv = invariants(link);
    const auto nu1 = detail::factor_fv_eigenvalues(link.p, grid.n1());
    const auto nu2 = detail::factor_fv_eigenvalues(link.q, grid.n2());
    const int k1 = std::min<int>(count, static_cast<int>(nu1.size()));
    const int k2 = std::min<int>(count, static_cast<int>(nu2.size()));
    require(k1 * k2 >= count, ErrorCode::ConfigError, "oracle grid too coarse for count");

    const double c1 = (inv.S1 - link.lambda1()) / (link.a1 * link.a1);
    const double c2 = (inv.S1 - link.lambda2()) / (link.a2 * link.a2);
    std::vector<double> lattice;
    lattice.reserve(static_cast<std::size_t>(k1 * k2));
    for (int i = 0; i < k1; ++i)
        for (int j = 0; j < k2; ++j)
            lattice.push_back((c1 * nu1[static_cast<std::size_t>(i)] +
                               c2 * nu2[static_cast<std::size_t>(j)] + 3.0 * inv.S3) /
                              inv.S1);
    std::sort(lattice.begin(), lattice.end());
    lattice.resize(static_cast<std::size_t>(count));
    return lattice;
}

}  // namespace conelab
