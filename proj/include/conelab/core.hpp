#pragma once

// Shared plumbing: error taxonomy, numeric helpers, deterministic parallel loops.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace conelab {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

enum class ErrorCode {
    InvalidOrder,
    NoScalarFlatRadii,
    DegenerateLink,
    UnsupportedFactor,
    ForbiddenWeight,
    BudgetExceeded,
    DegenerateRoot,
    QuadratureUnderflow,
    MissingProfiles,
    ImmersionFailure,
    NormalDegeneracy,
    ZeroDenominator,
    NotUnstable,
    NonConvergence,
    SolverFailure,
    ConfigError,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidOrder: return "InvalidOrder";
        case ErrorCode::NoScalarFlatRadii: return "NoScalarFlatRadii";
        case ErrorCode::DegenerateLink: return "DegenerateLink";
        case ErrorCode::UnsupportedFactor: return "UnsupportedFactor";
        case ErrorCode::ForbiddenWeight: return "ForbiddenWeight";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::DegenerateRoot: return "DegenerateRoot";
        case ErrorCode::QuadratureUnderflow: return "QuadratureUnderflow";
        case ErrorCode::MissingProfiles: return "MissingProfiles";
        case ErrorCode::ImmersionFailure: return "ImmersionFailure";
        case ErrorCode::NormalDegeneracy: return "NormalDegeneracy";
        case ErrorCode::ZeroDenominator: return "ZeroDenominator";
        case ErrorCode::NotUnstable: return "NotUnstable";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) fail(code, what);
}

inline double sq(double x) { return x * x; }
inline cplx sq(cplx x) { return x * x; }

// exp(z) - 1 without cancellation for small |z|.
inline cplx expm1c(cplx z) {
    if (std::abs(z) > 0.5) return std::exp(z) - 1.0;
    cplx term = z, sum = z;
    for (int k = 2; k < 24; ++k) {
        term *= z / static_cast<double>(k);
        sum += term;
        if (std::abs(term) < 1e-18 * (1.0 + std::abs(sum))) break;
    }
    return sum;
}

// Surface volume of the unit sphere S^d in R^{d+1}.
inline double sphere_volume(int d) {
    require(d >= 0, ErrorCode::InvalidOrder, "sphere dimension must be non-negative");
    return 2.0 * std::pow(pi, 0.5 * (d + 1)) / std::tgamma(0.5 * (d + 1));
}

// Static-partition parallel loop over [0, n). Chunks write disjoint state, so
// results do not depend on the worker count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : (hw ? hw : 1);
    if (workers > n) workers = n;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace conelab
