// Market parameterization shared by every solver: model constants, derived
// reference quantities, and centralized validation. All types are immutable
// values; everything downstream assumes a validated MarketParams.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace kyletc {

// Thrown on invalid inputs (bad parameters, mismatched grids, bad flags).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Base for solver failures: bracket loss, step failure, monotonicity breaks.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BracketError : NumericalError {
    using NumericalError::NumericalError;
};

struct StepFailureError : NumericalError {
    using NumericalError::NumericalError;
};

struct SingularityError : NumericalError {
    using NumericalError::NumericalError;
};

struct MonotonicityError : NumericalError {
    double c_from, a_from, c_to, a_to;
    MonotonicityError(const std::string& msg, double cf, double af, double ct, double at)
        : NumericalError(msg), c_from(cf), a_from(af), c_to(ct), a_to(at) {}
};

/// Model constants. `c` is a price per unit trading rate in continuous time
/// and a price per share per share in the single auction; `A` is the CARA
/// risk-aversion coefficient (A = 0 means risk neutral).
struct MarketParams {
    double A = 0.0;        // risk aversion, 1/currency
    double c = 0.0;        // transaction cost coefficient
    double sigma = 1.0;    // noise-trader volatility, shares/sqrt(time)
    double Sigma0v = 1.0;  // prior variance of the liquidation value, price^2
    double v0 = 0.0;       // prior mean of the liquidation value, price
    double T = 1.0;        // horizon, time (continuous model only)
};

/// Frictionless reference constants and the small-friction parameter nu.
struct ReferenceConstants {
    double lambda_k;  // single-auction Kyle slope, (1/2) sqrt(Sigma0v/sigma^2)
    double beta_k;    // 1 / (2 lambda_k)
    double Lambda_k;  // continuous-time Kyle slope, sqrt(Sigma0v/(sigma^2 T))
    double nu;        // lambda_k sigma^2 A / 2 + c / lambda_k
};

namespace detail {
inline void require_finite_positive(double v, const char* field) {
    if (!std::isfinite(v) || v <= 0.0)
        throw ValidationError(std::string("invalid parameter '") + field +
                              "': must be finite and > 0");
}
inline void require_finite_nonnegative(double v, const char* field) {
    if (!std::isfinite(v) || v < 0.0)
        throw ValidationError(std::string("invalid parameter '") + field +
                              "': must be finite and >= 0");
}
}  // namespace detail

inline void validate(const MarketParams& p) {
    detail::require_finite_positive(p.sigma, "sigma");
    detail::require_finite_positive(p.Sigma0v, "Sigma0v");
    detail::require_finite_positive(p.T, "T");
    detail::require_finite_nonnegative(p.A, "A");
    detail::require_finite_nonnegative(p.c, "c");
    if (!std::isfinite(p.v0))
        throw ValidationError("invalid parameter 'v0': must be finite");
}

inline ReferenceConstants derive_constants(const MarketParams& p) {
    validate(p);
    ReferenceConstants r;
    r.lambda_k = 0.5 * std::sqrt(p.Sigma0v / (p.sigma * p.sigma));
    r.beta_k = 1.0 / (2.0 * r.lambda_k);
    r.Lambda_k = std::sqrt(p.Sigma0v / (p.sigma * p.sigma * p.T));
    r.nu = r.lambda_k * p.sigma * p.sigma * p.A / 2.0 + p.c / r.lambda_k;
    return r;
}

}  // namespace kyletc
