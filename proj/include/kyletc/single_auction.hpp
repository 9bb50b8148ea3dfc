// Single-auction equilibrium: the unique positive root of the degree-5
// pricing polynomial r, the companion intensity polynomial q, the
// small-friction expansion, and a parameter sweep with monotonicity checks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "kyletc/market.hpp"

namespace kyletc {

struct SingleAuctionEquilibrium {
    double lambda;          // price-impact slope, price/shares
    double beta;            // trading intensity, shares/price
    double residual_r;      // r(lambda), diagnostic
    double second_order_s;  // s(lambda) = 2(lambda+c) + A sigma^2 lambda^2
    double nu;              // expansion parameter used
};

/// Closed-form series coefficients: lambda up to total order 3 in (A, c),
/// beta up to total order 2.
struct ExpansionCoefficients {
    double l00, l10, l01, l20, l11, l02, l30, l21, l12, l03;
    double b00, b10, b01, b20, b11, b02;
};

// second-order condition s(lambda); s > 0 is required for optimality
inline double second_order_s(double x, const MarketParams& p) {
    return 2.0 * (x + p.c) + p.A * p.sigma * p.sigma * x * x;
}

inline double poly_r(double x, const MarketParams& p) {
    const double a = p.A, c = p.c, s2 = p.sigma * p.sigma;
    const double lk = derive_constants(p).lambda_k, lk2 = lk * lk;
    return a * a * s2 * s2 * x * x * x * x * x + 4.0 * a * s2 * x * x * x * x +
           4.0 * (1.0 + a * c * s2) * x * x * x +
           4.0 * (2.0 * c - a * s2 * lk2) * x * x + 4.0 * (c * c - lk2) * x -
           8.0 * c * lk2;
}

inline double poly_r_derivative(double x, const MarketParams& p) {
    const double a = p.A, c = p.c, s2 = p.sigma * p.sigma;
    const double lk = derive_constants(p).lambda_k, lk2 = lk * lk;
    return 5.0 * a * a * s2 * s2 * x * x * x * x + 16.0 * a * s2 * x * x * x +
           12.0 * (1.0 + a * c * s2) * x * x +
           8.0 * (2.0 * c - a * s2 * lk2) * x + 4.0 * (c * c - lk2);
}

// max |coefficient| of r; residual tolerances are scaled by this
inline double poly_r_scale(const MarketParams& p) {
    const double a = p.A, c = p.c, s2 = p.sigma * p.sigma;
    const double lk = derive_constants(p).lambda_k, lk2 = lk * lk;
    return std::max({a * a * s2 * s2, 4.0 * a * s2, 4.0 * (1.0 + a * c * s2),
                     4.0 * std::abs(2.0 * c - a * s2 * lk2),
                     4.0 * std::abs(c * c - lk2), 8.0 * c * lk2});
}

inline double poly_q(double b, const MarketParams& p) {
    const double a = p.A, c = p.c, s2 = p.sigma * p.sigma;
    const double lk = derive_constants(p).lambda_k;
    const double lk2 = lk * lk, lk4 = lk2 * lk2;
    return 32.0 * c * lk4 * b * b * b * b * b + 16.0 * lk4 * b * b * b * b +
           16.0 * lk2 * (a * lk2 * s2 + c) * b * b * b + 2.0 * c * b - 1.0;
}

inline double poly_q_scale(const MarketParams& p) {
    const double a = p.A, c = p.c, s2 = p.sigma * p.sigma;
    const double lk = derive_constants(p).lambda_k;
    const double lk2 = lk * lk, lk4 = lk2 * lk2;
    return std::max({32.0 * c * lk4, 16.0 * lk4, 16.0 * lk2 * (a * lk2 * s2 + c),
                     2.0 * c, 1.0});
}

/// Unique positive root of r on (0, lambda_k], located by bracketed bisection
/// refined with safeguarded Newton steps. The bracket is valid because
/// r(0) <= 0 and r(lambda_k) = lambda_k (2c + A sigma^2 lambda_k^2)^2 > 0
/// whenever A + c > 0; A = c = 0 short-circuits to the frictionless values.
inline SingleAuctionEquilibrium solve_single_auction(const MarketParams& p,
                                                     double tol = 1e-12) {
    validate(p);
    if (!(tol > 0.0)) throw ValidationError("invalid parameter 'tol': must be > 0");
    const ReferenceConstants rc = derive_constants(p);

    SingleAuctionEquilibrium eq{};
    eq.nu = rc.nu;
    if (p.A == 0.0 && p.c == 0.0) {
        eq.lambda = rc.lambda_k;
        eq.beta = rc.beta_k;
        eq.residual_r = poly_r(eq.lambda, p);
        eq.second_order_s = second_order_s(eq.lambda, p);
        return eq;
    }

    const double scale = poly_r_scale(p);
    double lo = 1e-12 * rc.lambda_k, hi = rc.lambda_k;
    double rlo = poly_r(lo, p), rhi = poly_r(hi, p);
    if (!(rlo < 0.0) || !(rhi > 0.0))
        throw BracketError("single-auction root bracket failed on (0, lambda_k]: r(" +
                           std::to_string(lo) + ")=" + std::to_string(rlo) + ", r(" +
                           std::to_string(hi) + ")=" + std::to_string(rhi));

    double x = 0.5 * (lo + hi);
    double rx = poly_r(x, p);
    for (int it = 0; it < 200 && std::abs(rx) > tol * scale; ++it) {
        if (rx > 0.0) hi = x; else lo = x;
        const double drx = poly_r_derivative(x, p);
        double xn = (drx != 0.0) ? x - rx / drx : lo;
        if (!(xn > lo) || !(xn < hi)) xn = 0.5 * (lo + hi);  // Newton safeguard
        if (xn == x) break;
        x = xn;
        rx = poly_r(x, p);
    }
    if (std::abs(rx) > tol * scale)
        throw NumericalError("single-auction root refinement stalled above tolerance; |r|=" +
                             std::to_string(std::abs(rx) / scale) + " (scaled)");

    eq.lambda = x;
    eq.residual_r = rx;
    eq.second_order_s = second_order_s(x, p);
    eq.beta = 1.0 / eq.second_order_s;
    if (!(eq.second_order_s > 0.0))
        throw NumericalError("single-auction second-order condition s(lambda) <= 0");
    if (!(eq.lambda <= rc.lambda_k * (1.0 + 1e-12)))
        throw NumericalError("single-auction root exceeds the frictionless ceiling lambda_k");
    return eq;
}

inline ExpansionCoefficients expansion_coefficients(const MarketParams& p) {
    validate(p);
    const double lk = derive_constants(p).lambda_k;
    const double s2 = p.sigma * p.sigma, s4 = s2 * s2, s6 = s4 * s2;
    ExpansionCoefficients t{};
    t.l00 = lk;
    t.l10 = 0.0;
    t.l01 = 0.0;
    t.l20 = -s4 * lk * lk * lk / 8.0;
    t.l11 = -s2 * lk / 2.0;
    t.l02 = -1.0 / (2.0 * lk);
    t.l30 = s6 * lk * lk * lk * lk / 8.0;
    t.l21 = 3.0 * s4 * lk * lk / 4.0;
    t.l12 = 3.0 * s2 / 2.0;
    t.l03 = 1.0 / (lk * lk);
    t.b00 = 1.0 / (2.0 * lk);
    t.b10 = -s2 / 4.0;
    t.b01 = -1.0 / (2.0 * lk * lk);
    t.b20 = 3.0 * s4 * lk / 16.0;
    t.b11 = 3.0 * s2 / (4.0 * lk);
    t.b02 = 3.0 / (4.0 * lk * lk * lk);
    return t;
}

namespace detail {
// |sum of terms| relative to the largest term magnitude (0 if all terms vanish)
inline double relative_residual(std::initializer_list<double> terms) {
    double sum = 0.0, biggest = 0.0;
    for (double v : terms) {
        sum += v;
        biggest = std::max(biggest, std::abs(v));
    }
    return biggest > 0.0 ? std::abs(sum) / biggest : std::abs(sum);
}
}  // namespace detail

/// Residuals of the ten order-(i,j) equations obtained by inserting the
/// lambda series into r and collecting powers of A and c. Each entry is
/// relative to the equation's largest term.
inline std::array<double, 10> expansion_lambda_residuals(const ExpansionCoefficients& t,
                                                         const MarketParams& p) {
    const double lk = derive_constants(p).lambda_k, lk2 = lk * lk;
    const double s2 = p.sigma * p.sigma, s4 = s2 * s2;
    using detail::relative_residual;
    return {
        relative_residual({4 * t.l00 * t.l00 * t.l00, -4 * t.l00 * lk2}),
        relative_residual({4 * t.l00 * t.l00 * t.l00 * t.l00 * s2,
                           -4 * t.l00 * t.l00 * lk2 * s2, 12 * t.l10 * t.l00 * t.l00,
                           -4 * t.l10 * lk2}),
        relative_residual({12 * t.l00 * t.l00 * t.l01, -4 * t.l01 * lk2,
                           8 * t.l00 * t.l00, -8 * lk2}),
        relative_residual({t.l00 * t.l00 * t.l00 * t.l00 * t.l00 * s4,
                           16 * t.l00 * t.l00 * t.l00 * t.l10 * s2,
                           12 * t.l20 * t.l00 * t.l00, 12 * t.l00 * t.l10 * t.l10,
                           -8 * t.l00 * t.l10 * lk2 * s2, -4 * t.l20 * lk2}),
        relative_residual({16 * t.l00 * t.l10, 12 * t.l00 * t.l00 * t.l11,
                           -4 * t.l11 * lk2, 4 * t.l00 * t.l00 * t.l00 * s2,
                           16 * t.l00 * t.l00 * t.l00 * t.l01 * s2,
                           24 * t.l00 * t.l01 * t.l10, -8 * t.l00 * t.l01 * lk2 * s2}),
        relative_residual({12 * t.l02 * t.l00 * t.l00, 12 * t.l00 * t.l01 * t.l01,
                           16 * t.l00 * t.l01, 4 * t.l00, -4 * t.l02 * lk2}),
        relative_residual({5 * t.l00 * t.l00 * t.l00 * t.l00 * t.l10 * s4,
                           16 * t.l20 * t.l00 * t.l00 * t.l00 * s2,
                           24 * t.l00 * t.l00 * t.l10 * t.l10 * s2,
                           12 * t.l30 * t.l00 * t.l00, 24 * t.l20 * t.l00 * t.l10,
                           -8 * t.l20 * t.l00 * lk2 * s2, 4 * t.l10 * t.l10 * t.l10,
                           -4 * t.l10 * t.l10 * lk2 * s2, -4 * t.l30 * lk2}),
        relative_residual({16 * t.l00 * t.l20, 12 * t.l01 * t.l10 * t.l10,
                           12 * t.l00 * t.l00 * t.l21, -4 * t.l21 * lk2,
                           8 * t.l10 * t.l10,
                           5 * t.l00 * t.l00 * t.l00 * t.l00 * t.l01 * s4,
                           12 * t.l00 * t.l00 * t.l10 * s2,
                           16 * t.l00 * t.l00 * t.l00 * t.l11 * s2,
                           24 * t.l00 * t.l01 * t.l20, 24 * t.l00 * t.l10 * t.l11,
                           48 * t.l00 * t.l00 * t.l01 * t.l10 * s2,
                           -8 * t.l00 * t.l11 * lk2 * s2, -8 * t.l01 * t.l10 * lk2 * s2}),
        relative_residual({4 * t.l10, 16 * t.l00 * t.l11, 16 * t.l01 * t.l10,
                           12 * t.l01 * t.l01 * t.l10, 12 * t.l00 * t.l00 * t.l12,
                           -4 * t.l12 * lk2, 12 * t.l00 * t.l00 * t.l01 * s2,
                           16 * t.l00 * t.l00 * t.l00 * t.l02 * s2,
                           24 * t.l00 * t.l01 * t.l11, 24 * t.l00 * t.l02 * t.l10,
                           24 * t.l00 * t.l00 * t.l01 * t.l01 * s2,
                           -4 * t.l01 * t.l01 * lk2 * s2, -8 * t.l00 * t.l02 * lk2 * s2}),
        relative_residual({8 * t.l03 * lk2, -8.0}),
    };
}

/// Residuals of the six order-(i,j) equations from inserting the beta series
/// into q, relative to each equation's largest term.
inline std::array<double, 6> expansion_beta_residuals(const ExpansionCoefficients& t,
                                                      const MarketParams& p) {
    const double lk = derive_constants(p).lambda_k;
    const double lk2 = lk * lk, lk4 = lk2 * lk2;
    const double s2 = p.sigma * p.sigma;
    using detail::relative_residual;
    const double b0 = t.b00;
    return {
        relative_residual({16 * b0 * b0 * b0 * b0 * lk4, -1.0}),
        relative_residual({16 * b0 * b0 * b0 * lk4 * s2, 64 * t.b10 * b0 * b0 * b0 * lk4}),
        relative_residual({32 * b0 * b0 * b0 * b0 * b0 * lk4,
                           64 * t.b01 * b0 * b0 * b0 * lk4, 16 * b0 * b0 * b0 * lk2,
                           2 * b0}),
        relative_residual({64 * t.b20 * b0 * b0 * b0 * lk4,
                           96 * b0 * b0 * t.b10 * t.b10 * lk4,
                           48 * b0 * b0 * t.b10 * lk4 * s2}),
        relative_residual({160 * t.b10 * b0 * b0 * b0 * b0 * lk4,
                           64 * t.b11 * b0 * b0 * b0 * lk4,
                           48 * t.b01 * b0 * b0 * lk4 * s2,
                           192 * t.b01 * t.b10 * b0 * b0 * lk4,
                           48 * t.b10 * b0 * b0 * lk2, 2 * t.b10}),
        relative_residual({160 * b0 * b0 * b0 * b0 * t.b01 * lk4,
                           64 * t.b02 * b0 * b0 * b0 * lk4,
                           96 * b0 * b0 * t.b01 * t.b01 * lk4,
                           48 * b0 * b0 * t.b01 * lk2, 2 * t.b01}),
    };
}

/// Small-friction approximation: lambda ~ lambda_k (1 - nu^2/2 + nu^3) and
/// beta ~ (1 - nu + 3 nu^2/2) / (2 lambda_k). Values are reported raw; the
/// series goes negative for large nu and that breakdown is left visible.
inline SingleAuctionEquilibrium approx_equilibrium(const MarketParams& p) {
    const ReferenceConstants rc = derive_constants(p);
    const double nu = rc.nu;
    SingleAuctionEquilibrium eq{};
    eq.nu = nu;
    eq.lambda = rc.lambda_k * (1.0 - 0.5 * nu * nu + nu * nu * nu);
    eq.beta = rc.beta_k * (1.0 - nu + 1.5 * nu * nu);
    eq.residual_r = poly_r(eq.lambda, p);
    eq.second_order_s = second_order_s(eq.lambda, p);
    return eq;
}

struct SweepRow {
    double c, A, lambda, beta;
};

/// Equilibria over a (c, A) grid, ordered A-major then c. Strict decrease of
/// lambda and beta along rows (c increasing) and columns (A increasing) is
/// enforced with a 1e-10 slack; a violation signals solver inaccuracy.
inline std::vector<SweepRow> sweep_monotonicity(const MarketParams& base,
                                                std::span<const double> grid_c,
                                                std::span<const double> grid_A,
                                                double tol = 1e-12) {
    validate(base);
    if (grid_c.empty() || grid_A.empty())
        throw ValidationError("sweep grids must be non-empty");
    for (std::size_t i = 1; i < grid_c.size(); ++i)
        if (!(grid_c[i] > grid_c[i - 1]))
            throw ValidationError("grid_c must be strictly increasing");
    for (std::size_t i = 1; i < grid_A.size(); ++i)
        if (!(grid_A[i] > grid_A[i - 1]))
            throw ValidationError("grid_A must be strictly increasing");

    std::vector<SweepRow> out;
    out.reserve(grid_c.size() * grid_A.size());
    for (double a : grid_A)
        for (double c : grid_c) {
            MarketParams p = base;
            p.A = a;
            p.c = c;
            const SingleAuctionEquilibrium eq = solve_single_auction(p, tol);
            out.push_back({c, a, eq.lambda, eq.beta});
        }

    constexpr double slack = 1e-10;
    const std::size_t nc = grid_c.size();
    auto check = [&](const SweepRow& from, const SweepRow& to) {
        if (!(to.lambda < from.lambda + slack) || !(to.beta < from.beta + slack))
            throw MonotonicityError(
                "monotonicity violation between (c=" + std::to_string(from.c) +
                    ", A=" + std::to_string(from.A) + ") and (c=" + std::to_string(to.c) +
                    ", A=" + std::to_string(to.A) + ")",
                from.c, from.A, to.c, to.A);
    };
    for (std::size_t ia = 0; ia < grid_A.size(); ++ia)
        for (std::size_t ic = 1; ic < nc; ++ic)
            check(out[ia * nc + ic - 1], out[ia * nc + ic]);
    for (std::size_t ic = 0; ic < nc; ++ic)
        for (std::size_t ia = 1; ia < grid_A.size(); ++ia)
            check(out[(ia - 1) * nc + ic], out[ia * nc + ic]);
    return out;
}

}  // namespace kyletc
