// Continuous-time equilibrium. The forward-backward system
//
//   x1' = F1(x1, x2),  x1(0) = Sigma0v      (posterior variance)
//   x2' = F2(x1, x2),  x2(T) = 0            (variance times value curvature)
//
// is solved by restricting to the invariant manifold x2 = rho(x1; k) and
// shooting on the constant k: x1 then satisfies a scalar forward ODE and k is
// pinned by the terminal condition g(k) = (gamma+1) x1^gamma(T;k) - (gamma-1) k = 0.
// Risk-neutral (A = 0) and frictionless (c = 0) inputs use closed forms.
//
// Powers are evaluated in the rescaled variables xt = (x1/Sigma0v)^gamma and
// kt = k/Sigma0v^gamma so that everything stays in [0, O(1)] regardless of the
// magnitude of Sigma0v.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kyletc/grid.hpp"
#include "kyletc/market.hpp"

namespace kyletc {

/// Time-gridded equilibrium objects of the continuous model.
/// x1 = Sigma (posterior variance), x2 = Sigma*h, h = x2/x1,
/// beta(t) = sigma^2 / (2 (c sigma^2 + x2)), lambda(t) = x1 / (2 (c sigma^2 + x2)).
struct EquilibriumProfiles {
    TimeGrid grid;
    std::vector<double> x1, x2, h, beta, lambda;
    double k = 0.0;      // shooting constant; 0 when a closed form was used
    double gamma = 1.0;  // sqrt(1 + 8 A c sigma^2)
};

struct ShootingResult {
    double k = 0.0;           // found constant, unscaled units
    double g_residual = 0.0;  // (gamma+1) x1^gamma(T;k) - (gamma-1) k at the found k
    double bracket_lo = 0.0;  // proof bracket k_l
    double bracket_hi = 0.0;  // proof bracket k_r
    int iterations = 0;       // bisection steps taken
    double gamma = 1.0;
    double k_scaled = 0.0;    // k / Sigma0v^gamma, the internally used value
};

inline std::pair<double, double> fbode_rhs(std::pair<double, double> x,
                                           const MarketParams& p) {
    const auto [x1, x2] = x;
    const double s2 = p.sigma * p.sigma;
    const double den = p.c * s2 + x2;
    const double guard = 1e-14 * std::max({1.0, std::abs(x1), s2});
    if (std::abs(den) < guard)
        throw SingularityError("fbode rhs singular: c sigma^2 + x2 is numerically zero");
    const double d2 = 4.0 * den * den;
    return {-s2 * x1 * x1 / d2, -s2 * x1 * (den - 2.0 * p.A * x2 * x2) / d2};
}

/// Invariant manifold x2 = rho(x1; k) for A > 0, c > 0.
inline double rho_manifold(double x1, double k, const MarketParams& p) {
    validate(p);
    if (p.A <= 0.0)
        throw ValidationError("rho_manifold requires A > 0 (A = 0 uses the closed-form path)");
    if (p.c <= 0.0) throw ValidationError("rho_manifold requires c > 0");
    if (!(x1 > 0.0)) throw ValidationError("rho_manifold requires x1 > 0");
    if (!(k > 0.0)) throw ValidationError("rho_manifold requires k > 0");
    const double gamma = std::sqrt(1.0 + 8.0 * p.A * p.c * p.sigma * p.sigma);
    const double xg = std::pow(x1, gamma);
    return ((gamma + 1.0) * xg - (gamma - 1.0) * k) / (4.0 * p.A * (xg + k));
}

namespace detail {

struct ScaledX1Ode {
    double A, sigma2, S0, gamma;

    // dx1/dt on the manifold, with the rescaled constant kt = k/S0^gamma
    double f1(double x1, double kt) const {
        if (!(x1 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double xt = std::pow(x1 / S0, gamma);
        const double gp1 = gamma + 1.0, gm1 = gamma - 1.0;
        const double den = gp1 * gp1 * xt + gm1 * gm1 * kt;
        const double q = (xt + kt) / den;
        return -16.0 * A * A * sigma2 * x1 * x1 * q * q;
    }

    double rk4(double x, double kt, double dt, long substeps) const {
        const double h = dt / substeps;
        for (long j = 0; j < substeps; ++j) {
            const double k1 = f1(x, kt);
            const double k2 = f1(x + 0.5 * h * k1, kt);
            const double k3 = f1(x + 0.5 * h * k2, kt);
            const double k4 = f1(x + h * k3, kt);
            x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        }
        return x;
    }
};

// Classical RK4 on the profile grid. Each interval is accepted only when one
// more halving of the internal substep changes the endpoint by less than
// 1e-11 relative (with a 1e-13 Sigma0v absolute floor for the collapse phase
// of stiff large-k bracket evaluations at small c). On the equilibrium k the
// control accepts a single plain RK4 step per interval, so the output there
// is the unmodified fixed-step RK4 path.
inline std::vector<double> integrate_x1_scaled(const ScaledX1Ode& ode, double kt,
                                               const TimeGrid& grid) {
    std::vector<double> x(grid.size());
    x[0] = ode.S0;
    double xi = ode.S0;
    const double dt = grid.dt();
    const double atol = 1e-13 * ode.S0;
    for (int i = 0; i < grid.n_steps; ++i) {
        long m = 1;
        double coarse = ode.rk4(xi, kt, dt, m);
        while (!(coarse > 0.0) && m <= (1L << 22)) {  // still overshooting: climb fast
            m *= 8;
            coarse = ode.rk4(xi, kt, dt, m);
        }
        for (;; m *= 2) {
            if (m > (1L << 25))
                throw StepFailureError(
                    "x1 integration failed at t=" + std::to_string(grid.node(i)) +
                    ": substep limit exceeded (k outside the valid bracket or grid too coarse)");
            const double fine = ode.rk4(xi, kt, dt, 2 * m);
            if (fine > 0.0 && coarse > 0.0 &&
                std::abs(coarse - fine) <= 1e-11 * fine + atol) {
                xi = coarse;
                break;
            }
            coarse = fine;
        }
        x[i + 1] = xi;
    }
    return x;
}

inline double x1_terminal_scaled(const ScaledX1Ode& ode, double kt, const TimeGrid& grid) {
    return integrate_x1_scaled(ode, kt, grid).back();
}

}  // namespace detail

/// Forward solve of x1 on the manifold for a given (unscaled) k.
inline std::vector<double> integrate_x1(double k, const MarketParams& p,
                                        const TimeGrid& grid) {
    validate(p);
    validate(grid);
    if (p.A <= 0.0 || p.c <= 0.0)
        throw ValidationError("integrate_x1 requires A > 0 and c > 0");
    if (!(k > 0.0) || !std::isfinite(k))
        throw ValidationError("integrate_x1 requires finite k > 0");
    const double gamma = std::sqrt(1.0 + 8.0 * p.A * p.c * p.sigma * p.sigma);
    const detail::ScaledX1Ode ode{p.A, p.sigma * p.sigma, p.Sigma0v, gamma};
    const double kt = k / std::pow(p.Sigma0v, gamma);
    std::vector<double> x = detail::integrate_x1_scaled(ode, kt, grid);
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > 0.0) || !(x[i] < x[i - 1]))
            throw StepFailureError("x1 integration lost strict positivity/monotonicity");
    return x;
}

/// Bisection for the shooting constant. The proof bracket is
/// k_r = ((gamma+1)/(gamma-1)) Sigma0v^gamma, k_l = ((gamma+1)/(gamma-1)) x1^gamma(T;k_r),
/// with g(k_l) > 0 > g(k_r) and x1(T;k) strictly decreasing in k. Midpoints
/// are taken in log k: the bracket spans many decades when c is small and the
/// geometric midpoint avoids repeated integrations at stiff large k.
/// Returns the bracket endpoint with g >= 0, so the reconstructed x2 stays
/// nonnegative at T.
inline ShootingResult shoot_k(const MarketParams& p, const TimeGrid& grid,
                              double tol = 1e-12) {
    validate(p);
    validate(grid);
    if (p.A <= 0.0 || p.c <= 0.0)
        throw ValidationError("shoot_k requires A > 0 and c > 0");
    if (!(tol > 0.0)) throw ValidationError("invalid parameter 'tol': must be > 0");

    const double gamma = std::sqrt(1.0 + 8.0 * p.A * p.c * p.sigma * p.sigma);
    const double gp1 = gamma + 1.0, gm1 = gamma - 1.0;
    const detail::ScaledX1Ode ode{p.A, p.sigma * p.sigma, p.Sigma0v, gamma};
    const double S0 = p.Sigma0v;

    auto g_scaled = [&](double kt) {
        const double xT = detail::x1_terminal_scaled(ode, kt, grid);
        return gp1 * std::pow(xT / S0, gamma) - gm1 * kt;
    };

    const double kt_r = gp1 / gm1;
    const double xT_r = detail::x1_terminal_scaled(ode, kt_r, grid);
    const double xtT_r = std::pow(xT_r / S0, gamma);
    const double kt_l = (gp1 / gm1) * xtT_r;
    const double g_r = gp1 * xtT_r - gm1 * kt_r;
    double g_l = g_scaled(kt_l);
    if (!(g_l > 0.0) || !(g_r < 0.0))
        throw BracketError("shooting bracket sign check failed: g(k_l)=" +
                           std::to_string(g_l) + ", g(k_r)=" + std::to_string(g_r) +
                           " (expected g(k_l) > 0 > g(k_r))");

    double lo = kt_l, hi = kt_r, glo = g_l;
    int iterations = 0;
    while (glo > tol * gm1 * lo && (hi - lo) > 4.0 * 2.2e-16 * hi && iterations < 200) {
        ++iterations;
        const double mid = std::sqrt(lo * hi);
        const double gm = g_scaled(mid);
        if (gm > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }

    const double pow_S0 = std::pow(S0, gamma);
    ShootingResult r;
    r.k = lo * pow_S0;
    r.g_residual = glo * pow_S0;
    r.bracket_lo = kt_l * pow_S0;
    r.bracket_hi = kt_r * pow_S0;
    r.iterations = iterations;
    r.gamma = gamma;
    r.k_scaled = lo;
    return r;
}

/// Equilibrium profiles in feedback form. Requires c > 0; A = 0 uses the
/// risk-neutral closed form (lambda constant), A > 0 shoots on k.
inline EquilibriumProfiles solve_equilibrium(const MarketParams& p, const TimeGrid& grid) {
    validate(p);
    validate(grid);
    if (!(p.c > 0.0))
        throw ValidationError(
            "solve_equilibrium requires c > 0; use limit_profiles_c0 for the frictionless limit");

    const std::size_t n = grid.size();
    EquilibriumProfiles out;
    out.grid = grid;
    out.x1.resize(n);
    out.x2.resize(n);
    out.h.resize(n);
    out.beta.resize(n);
    out.lambda.resize(n);
    const double s2 = p.sigma * p.sigma;

    if (p.A == 0.0) {
        const double T = grid.T;
        const double lam0 = std::sqrt(p.Sigma0v / (s2 * T) + p.c * p.c / (T * T)) - p.c / T;
        for (std::size_t i = 0; i < n; ++i) {
            const double rem = T - grid.node(i);
            out.x1[i] = 2.0 * p.c * lam0 * s2 + lam0 * lam0 * s2 * rem;
            out.x2[i] = 0.5 * lam0 * s2 * rem;
        }
        out.k = 0.0;
        out.gamma = 1.0;
    } else {
        const ShootingResult sr = shoot_k(p, grid);
        const detail::ScaledX1Ode ode{p.A, s2, p.Sigma0v, sr.gamma};
        out.x1 = detail::integrate_x1_scaled(ode, sr.k_scaled, grid);
        const double gp1 = sr.gamma + 1.0, gm1 = sr.gamma - 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double xt = std::pow(out.x1[i] / p.Sigma0v, sr.gamma);
            out.x2[i] = (gp1 * xt - gm1 * sr.k_scaled) / (4.0 * p.A * (xt + sr.k_scaled));
        }
        out.k = sr.k;
        out.gamma = sr.gamma;
        if (!(std::abs(out.x2.back()) <= 1e-8 * p.Sigma0v))
            throw NumericalError("shooting left |x2(T)| above the boundary tolerance");
        if (!(out.x1.back() > 0.0))
            throw NumericalError("x1(T) not strictly positive after shooting");
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double den = 2.0 * (p.c * s2 + out.x2[i]);
        out.h[i] = out.x2[i] / out.x1[i];
        out.beta[i] = s2 / den;
        out.lambda[i] = out.x1[i] / den;
    }
    return out;
}

/// Max interior residual of the value-curvature Riccati ODE
///   h' + (1 - 2Acs^2) lambda^2 h^2 / c - lambda h / c + 1/(4c) = 0
/// with h' by centered differences; O(dt^2) for consistent profiles.
inline double riccati_residual(const EquilibriumProfiles& prof, const MarketParams& p) {
    validate(p);
    if (!(p.c > 0.0)) throw ValidationError("riccati_residual requires c > 0");
    if (prof.h.size() < 3) throw ValidationError("riccati_residual needs at least 3 nodes");
    const double s2 = p.sigma * p.sigma;
    const double dt = prof.grid.dt();
    const double a_coeff = (1.0 - 2.0 * p.A * p.c * s2) / p.c;
    if (std::abs(prof.h.back()) > 1e-6 * std::max(1.0, std::abs(prof.h.front())))
        throw NumericalError("riccati_residual: terminal condition h(T) = 0 violated");
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < prof.h.size(); ++i) {
        const double dh = (prof.h[i + 1] - prof.h[i - 1]) / (2.0 * dt);
        const double lam = prof.lambda[i], h = prof.h[i];
        const double res = dh + a_coeff * lam * lam * h * h - lam * h / p.c + 0.25 / p.c;
        worst = std::max(worst, std::abs(res));
    }
    return worst;
}

/// h together with the accumulated tail integral sigma^2 int_t^T lambda^2 h ds
/// (trapezoid on the profile grid).
struct ValueFunctionSpec {
    std::vector<double> h;
    std::vector<double> integral_term;
    double A = 0.0;
};

inline ValueFunctionSpec value_function_spec(const EquilibriumProfiles& prof,
                                             const MarketParams& p) {
    const std::size_t n = prof.h.size();
    ValueFunctionSpec spec;
    spec.h = prof.h;
    spec.A = p.A;
    spec.integral_term.assign(n, 0.0);
    const double s2 = p.sigma * p.sigma, dt = prof.grid.dt();
    auto f = [&](std::size_t i) {
        return s2 * prof.lambda[i] * prof.lambda[i] * prof.h[i];
    };
    for (std::size_t i = n - 1; i-- > 0;)
        spec.integral_term[i] = spec.integral_term[i + 1] + 0.5 * dt * (f(i) + f(i + 1));
    return spec;
}

/// Insider's value function H(t, P) given the realized value v; t must be a
/// grid node. A = 0 returns the quadratic form, A > 0 the exponential of it.
inline double value_function(double t, double P, double v,
                             const EquilibriumProfiles& prof, const MarketParams& p) {
    validate(p);
    const double dt = prof.grid.dt();
    const auto idx = static_cast<long long>(std::llround(t / dt));
    if (idx < 0 || idx >= static_cast<long long>(prof.grid.size()) ||
        std::abs(t - prof.grid.node(static_cast<std::size_t>(idx))) >
            1e-9 * std::max(1.0, prof.grid.T))
        throw ValidationError("value_function: t is not a node of the profile grid");
    const auto i = static_cast<std::size_t>(idx);
    const ValueFunctionSpec spec = value_function_spec(prof, p);
    const double q = (v - P) * (v - P) * spec.h[i] + spec.integral_term[i];
    return p.A == 0.0 ? q : -std::exp(-p.A * q);
}

/// Closed-form c -> 0 limit profiles (the frictionless equilibria). beta is
/// singular at t = T and reported as +infinity there; lambda and h take their
/// continuous extensions. The c field of the params is ignored.
inline EquilibriumProfiles limit_profiles_c0(const MarketParams& p, const TimeGrid& grid) {
    validate(p);
    validate(grid);
    const std::size_t n = grid.size();
    const double s2 = p.sigma * p.sigma, T = grid.T;
    const double Lk = std::sqrt(p.Sigma0v / (s2 * T));
    const double Lk2 = Lk * Lk;
    constexpr double inf = std::numeric_limits<double>::infinity();

    EquilibriumProfiles out;
    out.grid = grid;
    out.x1.resize(n);
    out.x2.resize(n);
    out.h.resize(n);
    out.beta.resize(n);
    out.lambda.resize(n);
    out.gamma = 1.0;

    if (p.A == 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double rem = T - grid.node(i);
            out.x1[i] = s2 * Lk2 * rem;
            out.x2[i] = 0.5 * Lk * s2 * rem;
            out.h[i] = 0.5 / Lk;
            out.lambda[i] = Lk;
            out.beta[i] = (i + 1 < n) ? 1.0 / (Lk * rem) : inf;
        }
        out.k = 0.0;
    } else {
        const double half_as = 0.5 * p.A * p.Sigma0v;
        const double S = std::sqrt(half_as * half_as + Lk2);
        const double d1 = p.A * p.Sigma0v + 2.0 * S;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = grid.node(i), rem = T - t;
            const double w = p.A * p.Sigma0v * (2.0 * t - T) / T + 2.0 * S;
            out.x1[i] = 4.0 * s2 * Lk2 * Lk2 * rem / (d1 * w);
            out.x2[i] = s2 * Lk2 * rem / d1;
            out.h[i] = w / (4.0 * Lk2);
            out.lambda[i] = 2.0 * Lk2 / w;
            out.beta[i] = (i + 1 < n) ? (half_as + S) / (Lk2 * rem) : inf;
        }
        // positive root of the c = 0 terminal condition quadratic
        out.k = 0.5 * p.Sigma0v *
                (std::sqrt(1.0 + 4.0 / (p.A * p.A * s2 * T * p.Sigma0v)) - 1.0);
    }
    return out;
}

struct LimitGapRow {
    double c;
    double gap_beta;    // sup over nodes t <= 0.9T of |beta(t;c) - beta_limit(t)|
    double gap_lambda;  // same for lambda
};

struct LimitCheckResult {
    std::vector<LimitGapRow> rows;
    double c_large = 0.0;
    double sup_beta_large = 0.0;    // sup_t |beta(t; c_large)|
    double sup_lambda_large = 0.0;  // sup_t |lambda(t; c_large)|
};

/// Gap table against the c -> 0 limit on the compact part of the horizon,
/// plus the sup norms at a large c for the c -> infinity direction.
inline LimitCheckResult limit_check(const MarketParams& p, const TimeGrid& grid,
                                    std::span<const double> c_sequence,
                                    double c_large = 100.0) {
    validate(p);
    validate(grid);
    if (c_sequence.empty()) throw ValidationError("c_sequence must be non-empty");
    for (std::size_t i = 0; i < c_sequence.size(); ++i) {
        if (!(c_sequence[i] > 0.0))
            throw ValidationError("c_sequence entries must be > 0");
        if (i > 0 && !(c_sequence[i] < c_sequence[i - 1]))
            throw ValidationError("c_sequence must be strictly decreasing");
    }
    if (!(c_large > 0.0)) throw ValidationError("c_large must be > 0");

    const EquilibriumProfiles lim = limit_profiles_c0(p, grid);
    const double t_cut = 0.9 * grid.T * (1.0 + 1e-12);

    LimitCheckResult result;
    for (double c : c_sequence) {
        MarketParams pc = p;
        pc.c = c;
        const EquilibriumProfiles prof = solve_equilibrium(pc, grid);
        LimitGapRow row{c, 0.0, 0.0};
        for (std::size_t i = 0; i < grid.size() && grid.node(i) <= t_cut; ++i) {
            row.gap_beta = std::max(row.gap_beta, std::abs(prof.beta[i] - lim.beta[i]));
            row.gap_lambda = std::max(row.gap_lambda, std::abs(prof.lambda[i] - lim.lambda[i]));
        }
        result.rows.push_back(row);
    }

    MarketParams pl = p;
    pl.c = c_large;
    const EquilibriumProfiles big = solve_equilibrium(pl, grid);
    result.c_large = c_large;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        result.sup_beta_large = std::max(result.sup_beta_large, std::abs(big.beta[i]));
        result.sup_lambda_large = std::max(result.sup_lambda_large, std::abs(big.lambda[i]));
    }
    return result;
}

}  // namespace kyletc
