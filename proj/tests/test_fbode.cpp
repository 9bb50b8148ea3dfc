#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kyletc/fbode.hpp"

using namespace kyletc;
using Catch::Approx;

namespace {

const MarketParams kFig3{1.0, 0.2, 1.0, 0.5, 0.0, 1.0};       // risk averse
const MarketParams kRiskNeutral{0.0, 0.5, 1.0, 1.0, 0.0, 1.0}; // closed form

// independent RK4 on the full two-component FBODE, used as an oracle
std::pair<std::vector<double>, std::vector<double>> rk4_full_fbode(
    std::pair<double, double> x0, const MarketParams& p, const TimeGrid& g) {
    std::vector<double> x1(g.size()), x2(g.size());
    auto x = x0;
    x1[0] = x.first;
    x2[0] = x.second;
    const double dt = g.dt();
    for (int i = 0; i < g.n_steps; ++i) {
        auto add = [](std::pair<double, double> a, std::pair<double, double> b,
                      double s) {
            return std::pair{a.first + s * b.first, a.second + s * b.second};
        };
        const auto k1 = fbode_rhs(x, p);
        const auto k2 = fbode_rhs(add(x, k1, 0.5 * dt), p);
        const auto k3 = fbode_rhs(add(x, k2, 0.5 * dt), p);
        const auto k4 = fbode_rhs(add(x, k3, dt), p);
        x.first += dt * (k1.first + 2 * k2.first + 2 * k3.first + k4.first) / 6.0;
        x.second += dt * (k1.second + 2 * k2.second + 2 * k3.second + k4.second) / 6.0;
        x1[static_cast<std::size_t>(i) + 1] = x.first;
        x2[static_cast<std::size_t>(i) + 1] = x.second;
    }
    return {x1, x2};
}

double fbode_centered_residual(const EquilibriumProfiles& prof, const MarketParams& p) {
    const double dt = prof.grid.dt();
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < prof.grid.size(); ++i) {
        const auto f = fbode_rhs({prof.x1[i], prof.x2[i]}, p);
        const double d1 = (prof.x1[i + 1] - prof.x1[i - 1]) / (2.0 * dt);
        const double d2 = (prof.x2[i + 1] - prof.x2[i - 1]) / (2.0 * dt);
        worst = std::max({worst, std::abs(d1 - f.first), std::abs(d2 - f.second)});
    }
    return worst;
}

}  // namespace

TEST_CASE("fbode_rhs fixed values") {
    SECTION("x2 = 0 reduces F2 to -x1/(4c)") {
        const MarketParams p{0.7, 0.3, 1.4, 0.9, 0.0, 1.0};
        const double s2 = p.sigma * p.sigma;
        const auto [f1, f2] = fbode_rhs({p.Sigma0v, 0.0}, p);
        CHECK(f1 == Approx(-s2 * p.Sigma0v * p.Sigma0v / (4.0 * p.c * p.c * s2 * s2))
                        .epsilon(1e-14));
        CHECK(f2 == Approx(-p.Sigma0v / (4.0 * p.c)).epsilon(1e-14));
    }
    SECTION("F vanishes with x1") {
        const auto [f1, f2] = fbode_rhs({0.0, 0.1}, kFig3);
        CHECK(f1 == 0.0);
        CHECK(f2 == 0.0);
    }
    SECTION("hand-evaluated point") {
        // sigma=1, c=0.2, A=1, x=(0.5, 0.1): F1 = -25/36, F2 = -7/18
        const auto [f1, f2] = fbode_rhs({0.5, 0.1}, kFig3);
        CHECK(f1 == Approx(-25.0 / 36.0).epsilon(1e-14));
        CHECK(f2 == Approx(-7.0 / 18.0).epsilon(1e-14));
    }
    SECTION("singular denominator throws") {
        MarketParams p = kFig3;
        p.c = 0.0;
        CHECK_THROWS_AS(fbode_rhs({0.5, 0.0}, p), SingularityError);
    }
}

TEST_CASE("rho_manifold") {
    const double gamma = std::sqrt(1.0 + 8.0 * kFig3.A * kFig3.c);
    SECTION("terminal relation makes rho vanish") {
        const double x1 = 0.37;
        const double k = (gamma + 1.0) / (gamma - 1.0) * std::pow(x1, gamma);
        CHECK(rho_manifold(x1, k, kFig3) == Approx(0.0).margin(1e-15));
    }
    SECTION("k -> 0+ limit is the rejected constant branch") {
        CHECK(rho_manifold(0.5, 1e-12, kFig3) ==
              Approx((gamma + 1.0) / (4.0 * kFig3.A)).epsilon(1e-9));
    }
    SECTION("frozen high-precision value") {
        CHECK(rho_manifold(0.5, 1.0, kFig3) ==
              Approx(0.045576962185713506).epsilon(1e-13));
    }
    SECTION("satisfies its defining ODE in x1 (finite differences)") {
        const double k = 1.0, x1 = 0.5, eps = 1e-6;
        const double drho =
            (rho_manifold(x1 + eps, k, kFig3) - rho_manifold(x1 - eps, k, kFig3)) /
            (2.0 * eps);
        const double rho = rho_manifold(x1, k, kFig3);
        const double s2 = kFig3.sigma * kFig3.sigma;
        const double rhs =
            kFig3.c * s2 / x1 + rho / x1 - 2.0 * kFig3.A * rho * rho / x1;
        CHECK(drho == Approx(rhs).epsilon(1e-7));
    }
    SECTION("A = 0 is a domain error") {
        CHECK_THROWS_AS(rho_manifold(0.5, 1.0, kRiskNeutral), ValidationError);
    }
}

TEST_CASE("integrate_x1") {
    const TimeGrid grid{1.0, 2000};
    const double k = 0.3443982913547320;  // equilibrium constant at the Fig.3 params
    SECTION("initial condition and strict decrease") {
        const auto x = integrate_x1(k, kFig3, grid);
        REQUIRE(x.size() == grid.size());
        CHECK(x[0] == kFig3.Sigma0v);
        for (std::size_t i = 1; i < x.size(); ++i) {
            CHECK(x[i] > 0.0);
            CHECK(x[i] < x[i - 1]);
        }
        CHECK(x.back() < kFig3.Sigma0v);
    }
    SECTION("classical fourth-order convergence (Richardson ratios)") {
        const double xa = integrate_x1(k, kFig3, TimeGrid{1.0, 250}).back();
        const double xb = integrate_x1(k, kFig3, TimeGrid{1.0, 500}).back();
        const double xc = integrate_x1(k, kFig3, TimeGrid{1.0, 1000}).back();
        const double ratio = (xa - xb) / (xb - xc);
        CHECK(ratio >= 12.0);
        CHECK(ratio <= 20.0);
    }
    SECTION("parameter validation") {
        CHECK_THROWS_AS(integrate_x1(-1.0, kFig3, grid), ValidationError);
        CHECK_THROWS_AS(integrate_x1(k, kRiskNeutral, grid), ValidationError);
    }
}

TEST_CASE("shoot_k") {
    const TimeGrid grid{1.0, 2000};
    SECTION("proof bracket has the guaranteed signs") {
        const double gamma = std::sqrt(1.0 + 8.0 * kFig3.A * kFig3.c);
        const double kr =
            (gamma + 1.0) / (gamma - 1.0) * std::pow(kFig3.Sigma0v, gamma);
        const double x1T_r = integrate_x1(kr, kFig3, grid).back();
        const double g_r = (gamma + 1.0) * std::pow(x1T_r, gamma) - (gamma - 1.0) * kr;
        CHECK(g_r < 0.0);
        const double kl = (gamma + 1.0) / (gamma - 1.0) * std::pow(x1T_r, gamma);
        const double x1T_l = integrate_x1(kl, kFig3, grid).back();
        const double g_l = (gamma + 1.0) * std::pow(x1T_l, gamma) - (gamma - 1.0) * kl;
        CHECK(g_l > 0.0);
        CHECK(kl < kr);
    }
    SECTION("frozen constant and doubled-grid agreement") {
        const ShootingResult r = shoot_k(kFig3, grid);
        CHECK(r.k == Approx(0.3443982913547320).epsilon(1e-6));
        const ShootingResult r2 = shoot_k(kFig3, TimeGrid{1.0, 4000});
        CHECK(r.k == Approx(r2.k).epsilon(1e-6));
        CHECK(r.k > 0.0);
        CHECK(r.bracket_lo <= r.k);
        CHECK(r.k <= r.bracket_hi);
        CHECK(r.g_residual >= 0.0);  // the g >= 0 endpoint is returned
        CHECK(r.g_residual <= 1e-12 * (r.gamma - 1.0) * r.k * 1.0000001);
    }
    SECTION("tolerance nesting") {
        const double k8 = shoot_k(kFig3, grid, 1e-8).k;
        const double k12 = shoot_k(kFig3, grid, 1e-12).k;
        CHECK(k8 == Approx(k12).epsilon(1e-7));
        // tightening only continues the bisection, so the g >= 0 endpoint climbs
        CHECK(k12 >= k8);
    }
    SECTION("requires A > 0 and c > 0") {
        CHECK_THROWS_AS(shoot_k(kRiskNeutral, grid), ValidationError);
    }
}

TEST_CASE("solve_equilibrium risk-neutral closed form") {
    const TimeGrid grid{1.0, 2000};
    const EquilibriumProfiles prof = solve_equilibrium(kRiskNeutral, grid);
    const double lam0 = std::sqrt(1.25) - 0.5;
    SECTION("lambda is the constant sqrt(Lambda_K^2 + c^2/T^2) - c/T") {
        for (std::size_t i = 0; i < grid.size(); i += 100)
            CHECK(prof.lambda[i] == Approx(lam0).margin(1e-12));
        CHECK(prof.lambda.back() == Approx(lam0).margin(1e-12));
    }
    SECTION("boundary values") {
        CHECK(prof.x1[0] == Approx(kRiskNeutral.Sigma0v).epsilon(1e-15));
        CHECK(prof.x2.back() == 0.0);
        CHECK(prof.beta.back() == Approx(1.0).margin(1e-8));
        CHECK(prof.x1.back() > 0.0);  // no full revelation with c > 0
    }
    SECTION("independent RK4 of the full FBODE reproduces the closed form") {
        const TimeGrid fine{1.0, 4000};
        const EquilibriumProfiles cf = solve_equilibrium(kRiskNeutral, fine);
        const auto [x1, x2] = rk4_full_fbode({cf.x1[0], cf.x2[0]}, kRiskNeutral, fine);
        double sup = 0.0;
        for (std::size_t i = 0; i < fine.size(); ++i)
            sup = std::max({sup, std::abs(x1[i] - cf.x1[i]), std::abs(x2[i] - cf.x2[i])});
        CHECK(sup <= 1e-8);
    }
    SECTION("rejects c = 0") {
        MarketParams p = kRiskNeutral;
        p.c = 0.0;
        CHECK_THROWS_AS(solve_equilibrium(p, grid), ValidationError);
    }
}

TEST_CASE("solve_equilibrium risk-averse shooting solution") {
    const TimeGrid grid{1.0, 2000};
    const EquilibriumProfiles prof = solve_equilibrium(kFig3, grid);

    SECTION("boundary and positivity") {
        CHECK(prof.x1[0] == kFig3.Sigma0v);
        CHECK(std::abs(prof.x2.back()) <= 1e-8 * kFig3.Sigma0v);
        CHECK(prof.x1.back() > 0.0);
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) CHECK(prof.x2[i] > 0.0);
        CHECK(prof.x2.back() >= 0.0);
    }
    SECTION("trading rule increases to 1/(2c), pricing rule decreases") {
        for (std::size_t i = 1; i < grid.size(); ++i) {
            CHECK(prof.beta[i] >= prof.beta[i - 1]);
            CHECK(prof.lambda[i] <= prof.lambda[i - 1]);
        }
        CHECK(prof.beta.back() == Approx(2.5).margin(1e-6));
        for (std::size_t i = 0; i + 1 < grid.size(); ++i)
            CHECK(prof.beta[i] < 2.5);
    }
    SECTION("filtering identity lambda sigma^2 = beta x1 holds pointwise") {
        const double s2 = kFig3.sigma * kFig3.sigma;
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(prof.lambda[i] * s2 ==
                  Approx(prof.beta[i] * prof.x1[i]).epsilon(1e-14));
    }
    SECTION("posterior variance decays as -sigma^2 lambda^2") {
        auto sup_filter_residual = [&](const EquilibriumProfiles& pr) {
            const double dt = pr.grid.dt();
            double worst = 0.0;
            for (std::size_t i = 1; i + 1 < pr.grid.size(); ++i) {
                const double d = (pr.x1[i + 1] - pr.x1[i - 1]) / (2.0 * dt);
                worst = std::max(worst,
                                 std::abs(d + pr.lambda[i] * pr.lambda[i]));
            }
            return worst;
        };
        const double coarse = sup_filter_residual(prof);
        const double fine =
            sup_filter_residual(solve_equilibrium(kFig3, TimeGrid{1.0, 4000}));
        CHECK(coarse / fine >= 3.0);  // O(dt^2) refinement
    }
    SECTION("manifold consistency x2 = rho(x1; k)") {
        for (std::size_t i = 0; i < grid.size(); i += 50)
            CHECK(prof.x2[i] ==
                  Approx(rho_manifold(prof.x1[i], prof.k, kFig3)).margin(1e-12));
    }
    SECTION("centered-difference FBODE residual shrinks at O(dt^2)") {
        const double coarse = fbode_centered_residual(prof, kFig3);
        const double fine = fbode_centered_residual(
            solve_equilibrium(kFig3, TimeGrid{1.0, 4000}), kFig3);
        CHECK(coarse / fine >= 3.0);
    }
    SECTION("stable under grid doubling") {
        const EquilibriumProfiles fine = solve_equilibrium(kFig3, TimeGrid{1.0, 4000});
        CHECK(prof.lambda[0] == Approx(fine.lambda[0]).margin(1e-6));
        CHECK(prof.beta[0] == Approx(fine.beta[0]).margin(1e-6));
        CHECK(prof.x1.back() == Approx(fine.x1.back()).margin(1e-6));
    }
}

TEST_CASE("riccati_residual") {
    const TimeGrid grid{1.0, 2000};
    SECTION("risk-neutral closed form") {
        const EquilibriumProfiles prof = solve_equilibrium(kRiskNeutral, grid);
        CHECK(riccati_residual(prof, kRiskNeutral) <= 1e-5);
    }
    SECTION("risk-averse profiles, with O(dt^2) refinement") {
        const EquilibriumProfiles prof = solve_equilibrium(kFig3, grid);
        const double coarse = riccati_residual(prof, kFig3);
        CHECK(coarse <= 1e-4);
        const double fine =
            riccati_residual(solve_equilibrium(kFig3, TimeGrid{1.0, 4000}), kFig3);
        CHECK(coarse / fine >= 3.0);
    }
    SECTION("h = 0 leaves the inhomogeneous term") {
        EquilibriumProfiles fake;
        fake.grid = TimeGrid{1.0, 10};
        fake.x1.assign(11, 1.0);
        fake.x2.assign(11, 0.0);
        fake.h.assign(11, 0.0);
        fake.beta.assign(11, 1.0);
        fake.lambda.assign(11, 0.3);
        CHECK(riccati_residual(fake, kRiskNeutral) ==
              Approx(1.0 / (4.0 * kRiskNeutral.c)).epsilon(1e-15));
    }
}

TEST_CASE("value_function") {
    const TimeGrid grid{1.0, 2000};
    SECTION("terminal values") {
        const EquilibriumProfiles rn = solve_equilibrium(kRiskNeutral, grid);
        CHECK(value_function(1.0, 0.3, 0.9, rn, kRiskNeutral) == Approx(0.0).margin(1e-12));
        const EquilibriumProfiles ra = solve_equilibrium(kFig3, grid);
        CHECK(value_function(1.0, 0.3, 0.9, ra, kFig3) == Approx(-1.0).margin(1e-12));
    }
    SECTION("P = v leaves the nonnegative tail integral") {
        const EquilibriumProfiles rn = solve_equilibrium(kRiskNeutral, grid);
        const double v = value_function(0.25, 0.7, 0.7, rn, kRiskNeutral);
        CHECK(v >= 0.0);
    }
    SECTION("initial value against the closed-form quadrature") {
        const EquilibriumProfiles rn = solve_equilibrium(kRiskNeutral, grid);
        const double got = value_function(0.0, 0.0, 1.0, rn, kRiskNeutral);
        // h(0) + sigma^2 lambda^2 int_0^1 h dt evaluated in closed form
        CHECK(got == Approx(0.3774280762200931).margin(1e-6));
        // quadrature oracle at 10x resolution
        const EquilibriumProfiles fine = solve_equilibrium(kRiskNeutral, TimeGrid{1.0, 20000});
        CHECK(got == Approx(value_function(0.0, 0.0, 1.0, fine, kRiskNeutral)).margin(1e-6));
    }
    SECTION("tail integral is nonnegative and non-increasing in t") {
        const EquilibriumProfiles ra = solve_equilibrium(kFig3, grid);
        const ValueFunctionSpec spec = value_function_spec(ra, kFig3);
        CHECK(spec.integral_term.back() == 0.0);
        for (std::size_t i = 1; i < spec.integral_term.size(); ++i) {
            CHECK(spec.integral_term[i] <= spec.integral_term[i - 1]);
            CHECK(spec.integral_term[i] >= 0.0);
        }
    }
    SECTION("off-grid time is rejected") {
        const EquilibriumProfiles rn = solve_equilibrium(kRiskNeutral, grid);
        CHECK_THROWS_AS(value_function(0.12345677, 0.0, 1.0, rn, kRiskNeutral),
                        ValidationError);
    }
}

TEST_CASE("limit_profiles_c0") {
    const TimeGrid grid{1.0, 2000};
    SECTION("risk-neutral limit is the continuous Kyle equilibrium") {
        MarketParams p = kRiskNeutral;
        p.Sigma0v = 1.0;
        const EquilibriumProfiles lim = limit_profiles_c0(p, grid);
        for (std::size_t i = 0; i < grid.size(); i += 200)
            CHECK(lim.lambda[i] == Approx(1.0).epsilon(1e-14));
        CHECK(lim.beta[1000] == Approx(2.0).epsilon(1e-13));  // t = 0.5
        CHECK(lim.x1.back() == 0.0);                          // full revelation
        CHECK(std::isinf(lim.beta.back()));
    }
    SECTION("risk-averse limit values") {
        const EquilibriumProfiles lim = limit_profiles_c0(kFig3, grid);
        CHECK(lim.lambda[0] == 1.0);  // Lambda_K^2 / (-A Sigma0v / 2 + S) exactly
        CHECK(lim.x1[0] == Approx(kFig3.Sigma0v).epsilon(1e-14));
        CHECK(lim.x1.back() == 0.0);
        // x2 agrees with the c = 0 manifold x1 / (2A (x1 + k)), k = 1/2 here
        CHECK(lim.k == Approx(0.5).epsilon(1e-13));
        for (std::size_t i = 0; i < grid.size(); i += 400)
            CHECK(lim.x2[i] ==
                  Approx(lim.x1[i] / (2.0 * kFig3.A * (lim.x1[i] + lim.k)))
                      .margin(1e-12));
    }
    SECTION("small but positive c approaches the limit profiles") {
        MarketParams p = kFig3;
        p.c = 1e-4;
        const TimeGrid coarse{1.0, 1000};
        const EquilibriumProfiles prof = solve_equilibrium(p, coarse);
        const EquilibriumProfiles lim = limit_profiles_c0(kFig3, coarse);
        CHECK(prof.lambda[0] == Approx(lim.lambda[0]).margin(2e-3));
    }
}

TEST_CASE("limit_check") {
    const TimeGrid grid{1.0, 1000};
    SECTION("gap columns decrease along a decreasing c sequence") {
        const std::vector<double> cs{0.1, 0.05, 0.025};
        const LimitCheckResult res = limit_check(kFig3, grid, cs);
        REQUIRE(res.rows.size() == 3);
        CHECK(res.rows[0].gap_lambda > res.rows[1].gap_lambda);
        CHECK(res.rows[1].gap_lambda > res.rows[2].gap_lambda);
        CHECK(res.rows[0].gap_beta > res.rows[1].gap_beta);
        CHECK(res.rows[1].gap_beta > res.rows[2].gap_beta);
    }
    SECTION("large-c sups obey the beta bound and lambda = beta Sigma / sigma^2") {
        const std::vector<double> cs{0.1};
        const LimitCheckResult res = limit_check(kFig3, grid, cs, 100.0);
        CHECK(res.sup_beta_large <= 0.005);
        CHECK(res.sup_lambda_large <= 0.0025);
    }
    SECTION("risk-neutral lambda gap equals the algebraic identity") {
        MarketParams p = kRiskNeutral;
        p.c = 0.3;
        const std::vector<double> cs{0.3};
        const LimitCheckResult res = limit_check(p, grid, cs, 10.0);
        const double Lk = 1.0;
        const double expected = std::abs(std::sqrt(Lk * Lk + 0.09) - 0.3 - Lk);
        CHECK(res.rows[0].gap_lambda == Approx(expected).margin(1e-12));
    }
    SECTION("non-decreasing sequences are rejected") {
        const std::vector<double> bad{0.05, 0.1};
        CHECK_THROWS_AS(limit_check(kFig3, grid, bad), ValidationError);
    }
}
