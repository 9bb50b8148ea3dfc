// kyletc command-line front end: solves the single-auction and continuous-time
// equilibria, runs the Monte Carlo checks, and emits everything as CSV with a
// fully resolved '#' config header. Exit codes: 0 ok, 2 validation error,
// 3 numerical failure.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "kyletc/csv.hpp"
#include "kyletc/fbode.hpp"
#include "kyletc/market.hpp"
#include "kyletc/simulate.hpp"
#include "kyletc/single_auction.hpp"
#include "kyletc/version.hpp"

namespace {

using namespace kyletc;

struct Output {
    std::string path;  // empty = stdout
};

void emit(const Output& out, const std::vector<std::string>& header, const CsvTable& table) {
    if (out.path.empty())
        std::cout << csv_to_string(header, table);
    else
        write_csv(out.path, header, table);
}

std::vector<std::string> header_start(const std::string& command) {
    return {std::string("tool: kyletc ") + kVersion, "command: " + command};
}

void echo(std::vector<std::string>& h, const std::string& key, double v) {
    h.push_back(key + ": " + format_shortest(v));
}
void echo(std::vector<std::string>& h, const std::string& key, const std::string& v) {
    h.push_back(key + ": " + v);
}
void echo_params(std::vector<std::string>& h, const MarketParams& p) {
    echo(h, "A", p.A);
    echo(h, "c", p.c);
    echo(h, "sigma", p.sigma);
    echo(h, "Sigma0v", p.Sigma0v);
    echo(h, "v0", p.v0);
    echo(h, "T", p.T);
}

void add_param_flags(CLI::App* cmd, MarketParams& p) {
    cmd->add_option("--A", p.A, "risk aversion (>= 0)")->capture_default_str();
    cmd->add_option("--c", p.c, "transaction cost coefficient (>= 0)")->capture_default_str();
    cmd->add_option("--sigma", p.sigma, "noise-trader volatility (> 0)")->capture_default_str();
    cmd->add_option("--Sigma0v", p.Sigma0v, "prior variance of v (> 0)")->capture_default_str();
    cmd->add_option("--v0", p.v0, "prior mean of v")->capture_default_str();
    cmd->add_option("--T", p.T, "horizon (> 0)")->capture_default_str();
}

std::string fd(double v) { return format_shortest(v); }

// ---------------------------------------------------------------- commands

int cmd_single(const MarketParams& p, double tol, const Output& out) {
    const SingleAuctionEquilibrium eq = solve_single_auction(p, tol);
    auto h = header_start("single");
    echo_params(h, p);
    echo(h, "tol", tol);
    CsvTable t{{"lambda", "beta", "residual_r", "second_order_s", "nu"},
               {{eq.lambda, eq.beta, eq.residual_r, eq.second_order_s, eq.nu}}};
    emit(out, h, t);
    return 0;
}

int cmd_approx(const MarketParams& p, const Output& out) {
    const SingleAuctionEquilibrium eq = approx_equilibrium(p);
    auto h = header_start("approx");
    echo_params(h, p);
    CsvTable t{{"lambda", "beta", "residual_r", "second_order_s", "nu"},
               {{eq.lambda, eq.beta, eq.residual_r, eq.second_order_s, eq.nu}}};
    emit(out, h, t);
    return 0;
}

int cmd_sweep(const MarketParams& p, const std::vector<double>& grid_c,
              const std::vector<double>& grid_A, double tol, const Output& out) {
    const auto rows = sweep_monotonicity(p, grid_c, grid_A, tol);
    auto h = header_start("sweep");
    echo_params(h, p);
    echo(h, "tol", tol);
    {
        std::string gc = "grid_c:", ga = "grid_A:";
        for (double v : grid_c) gc += " " + fd(v);
        for (double v : grid_A) ga += " " + fd(v);
        h.push_back(gc);
        h.push_back(ga);
    }
    CsvTable t;
    t.columns = {"c", "A", "lambda", "beta"};
    for (const auto& r : rows) t.rows.push_back({r.c, r.A, r.lambda, r.beta});
    emit(out, h, t);
    return 0;
}

CsvTable profile_table(const EquilibriumProfiles& prof) {
    CsvTable t;
    t.columns = {"t", "Sigma", "x2", "h", "beta", "lambda"};
    for (std::size_t i = 0; i < prof.grid.size(); ++i)
        t.rows.push_back({prof.grid.node(i), prof.x1[i], prof.x2[i], prof.h[i],
                          prof.beta[i], prof.lambda[i]});
    return t;
}

int cmd_continuous(const MarketParams& p, int n_steps, const Output& out) {
    const TimeGrid grid{p.T, n_steps};
    auto h = header_start("continuous");
    echo_params(h, p);
    echo(h, "n_steps", static_cast<double>(n_steps));
    EquilibriumProfiles prof;
    if (p.c == 0.0) {
        prof = limit_profiles_c0(p, grid);
        echo(h, "frictionless_limit", std::string("true"));
        if (p.A == 0.0) echo(h, "model", std::string("kyle-continuous"));
    } else {
        prof = solve_equilibrium(p, grid);
    }
    echo(h, "k", prof.k);
    echo(h, "gamma", prof.gamma);
    emit(out, h, profile_table(prof));
    return 0;
}

int cmd_limits(const MarketParams& p, const std::vector<double>& c_sequence,
               double c_large, int n_steps, const Output& out) {
    const TimeGrid grid{p.T, n_steps};
    const LimitCheckResult res = limit_check(p, grid, c_sequence, c_large);
    auto h = header_start("limits");
    echo_params(h, p);
    echo(h, "n_steps", static_cast<double>(n_steps));
    {
        std::string cs = "c_sequence:";
        for (double v : c_sequence) cs += " " + fd(v);
        h.push_back(cs);
    }
    echo(h, "c_large", res.c_large);
    echo(h, "sup_beta_at_c_large", res.sup_beta_large);
    echo(h, "sup_lambda_at_c_large", res.sup_lambda_large);
    CsvTable t;
    t.columns = {"c", "gap_beta", "gap_lambda"};
    for (const auto& r : res.rows) t.rows.push_back({r.c, r.gap_beta, r.gap_lambda});
    emit(out, h, t);
    return 0;
}

int cmd_simulate(const MarketParams& p, int n_steps, std::int64_t n_paths,
                 std::uint64_t seed, bool has_fixed_v, double fixed_v, bool zero_noise,
                 int threads, const Output& out) {
    const TimeGrid grid{p.T, n_steps};
    const EquilibriumProfiles prof = solve_equilibrium(p, grid);
    SimulationConfig cfg;
    cfg.n_paths = n_paths;
    cfg.grid = grid;
    cfg.seed = seed;
    cfg.conditioning = has_fixed_v ? ValueConditioning::FixedV : ValueConditioning::RandomV;
    cfg.fixed_v = fixed_v;
    cfg.zero_noise = zero_noise;
    cfg.n_threads = threads;
    const SimulationResult res = simulate(prof, p, cfg);
    const SimulationStats& s = res.stats;

    auto h = header_start("simulate");
    echo_params(h, p);
    echo(h, "n_steps", static_cast<double>(n_steps));
    echo(h, "n_paths", static_cast<double>(n_paths));
    h.push_back("seed: " + std::to_string(seed));
    echo(h, "conditioning",
         std::string(has_fixed_v ? "fixed-v" : "random-v"));
    if (has_fixed_v) echo(h, "fixed_v", fixed_v);
    echo(h, "zero_noise", std::string(zero_noise ? "true" : "false"));
    echo(h, "mean_PT", s.mean_PT);
    echo(h, "se_PT", s.se_PT);
    echo(h, "mean_wealth", s.mean_wealth);
    echo(h, "se_wealth", s.se_wealth);
    echo(h, "mean_utility", s.mean_utility);
    echo(h, "se_utility", s.se_utility);

    CsvTable t;
    if (!has_fixed_v) {
        const auto eff = efficiency_report(s, prof);
        const auto mart = martingale_report(s);
        std::size_t flagged = 0;
        for (const auto& r : eff) flagged += r.flagged ? 1 : 0;
        echo(h, "efficiency_flagged_nodes", static_cast<double>(flagged));
        t.columns = {"t",          "Sigma_theory", "Sigma_emp", "se_Sigma",
                     "z_Sigma",    "mean_P_dev",   "se_P",      "z_P"};
        for (std::size_t i = 0; i < eff.size(); ++i)
            t.rows.push_back({eff[i].t, eff[i].sigma_theory, eff[i].sigma_empirical,
                              eff[i].se, eff[i].z, mart[i].mean_deviation, mart[i].se,
                              mart[i].z});
    } else {
        t.columns = {"t", "mean_P", "se_P", "mean_vmP", "var_vmP"};
        const double root_n = std::sqrt(static_cast<double>(s.n_paths));
        for (std::size_t i = 0; i < s.grid.size(); ++i)
            t.rows.push_back({s.grid.node(i), s.mean_P[i],
                              std::sqrt(s.var_P[i]) / root_n, s.mean_vmP[i],
                              s.var_vmP[i]});
    }
    emit(out, h, t);
    return 0;
}

struct FigPair {
    double A, c;
};

std::vector<FigPair> parse_pairs(const std::string& text) {
    std::vector<FigPair> pairs;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string item = text.substr(pos, comma == std::string::npos
                                                      ? std::string::npos
                                                      : comma - pos);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ValidationError("bad --pairs entry '" + item + "': expected A:c");
        try {
            pairs.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ValidationError("bad --pairs entry '" + item + "': expected A:c");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (pairs.empty()) throw ValidationError("--pairs is empty");
    return pairs;
}

int cmd_figures(int which, const std::string& out_dir, const std::string& pairs_text,
                int n_theta, const std::vector<double>& c_set,
                const std::vector<double>& A_set, int n_steps, double sigma,
                double Sigma0v, double T) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    if (!dir.empty()) fs::create_directories(dir);

    if (which == 1) {
        const auto pairs = parse_pairs(pairs_text);
        auto h = header_start("figures");
        echo(h, "figure", 1.0);
        echo(h, "sigma", sigma);
        echo(h, "Sigma0v", Sigma0v);
        echo(h, "n_theta", static_cast<double>(n_theta));
        echo(h, "pairs", pairs_text);
        CsvTable lam, bet;
        lam.columns = {"theta"};
        bet.columns = {"theta"};
        for (const auto& pr : pairs) {
            const std::string tag = "_A" + fd(pr.A) + "_c" + fd(pr.c);
            lam.columns.push_back("exact" + tag);
            lam.columns.push_back("approx" + tag);
            bet.columns.push_back("exact" + tag);
            bet.columns.push_back("approx" + tag);
        }
        for (int i = 1; i <= n_theta; ++i) {
            const double theta = static_cast<double>(i) / n_theta;
            std::vector<double> lrow{theta}, brow{theta};
            for (const auto& pr : pairs) {
                MarketParams p;
                p.A = theta * pr.A;
                p.c = theta * pr.c;
                p.sigma = sigma;
                p.Sigma0v = Sigma0v;
                const auto exact = solve_single_auction(p);
                const auto approx = approx_equilibrium(p);
                lrow.push_back(exact.lambda);
                lrow.push_back(approx.lambda);
                brow.push_back(exact.beta);
                brow.push_back(approx.beta);
            }
            lam.rows.push_back(lrow);
            bet.rows.push_back(brow);
        }
        write_csv(dir / "fig1_lambda.csv", h, lam);
        write_csv(dir / "fig1_beta.csv", h, bet);
        std::cout << (dir / "fig1_lambda.csv").string() << '\n'
                  << (dir / "fig1_beta.csv").string() << '\n';
        return 0;
    }

    // figures 2 and 3: continuous-time profiles over a parameter family
    const bool by_c = which == 2;
    const std::vector<double>& family = by_c ? c_set : A_set;
    auto h = header_start("figures");
    echo(h, "figure", static_cast<double>(which));
    echo(h, "sigma", sigma);
    echo(h, "Sigma0v", Sigma0v);
    echo(h, "T", T);
    echo(h, "n_steps", static_cast<double>(n_steps));
    if (by_c) {
        echo(h, "A", 1.0);
        std::string cs = "c_set:";
        for (double v : family) cs += " " + fd(v);
        h.push_back(cs);
    } else {
        echo(h, "c", 0.2);
        std::string as = "A_set:";
        for (double v : family) as += " " + fd(v);
        h.push_back(as);
    }

    CsvTable tb, tl, ts;
    tb.columns = {"t"};
    tl.columns = {"t"};
    ts.columns = {"t"};
    std::vector<EquilibriumProfiles> profs;
    for (double v : family) {
        MarketParams p;
        p.sigma = sigma;
        p.Sigma0v = Sigma0v;
        p.T = T;
        if (by_c) {
            p.A = 1.0;
            p.c = v;
        } else {
            p.A = v;
            p.c = 0.2;
        }
        const std::string tag = (by_c ? "c=" : "A=") + fd(v);
        tb.columns.push_back(tag);
        tl.columns.push_back(tag);
        ts.columns.push_back(tag);
        profs.push_back(solve_equilibrium(p, TimeGrid{T, n_steps}));
    }
    const TimeGrid grid{T, n_steps};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> rb{grid.node(i)}, rl{grid.node(i)}, rs{grid.node(i)};
        for (const auto& prof : profs) {
            rb.push_back(prof.beta[i]);
            rl.push_back(prof.lambda[i]);
            rs.push_back(prof.x1[i]);
        }
        tb.rows.push_back(rb);
        tl.rows.push_back(rl);
        ts.rows.push_back(rs);
    }
    const std::string stem = "fig" + std::to_string(which);
    write_csv(dir / (stem + "_beta.csv"), h, tb);
    write_csv(dir / (stem + "_lambda.csv"), h, tl);
    write_csv(dir / (stem + "_Sigma.csv"), h, ts);
    std::cout << (dir / (stem + "_beta.csv")).string() << '\n'
              << (dir / (stem + "_lambda.csv")).string() << '\n'
              << (dir / (stem + "_Sigma.csv")).string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"insider-trading equilibrium engine (single auction, continuous time, Monte Carlo)"};
    app.require_subcommand(1);

    MarketParams p_single, p_approx, p_sweep, p_cont, p_limits, p_sim;
    p_sim.c = 0.2;  // simulation requires c > 0; default to a friction benchmark
    double tol_single = 1e-12, tol_sweep = 1e-12;
    std::string out_single, out_approx, out_sweep, out_cont, out_limits, out_sim;
    std::vector<double> grid_c{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> grid_A{0.0, 0.5, 1.0, 1.5, 2.0};
    int nsteps_cont = 2000, nsteps_limits = 2000, nsteps_sim = 500;
    std::vector<double> c_sequence{0.1, 0.05, 0.025, 0.0125};
    double c_large = 100.0;
    std::int64_t n_paths = 100000;
    std::uint64_t seed = 1;
    double fixed_v = 0.0;
    bool zero_noise = false;
    int threads = 0;

    int fig_which = 1;
    std::string fig_out_dir = ".";
    std::string fig_pairs = "1:0.05,1:0.1,0.5:0.1";
    int fig_n_theta = 100;
    std::vector<double> fig_c_set{0.1, 0.3, 0.5};
    std::vector<double> fig_A_set{0.0, 1.0, 2.0};
    int fig_n_steps = 2000;
    double fig_sigma = 1.0, fig_Sigma0v_opt = -1.0, fig_T = 1.0;

    auto* single = app.add_subcommand("single", "solve the single-auction equilibrium");
    add_param_flags(single, p_single);
    single->add_option("--tol", tol_single, "residual tolerance on r(lambda)")->capture_default_str();
    single->add_option("--out", out_single, "output CSV path (default: stdout)");

    auto* approx = app.add_subcommand("approx", "small-friction approximation of the single auction");
    add_param_flags(approx, p_approx);
    approx->add_option("--out", out_approx, "output CSV path (default: stdout)");

    auto* sweep = app.add_subcommand("sweep", "single-auction sweep over (c, A) grids");
    add_param_flags(sweep, p_sweep);
    sweep->add_option("--grid-c", grid_c, "strictly increasing c grid")->capture_default_str();
    sweep->add_option("--grid-A", grid_A, "strictly increasing A grid")->capture_default_str();
    sweep->add_option("--tol", tol_sweep, "residual tolerance")->capture_default_str();
    sweep->add_option("--out", out_sweep, "output CSV path (default: stdout)");

    auto* cont = app.add_subcommand("continuous", "solve the continuous-time equilibrium profiles");
    add_param_flags(cont, p_cont);
    cont->add_option("--n-steps", nsteps_cont, "time grid steps")->capture_default_str();
    cont->add_option("--out", out_cont, "output CSV path (default: stdout)");

    auto* limits = app.add_subcommand("limits", "transaction-cost limit checks (c -> 0 and c -> infinity)");
    add_param_flags(limits, p_limits);
    limits->add_option("--c-sequence", c_sequence, "strictly decreasing positive c values")->capture_default_str();
    limits->add_option("--c-large", c_large, "large c for the c -> infinity report")->capture_default_str();
    limits->add_option("--n-steps", nsteps_limits, "time grid steps")->capture_default_str();
    limits->add_option("--out", out_limits, "output CSV path (default: stdout)");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo simulation of the continuous equilibrium");
    add_param_flags(sim, p_sim);
    sim->add_option("--n-steps", nsteps_sim, "time grid steps")->capture_default_str();
    sim->add_option("--n-paths", n_paths, "number of Monte Carlo paths")->capture_default_str();
    sim->add_option("--seed", seed, "RNG seed; fully determines all randomness")->capture_default_str();
    auto* fixed_opt = sim->add_option("--fixed-v", fixed_v,
                                      "condition on this realized v (default: draw v per path)");
    sim->add_flag("--zero-noise", zero_noise, "debug override: suppress noise-trader flow");
    sim->add_option("--threads", threads, "worker threads (0 = hardware); output identical either way")
        ->capture_default_str();
    sim->add_option("--out", out_sim, "output CSV path (default: stdout)");

    auto* figures = app.add_subcommand("figures", "reproduce figure data as CSV");
    figures->add_option("--which", fig_which, "figure number: 1, 2 or 3")
        ->required()
        ->check(CLI::Range(1, 3));
    figures->add_option("--out-dir", fig_out_dir, "output directory")->capture_default_str();
    figures->add_option("--pairs", fig_pairs, "figure 1 (A, c) pairs as A:c,A:c,...")->capture_default_str();
    figures->add_option("--n-theta", fig_n_theta, "figure 1 theta grid points on (0, 1]")->capture_default_str();
    figures->add_option("--c-set", fig_c_set, "figure 2 transaction-cost family")->capture_default_str();
    figures->add_option("--A-set", fig_A_set, "figure 3 risk-aversion family")->capture_default_str();
    figures->add_option("--n-steps", fig_n_steps, "time grid steps for figures 2 and 3")->capture_default_str();
    figures->add_option("--sigma", fig_sigma, "noise-trader volatility")->capture_default_str();
    figures->add_option("--Sigma0v", fig_Sigma0v_opt,
                        "prior variance (default: 1 for figure 1, 0.5 for figures 2 and 3)");
    figures->add_option("--T", fig_T, "horizon for figures 2 and 3")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (single->parsed()) return cmd_single(p_single, tol_single, {out_single});
        if (approx->parsed()) return cmd_approx(p_approx, {out_approx});
        if (sweep->parsed()) return cmd_sweep(p_sweep, grid_c, grid_A, tol_sweep, {out_sweep});
        if (cont->parsed()) return cmd_continuous(p_cont, nsteps_cont, {out_cont});
        if (limits->parsed())
            return cmd_limits(p_limits, c_sequence, c_large, nsteps_limits, {out_limits});
        if (sim->parsed())
            return cmd_simulate(p_sim, nsteps_sim, n_paths, seed, fixed_opt->count() > 0,
                                fixed_v, zero_noise, threads, {out_sim});
        if (figures->parsed()) {
            const double s0 = fig_Sigma0v_opt > 0.0 ? fig_Sigma0v_opt
                                                    : (fig_which == 1 ? 1.0 : 0.5);
            return cmd_figures(fig_which, fig_out_dir, fig_pairs, fig_n_theta, fig_c_set,
                               fig_A_set, fig_n_steps, fig_sigma, s0, fig_T);
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
