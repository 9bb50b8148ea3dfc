// Monte Carlo simulation of the equilibrium market dynamics
//   dX = beta(t)(v - P) dt,  dY = dX + sigma dZ,  dP = lambda(t) dY,
//   dW = (v - P - c theta) theta dt,
// Euler-discretized on the profile grid. Paths are keyed by a counter-based
// RNG, and statistics accumulate in fixed-size chunks merged in chunk order,
// so results are bit-identical for any thread count.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "kyletc/fbode.hpp"
#include "kyletc/grid.hpp"
#include "kyletc/market.hpp"
#include "kyletc/rng.hpp"
#include "kyletc/stats.hpp"

namespace kyletc {

enum class ValueConditioning { FixedV, RandomV };

struct SimulationConfig {
    std::int64_t n_paths = 100000;
    TimeGrid grid;
    std::uint64_t seed = 1;
    ValueConditioning conditioning = ValueConditioning::RandomV;
    double fixed_v = 0.0;     // realization of v when conditioning == FixedV
    bool zero_noise = false;  // debug override: drop the noise-trader flow
    bool store_paths = false;
    int n_threads = 0;        // 0 = hardware concurrency; output is identical either way
};

struct PathRecord {
    double v = 0.0;
    std::vector<double> P;  // midprice
    std::vector<double> X;  // insider inventory
    std::vector<double> Y;  // aggregate order flow
    std::vector<double> Z;  // cumulative noise-trader flow sigma Z_t
    std::vector<double> W;  // cumulative insider wealth net of transaction costs
};

struct SimulationStats {
    std::int64_t n_paths = 0;
    std::uint64_t seed = 0;
    ValueConditioning conditioning = ValueConditioning::RandomV;
    bool zero_noise = false;
    TimeGrid grid;
    double v0 = 0.0;

    std::vector<double> mean_P;    // per node
    std::vector<double> var_P;     // per node, sample variance
    std::vector<double> mean_vmP;  // per node, mean of v - P_t
    std::vector<double> var_vmP;   // per node, sample variance of v - P_t

    double mean_PT = 0.0, se_PT = 0.0;
    double mean_wealth = 0.0, se_wealth = 0.0;
    double mean_utility = 0.0, se_utility = 0.0;  // NaN when A = 0
};

struct SimulationResult {
    SimulationStats stats;
    std::vector<PathRecord> paths;  // populated only when store_paths
};

namespace detail {

struct ChunkAccumulator {
    std::vector<Welford> P, vmP;
    Welford wealth, utility;

    explicit ChunkAccumulator(std::size_t nodes) : P(nodes), vmP(nodes) {}

    void merge(const ChunkAccumulator& o) {
        for (std::size_t i = 0; i < P.size(); ++i) {
            P[i].merge(o.P[i]);
            vmP[i].merge(o.vmP[i]);
        }
        wealth.merge(o.wealth);
        utility.merge(o.utility);
    }
};

inline constexpr std::int64_t kChunkPaths = 4096;

}  // namespace detail

inline SimulationResult simulate(const EquilibriumProfiles& prof, const MarketParams& p,
                                 const SimulationConfig& cfg) {
    validate(p);
    validate(cfg.grid);
    if (!(p.c > 0.0)) throw ValidationError("simulate requires c > 0");
    if (cfg.n_paths < 1) throw ValidationError("n_paths must be >= 1");
    if (!(cfg.grid == prof.grid))
        throw ValidationError("simulation grid does not match the profile grid");
    if (cfg.conditioning == ValueConditioning::FixedV && !std::isfinite(cfg.fixed_v))
        throw ValidationError("fixed_v must be finite");

    const std::size_t nodes = cfg.grid.size();
    const int n_steps = cfg.grid.n_steps;
    const double dt = cfg.grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double sigma_eff = cfg.zero_noise ? 0.0 : p.sigma;
    const double sd_v = std::sqrt(p.Sigma0v);

    SimulationResult result;
    if (cfg.store_paths) result.paths.resize(static_cast<std::size_t>(cfg.n_paths));

    const std::int64_t n_chunks =
        (cfg.n_paths + detail::kChunkPaths - 1) / detail::kChunkPaths;
    std::vector<detail::ChunkAccumulator> partials(static_cast<std::size_t>(n_chunks),
                                                   detail::ChunkAccumulator(nodes));

    auto run_path = [&](std::int64_t path, detail::ChunkAccumulator& acc) {
        const rng::PathStream stream(cfg.seed, static_cast<std::uint64_t>(path));
        const double v = cfg.conditioning == ValueConditioning::FixedV
                             ? cfg.fixed_v
                             : p.v0 + sd_v * stream.normal(0);

        PathRecord* rec = nullptr;
        if (cfg.store_paths) {
            rec = &result.paths[static_cast<std::size_t>(path)];
            rec->v = v;
            rec->P.resize(nodes);
            rec->X.resize(nodes);
            rec->Y.resize(nodes);
            rec->Z.resize(nodes);
            rec->W.resize(nodes);
        }

        double P = p.v0, X = 0.0, Y = 0.0, Z = 0.0, W = 0.0;
        acc.P[0].add(P);
        acc.vmP[0].add(v - P);
        if (rec) {
            rec->P[0] = P;
            rec->X[0] = X;
            rec->Y[0] = Y;
            rec->Z[0] = Z;
            rec->W[0] = W;
        }
        for (int i = 0; i < n_steps; ++i) {
            const double theta = prof.beta[static_cast<std::size_t>(i)] * (v - P);
            const double dX = theta * dt;
            const double dZ =
                sigma_eff > 0.0
                    ? sigma_eff * sqrt_dt * stream.normal(static_cast<std::uint64_t>(i) + 1)
                    : 0.0;
            const double dY = dX + dZ;
            W += (v - P - p.c * theta) * theta * dt;
            P += prof.lambda[static_cast<std::size_t>(i)] * dY;
            X += dX;
            Y += dY;
            Z += dZ;
            acc.P[static_cast<std::size_t>(i) + 1].add(P);
            acc.vmP[static_cast<std::size_t>(i) + 1].add(v - P);
            if (rec) {
                rec->P[static_cast<std::size_t>(i) + 1] = P;
                rec->X[static_cast<std::size_t>(i) + 1] = X;
                rec->Y[static_cast<std::size_t>(i) + 1] = Y;
                rec->Z[static_cast<std::size_t>(i) + 1] = Z;
                rec->W[static_cast<std::size_t>(i) + 1] = W;
            }
        }
        acc.wealth.add(W);
        if (p.A > 0.0) acc.utility.add(-std::exp(-p.A * W));
    };

    auto run_chunk = [&](std::int64_t chunk) {
        auto& acc = partials[static_cast<std::size_t>(chunk)];
        const std::int64_t begin = chunk * detail::kChunkPaths;
        const std::int64_t end = std::min(begin + detail::kChunkPaths, cfg.n_paths);
        for (std::int64_t path = begin; path < end; ++path) run_path(path, acc);
    };

    int n_threads = cfg.n_threads > 0
                        ? cfg.n_threads
                        : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n_threads = static_cast<int>(std::min<std::int64_t>(n_threads, n_chunks));
    if (n_threads <= 1) {
        for (std::int64_t chunk = 0; chunk < n_chunks; ++chunk) run_chunk(chunk);
    } else {
        std::atomic<std::int64_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (std::int64_t chunk = next.fetch_add(1); chunk < n_chunks;
                     chunk = next.fetch_add(1))
                    run_chunk(chunk);
            });
        for (auto& th : pool) th.join();
    }

    // merge in chunk order: the reduction tree is fixed, so results do not
    // depend on the thread schedule
    detail::ChunkAccumulator total(nodes);
    for (const auto& part : partials) total.merge(part);

    SimulationStats& s = result.stats;
    s.n_paths = cfg.n_paths;
    s.seed = cfg.seed;
    s.conditioning = cfg.conditioning;
    s.zero_noise = cfg.zero_noise;
    s.grid = cfg.grid;
    s.v0 = p.v0;
    s.mean_P.resize(nodes);
    s.var_P.resize(nodes);
    s.mean_vmP.resize(nodes);
    s.var_vmP.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        s.mean_P[i] = total.P[i].mean();
        s.var_P[i] = cfg.n_paths > 1 ? total.P[i].sample_variance() : 0.0;
        s.mean_vmP[i] = total.vmP[i].mean();
        s.var_vmP[i] = cfg.n_paths > 1 ? total.vmP[i].sample_variance() : 0.0;
    }
    const double root_n = std::sqrt(static_cast<double>(cfg.n_paths));
    s.mean_PT = s.mean_P[nodes - 1];
    s.se_PT = std::sqrt(s.var_P[nodes - 1]) / root_n;
    s.mean_wealth = total.wealth.mean();
    s.se_wealth = cfg.n_paths > 1
                      ? std::sqrt(total.wealth.sample_variance()) / root_n
                      : 0.0;
    if (p.A > 0.0) {
        s.mean_utility = total.utility.mean();
        s.se_utility = cfg.n_paths > 1
                           ? std::sqrt(total.utility.sample_variance()) / root_n
                           : 0.0;
    } else {
        s.mean_utility = std::numeric_limits<double>::quiet_NaN();
        s.se_utility = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

struct EfficiencyRow {
    double t;
    double sigma_theory;     // Sigma(t) from the profiles
    double sigma_empirical;  // across-path sample variance of v - P_t
    double se;               // normal-theory standard error of the variance estimate
    double z;
    bool flagged;            // |z| > 4
};

/// Per-node comparison of the empirical posterior variance against Sigma(t).
/// Requires random-v statistics.
inline std::vector<EfficiencyRow> efficiency_report(const SimulationStats& stats,
                                                    const EquilibriumProfiles& prof) {
    if (stats.conditioning != ValueConditioning::RandomV)
        throw ValidationError("efficiency_report requires random-v statistics");
    if (!(stats.grid == prof.grid))
        throw ValidationError("statistics grid does not match the profile grid");
    std::vector<EfficiencyRow> rows(stats.grid.size());
    const double n = static_cast<double>(stats.n_paths);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EfficiencyRow& r = rows[i];
        r.t = stats.grid.node(i);
        r.sigma_theory = prof.x1[i];
        r.sigma_empirical = stats.var_vmP[i];
        r.se = r.sigma_empirical * std::sqrt(2.0 / (n - 1.0));
        const double dev = r.sigma_empirical - r.sigma_theory;
        r.z = r.se > 0.0 ? dev / r.se : (dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        r.flagged = std::abs(r.z) > 4.0;
    }
    return rows;
}

struct MartingaleRow {
    double t;
    double mean_deviation;  // mean of P_t - v0 across paths
    double se;
    double z;
};

/// Tower-property check: the efficient price has mean v0 at every node.
inline std::vector<MartingaleRow> martingale_report(const SimulationStats& stats) {
    if (stats.conditioning != ValueConditioning::RandomV)
        throw ValidationError("martingale_report requires random-v statistics");
    std::vector<MartingaleRow> rows(stats.grid.size());
    const double n = static_cast<double>(stats.n_paths);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        MartingaleRow& r = rows[i];
        r.t = stats.grid.node(i);
        r.mean_deviation = stats.mean_P[i] - stats.v0;
        r.se = std::sqrt(stats.var_P[i] / n);
        r.z = r.se > 0.0 ? r.mean_deviation / r.se
                         : (r.mean_deviation == 0.0 ? 0.0
                                                    : std::numeric_limits<double>::infinity());
    }
    return rows;
}

}  // namespace kyletc
