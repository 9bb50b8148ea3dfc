// Uniform time grid shared by the ODE solvers and the simulator.
#pragma once

#include <cstddef>

#include "kyletc/market.hpp"

namespace kyletc {

struct TimeGrid {
    double T = 1.0;
    int n_steps = 2000;

    double dt() const { return T / n_steps; }
    std::size_t size() const { return static_cast<std::size_t>(n_steps) + 1; }
    // node(n_steps) == T exactly since i/n_steps evaluates to 1.0
    double node(std::size_t i) const {
        return (static_cast<double>(i) / n_steps) * T;
    }
    bool operator==(const TimeGrid&) const = default;
};

inline void validate(const TimeGrid& g) {
    if (!(g.T > 0.0)) throw ValidationError("invalid grid: T must be > 0");
    if (g.n_steps < 1) throw ValidationError("invalid grid: n_steps must be >= 1");
}

}  // namespace kyletc
