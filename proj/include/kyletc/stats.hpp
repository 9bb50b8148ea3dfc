// Streaming mean/variance accumulation (Welford) with an exact parallel
// merge, used by the simulator to keep memory at O(grid) per statistic.
#pragma once

#include <cstdint>
#include <limits>

namespace kyletc {

class Welford {
public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    // Chan et al. pairwise combination; merge order must be fixed for
    // bit-reproducible results.
    void merge(const Welford& other) {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n_);
        const double nb = static_cast<double>(other.n_);
        const double delta = other.mean_ - mean_;
        const double nt = na + nb;
        mean_ += delta * (nb / nt);
        m2_ += other.m2_ + delta * delta * (na * nb / nt);
        n_ += other.n_;
    }

    std::int64_t count() const { return n_; }
    double mean() const { return mean_; }
    double sample_variance() const {
        if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
        return m2_ / static_cast<double>(n_ - 1);
    }

private:
    std::int64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace kyletc
