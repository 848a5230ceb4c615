#pragma once

#include "varisk/mdp.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

namespace varisk {

struct SimConfig {
    std::size_t episodes = 200000;
    double tail_epsilon = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimStats {
    double mean = 0.0;
    double variance = 0.0;
    double mean_se = 0.0;
    double variance_se = 0.0;
    std::size_t horizon = 0;
    std::size_t episodes = 0;
};

/// Smallest T with gamma^T * r_max / (1 - gamma) < tail_epsilon.
std::size_t truncation_horizon(double gamma, double r_max, double tail_epsilon);

/// Streaming count/mean/M2 accumulator with an exact pairwise merge.
struct Moments {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x);
    void merge(const Moments& o);
    double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
};

/// Truncated discounted returns, one per episode; episode e draws from
/// substream (seed, e).
std::vector<double> simulate_returns(const MarkovRewardProcess& mrp, const SimConfig& cfg,
                                     int threads = 0);
std::vector<double> simulate_returns_serial(const MarkovRewardProcess& mrp, const SimConfig& cfg);

/// Summary statistics over returns in fixed-size blocks merged in order, so
/// the result does not depend on how the returns were produced.
SimStats summarize_returns(std::span<const double> returns, std::size_t horizon);

SimStats simulate_stats(const MarkovRewardProcess& mrp, const SimConfig& cfg, int threads = 0);
SimStats simulate_stats_serial(const MarkovRewardProcess& mrp, const SimConfig& cfg);

/// Fraction of episode returns <= tau at each grid point.
std::vector<std::pair<double, double>> empirical_cdf(const MarkovRewardProcess& mrp,
                                                     const SimConfig& cfg,
                                                     std::span<const double> grid, int threads = 0);

nlohmann::json sim_stats_to_json(const SimStats& s);

} // namespace varisk
