#include "varisk/sim.hpp"

#include "varisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace varisk {

void SimConfig::validate() const {
    if (episodes < 1)
        throw std::invalid_argument("episodes must be at least 1");
    if (!(tail_epsilon > 0.0))
        throw std::invalid_argument("tail_epsilon must be positive");
}

std::size_t truncation_horizon(double gamma, double r_max, double tail_epsilon) {
    std::size_t t = 0;
    double bound = r_max / (1.0 - gamma);
    while (!(bound < tail_epsilon)) {
        bound *= gamma;
        ++t;
    }
    return t;
}

void Moments::add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
}

void Moments::merge(const Moments& o) {
    if (o.n == 0.0)
        return;
    if (n == 0.0) {
        *this = o;
        return;
    }
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
}

namespace {

// Cumulative tables for inverse-CDF draws over each row and each edge.
struct Sampler {
    struct Edge {
        StateIndex next;
        std::vector<double> reward_cdf;
        std::vector<double> reward_value;
    };
    std::vector<std::vector<double>> row_cdf;
    std::vector<std::vector<Edge>> edges;
    std::vector<double> initial_cdf;

    explicit Sampler(const MarkovRewardProcess& mrp) {
        const std::size_t n = mrp.num_states();
        row_cdf.resize(n);
        edges.resize(n);
        for (StateIndex x = 0; x < n; ++x) {
            double acc = 0.0;
            for (const auto& o : mrp.rows[x]) {
                if (o.prob <= 0.0)
                    continue;
                acc += o.prob;
                row_cdf[x].push_back(acc);
                Edge e{o.next, {}, {}};
                double racc = 0.0;
                for (const auto& r : o.rewards) {
                    if (r.prob <= 0.0)
                        continue;
                    racc += r.prob;
                    e.reward_cdf.push_back(racc);
                    e.reward_value.push_back(r.value);
                }
                edges[x].push_back(std::move(e));
            }
        }
        double acc = 0.0;
        for (double p : mrp.initial) {
            acc += p;
            initial_cdf.push_back(acc);
        }
    }

    // first index whose cumulative mass exceeds u; roundoff in the last
    // bucket is absorbed by clamping
    static std::size_t pick(const std::vector<double>& cdf, double u) {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    }

    double episode(Stream& rng, double gamma, std::size_t horizon) const {
        StateIndex x = pick(initial_cdf, rng.uniform());
        double ret = 0.0;
        double discount = 1.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            const auto& e = edges[x][pick(row_cdf[x], rng.uniform())];
            const double r = e.reward_value[pick(e.reward_cdf, rng.uniform())];
            ret += discount * r;
            discount *= gamma;
            x = e.next;
        }
        return ret;
    }
};

void check_chain(const MarkovRewardProcess& mrp) {
    const auto report = validate_chain(mrp);
    if (!report.ok())
        throw MdpError("invalid Markov reward process: " + report.summary());
}

} // namespace

std::vector<double> simulate_returns_serial(const MarkovRewardProcess& mrp, const SimConfig& cfg) {
    cfg.validate();
    check_chain(mrp);
    const Sampler sampler(mrp);
    const std::size_t horizon = truncation_horizon(mrp.gamma, mrp.max_abs_reward(), cfg.tail_epsilon);
    std::vector<double> returns(cfg.episodes);
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Stream rng(cfg.seed, e);
        returns[e] = sampler.episode(rng, mrp.gamma, horizon);
    }
    return returns;
}

std::vector<double> simulate_returns(const MarkovRewardProcess& mrp, const SimConfig& cfg,
                                     int threads) {
    cfg.validate();
    check_chain(mrp);
    const Sampler sampler(mrp);
    const std::size_t horizon = truncation_horizon(mrp.gamma, mrp.max_abs_reward(), cfg.tail_epsilon);
    std::vector<double> returns(cfg.episodes);
    const int workers = threads > 0 ? threads : omp_get_max_threads();
    const auto n = static_cast<std::int64_t>(cfg.episodes);
#pragma omp parallel for schedule(static) num_threads(workers)
    for (std::int64_t e = 0; e < n; ++e) {
        Stream rng(cfg.seed, static_cast<std::uint64_t>(e));
        returns[e] = sampler.episode(rng, mrp.gamma, horizon);
    }
    return returns;
}

SimStats summarize_returns(std::span<const double> returns, std::size_t horizon) {
    constexpr std::size_t kBlock = 1024;
    Moments total;
    for (std::size_t start = 0; start < returns.size(); start += kBlock) {
        Moments block;
        const std::size_t stop = std::min(returns.size(), start + kBlock);
        for (std::size_t i = start; i < stop; ++i)
            block.add(returns[i]);
        total.merge(block);
    }
    SimStats s;
    s.episodes = returns.size();
    s.horizon = horizon;
    s.mean = total.mean;
    s.variance = total.variance();
    const double n = total.n;
    s.mean_se = n > 0.0 ? std::sqrt(s.variance / n) : 0.0;
    // standard error of the sample variance from the fourth central moment
    double m4 = 0.0;
    for (double r : returns) {
        const double d = r - total.mean;
        m4 += d * d * d * d;
    }
    if (n > 1.0) {
        m4 /= n;
        const double pop_var = total.m2 / n;
        s.variance_se = std::sqrt(std::max(0.0, m4 - pop_var * pop_var) / n);
    }
    return s;
}

SimStats simulate_stats(const MarkovRewardProcess& mrp, const SimConfig& cfg, int threads) {
    const auto returns = simulate_returns(mrp, cfg, threads);
    return summarize_returns(returns,
                             truncation_horizon(mrp.gamma, mrp.max_abs_reward(), cfg.tail_epsilon));
}

SimStats simulate_stats_serial(const MarkovRewardProcess& mrp, const SimConfig& cfg) {
    const auto returns = simulate_returns_serial(mrp, cfg);
    return summarize_returns(returns,
                             truncation_horizon(mrp.gamma, mrp.max_abs_reward(), cfg.tail_epsilon));
}

std::vector<std::pair<double, double>> empirical_cdf(const MarkovRewardProcess& mrp,
                                                     const SimConfig& cfg,
                                                     std::span<const double> grid, int threads) {
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("empirical_cdf: grid must be ascending");
    auto returns = simulate_returns(mrp, cfg, threads);
    std::sort(returns.begin(), returns.end());
    std::vector<std::pair<double, double>> out;
    for (double tau : grid) {
        const auto below = std::upper_bound(returns.begin(), returns.end(), tau) - returns.begin();
        out.emplace_back(tau, static_cast<double>(below) / static_cast<double>(returns.size()));
    }
    return out;
}

nlohmann::json sim_stats_to_json(const SimStats& s) {
    return {{"mean", s.mean},
            {"variance", s.variance},
            {"mean_se", s.mean_se},
            {"variance_se", s.variance_se},
            {"horizon", s.horizon},
            {"episodes", s.episodes}};
}

} // namespace varisk
