#pragma once
// Random instance generators and reference oracles shared by the test
// binaries. Nothing here calls the library's solvers.

#include "varisk/mdp.hpp"
#include "varisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

namespace testsupport {

using varisk::MarkovRewardProcess;
using varisk::Mdp;
using varisk::Outcome;
using varisk::RewardAtom;
using varisk::Stream;

inline std::vector<double> random_simplex(Stream& rng, std::size_t n) {
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) {
        x = rng.exponential();
        total += x;
    }
    for (auto& x : w)
        x /= total;
    return w;
}

inline std::vector<RewardAtom> random_reward_law(Stream& rng, std::size_t max_atoms) {
    const std::size_t k = 1 + rng.below(max_atoms);
    const auto probs = random_simplex(rng, k);
    std::vector<RewardAtom> law;
    for (std::size_t i = 0; i < k; ++i) {
        double v = std::round(rng.uniform(-5.0, 10.0) * 4.0) / 4.0;
        bool dup = false;
        for (const auto& a : law)
            dup = dup || a.value == v;
        if (dup)
            v += 0.125 * static_cast<double>(i + 1);
        law.push_back({v, probs[i]});
    }
    return law;
}

inline std::vector<Outcome> random_row(Stream& rng, std::size_t n, std::size_t max_atoms) {
    std::vector<std::size_t> succ;
    for (std::size_t y = 0; y < n; ++y)
        if (rng.uniform() < 0.6)
            succ.push_back(y);
    if (succ.empty())
        succ.push_back(rng.below(n));
    const auto p = random_simplex(rng, succ.size());
    std::vector<Outcome> row;
    for (std::size_t i = 0; i < succ.size(); ++i)
        row.push_back({succ[i], p[i], random_reward_law(rng, max_atoms)});
    return row;
}

inline MarkovRewardProcess random_chain(Stream& rng, std::size_t n, std::size_t max_atoms,
                                        double gamma) {
    MarkovRewardProcess c;
    c.gamma = gamma;
    for (std::size_t x = 0; x < n; ++x)
        c.rows.push_back(random_row(rng, n, max_atoms));
    c.initial = random_simplex(rng, n);
    return c;
}

inline Mdp random_mdp(Stream& rng, std::size_t n, std::size_t max_actions, std::size_t max_atoms,
                      double gamma) {
    Mdp m;
    m.gamma = gamma;
    for (std::size_t x = 0; x < n; ++x) {
        m.state_names.push_back("s" + std::to_string(x));
        const std::size_t na = 1 + rng.below(max_actions);
        std::vector<std::string> names;
        std::vector<std::vector<Outcome>> acts;
        for (std::size_t a = 0; a < na; ++a) {
            names.push_back("a" + std::to_string(a));
            acts.push_back(random_row(rng, n, max_atoms));
        }
        m.action_names.push_back(names);
        m.kernel.push_back(acts);
    }
    m.initial = random_simplex(rng, n);
    return m;
}

struct RawMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Fixed-point iteration on the first two raw moments of the return, in long
/// double. Converges for gamma < 1; stops once a sweep changes nothing
/// beyond long-double roundoff.
inline RawMoments iterate_moments(const MarkovRewardProcess& c) {
    using ld = long double;
    const std::size_t n = c.rows.size();
    const ld g = c.gamma;
    std::vector<ld> m1(n, 0.0L), m2(n, 0.0L);
    for (int it = 0; it < 200000; ++it) {
        std::vector<ld> n1(n, 0.0L), n2(n, 0.0L);
        for (std::size_t x = 0; x < n; ++x)
            for (const auto& o : c.rows[x])
                for (const auto& r : o.rewards) {
                    const ld w = static_cast<ld>(o.prob) * r.prob;
                    const ld j = r.value;
                    n1[x] += w * (j + g * m1[o.next]);
                    n2[x] += w * (j * j + 2.0L * g * j * m1[o.next] + g * g * m2[o.next]);
                }
        ld delta = 0.0L, scale = 1.0L;
        for (std::size_t x = 0; x < n; ++x) {
            delta = std::max({delta, std::fabs(n1[x] - m1[x]), std::fabs(n2[x] - m2[x])});
            scale = std::max(scale, std::fabs(n2[x]));
        }
        m1 = n1;
        m2 = n2;
        if (delta <= 1e-17L * scale)
            break;
    }
    ld e = 0.0L, s = 0.0L;
    for (std::size_t x = 0; x < n; ++x) {
        e += static_cast<ld>(c.initial[x]) * m1[x];
        s += static_cast<ld>(c.initial[x]) * m2[x];
    }
    return {static_cast<double>(e), static_cast<double>(s - e * e)};
}

/// Standard normal CDF from the positive-term erf series, long double.
inline long double series_normal_cdf(long double x) {
    const long double z = std::fabs(x) / std::sqrt(2.0L);
    long double term = z, sum = z;
    for (int n = 1; n < 2000; ++n) {
        term *= 2.0L * z * z / (2.0L * n + 1.0L);
        sum += term;
        if (term < sum * 1e-22L)
            break;
    }
    const long double erf = 2.0L / std::sqrt(3.14159265358979323846264338327950288L) *
                            std::exp(-z * z) * sum;
    return x < 0 ? 0.5L * (1.0L - erf) : 0.5L * (1.0L + erf);
}

inline double bisect_quantile(double p) {
    long double lo = -12.0L, hi = 12.0L;
    for (int i = 0; i < 300; ++i) {
        const long double mid = 0.5L * (lo + hi);
        (series_normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return static_cast<double>(0.5L * (lo + hi));
}

/// Exact law of the first `steps` rewards of a chain, by enumerating paths.
/// Keys are reward sequences.
inline std::map<std::vector<double>, double> prefix_law(const MarkovRewardProcess& c,
                                                        std::size_t steps) {
    std::map<std::vector<double>, double> law;
    struct Node {
        std::size_t state;
        std::vector<double> seq;
        double prob;
    };
    std::vector<Node> frontier;
    for (std::size_t x = 0; x < c.rows.size(); ++x)
        if (c.initial[x] > 0.0)
            frontier.push_back({x, {}, c.initial[x]});
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<Node> next;
        for (const auto& nd : frontier)
            for (const auto& o : c.rows[nd.state])
                for (const auto& r : o.rewards) {
                    auto seq = nd.seq;
                    seq.push_back(r.value);
                    next.push_back({o.next, seq, nd.prob * o.prob * r.prob});
                }
        frontier = std::move(next);
    }
    for (const auto& nd : frontier)
        law[nd.seq] += nd.prob;
    return law;
}

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / (1.0 + std::fabs(b));
}

} // namespace testsupport
