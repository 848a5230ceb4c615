#include "support.hpp"

#include "varisk/risk.hpp"
#include "varisk/sat.hpp"

#include <map>
#include <set>

#include "doctest.h"

using namespace varisk;
using testsupport::rel_err;

namespace {

Mdp chain_shaped() {
    Mdp m;
    m.state_names = {"a", "b"};
    m.action_names = {{"go"}, {"go"}};
    m.kernel = {{{{0, 0.4, {{1.0, 1.0}}}, {1, 0.6, {{2.0, 1.0}}}}},
                {{{0, 0.5, {{3.0, 1.0}}}, {1, 0.5, {{4.0, 1.0}}}}}};
    m.initial = {0.5, 0.5};
    m.gamma = 0.9;
    return m;
}

// Augmented chain re-expressed as a reward process paying r(s) on leaving s.
MarkovRewardProcess as_process(const AugmentedChain& c) {
    MarkovRewardProcess p;
    p.gamma = c.gamma;
    p.initial = c.initial;
    for (std::size_t s = 0; s < c.num_states(); ++s) {
        std::vector<Outcome> row;
        for (auto [t, q] : c.rows[s])
            row.push_back({t, q, {{c.reward[s], 1.0}}});
        p.rows.push_back(row);
    }
    return p;
}

} // namespace

TEST_CASE("state count on a fully supported two-state model") {
    const auto aug = sat_transform_mdp(chain_shaped());
    CHECK(aug.num_states() == 6);
    std::size_t nulls = 0;
    for (const auto& s : aug.states)
        nulls += s.is_null;
    CHECK(nulls == 2);
}

TEST_CASE("degenerate reward laws give one quadruple per edge") {
    Stream rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        auto m = testsupport::random_mdp(rng, 3, 2, 1, 0.9);
        m.initial = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        std::set<std::tuple<std::size_t, std::size_t, std::size_t>> edges;
        for (std::size_t x = 0; x < 3; ++x)
            for (std::size_t a = 0; a < m.num_actions(x); ++a)
                for (const auto& o : m.kernel[x][a])
                    edges.insert({x, a, o.next});
        const auto aug = sat_transform_mdp(m);
        CHECK(aug.num_states() == edges.size() + 3);
    }
}

TEST_CASE("a two-point reward law splits the edge mass") {
    Mdp m;
    m.state_names = {"x"};
    m.action_names = {{"a"}};
    m.kernel = {{{{0, 1.0, {{0.0, 0.3}, {1.0, 0.7}}}}}};
    m.initial = {1.0};
    const auto aug = sat_transform_mdp(m);
    REQUIRE(aug.num_states() == 3);
    const auto& row = aug.kernel[0][0];
    REQUIRE(row.size() == 2);
    std::map<double, double> mass;
    for (auto [t, p] : row)
        mass[aug.reward[t]] += p;
    CHECK(mass[0.0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(mass[1.0] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("lifted policies follow the anchor state") {
    Stream rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const auto m = testsupport::random_mdp(rng, 4, 3, 2, 0.9);
        const auto aug = sat_transform_mdp(m);
        const PolicySpace space(m);
        const auto pi = space.at(rng.below(space.size()));
        const auto lifted = lift_policy(pi, m, aug);
        REQUIRE(lifted.actions.size() == aug.num_states());
        for (std::size_t s = 0; s < aug.num_states(); ++s)
            CHECK(lifted.actions[s] == pi.action(aug.states[s].anchor()));
    }

    auto m = chain_shaped();
    m.action_names = {{"u", "v"}, {"w", "z"}};
    m.kernel[0].push_back(m.kernel[0][0]);
    m.kernel[1].push_back(m.kernel[1][0]);
    const auto aug = sat_transform_mdp(m);
    const auto lifted = lift_policy(PolicySpace(m).make({0, 1}), m, aug);
    for (std::size_t s = 0; s < aug.num_states(); ++s) {
        const auto& st = aug.states[s];
        if (st.is_null && st.from == 0)
            CHECK(lifted.actions[s] == 0);
        if (!st.is_null && st.to == 1)
            CHECK(lifted.actions[s] == 1);
    }
}

TEST_CASE("sat_chain of a one-state self-loop") {
    MarkovRewardProcess c;
    c.rows = {{{0, 1.0, {{1.0, 1.0}}}}};
    c.initial = {1.0};
    c.gamma = 0.95;
    const auto aug = sat_chain(c);
    REQUIRE(aug.num_states() == 2);
    CHECK(aug.states[0].is_null);
    CHECK_FALSE(aug.states[1].is_null);
    CHECK(aug.reward == std::vector<double>{0.0, 1.0});
    const auto P = aug.transition_matrix();
    CHECK(P(0, 1) == 1.0);
    CHECK(P(1, 1) == 1.0);
    CHECK(aug.initial == std::vector<double>{1.0, 0.0});
}

TEST_CASE("augmented transitions carry the p times d product law") {
    Stream rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const auto c = testsupport::random_chain(rng, 3, 3, 0.9);
        const auto aug = sat_chain(c);
        std::set<double> rewards_seen;
        for (std::size_t s = 0; s < aug.num_states(); ++s) {
            const auto x = aug.states[s].anchor();
            std::map<std::pair<std::size_t, double>, double> want, got;
            for (const auto& o : c.rows[x])
                for (const auto& r : o.rewards)
                    want[{o.next, r.value}] += o.prob * r.prob;
            double total = 0.0;
            for (auto [t, p] : aug.rows[s]) {
                REQUIRE_FALSE(aug.states[t].is_null);
                CHECK(aug.states[t].from == x);
                got[{aug.states[t].to, aug.reward[t]}] += p;
                total += p;
            }
            CHECK(std::fabs(total - 1.0) <= 1e-12);
            REQUIRE(got.size() == want.size());
            for (const auto& [k, p] : want)
                CHECK(std::fabs(got[k] - p) <= 1e-15);
        }
        // every augmented state has incoming mass
        std::vector<double> incoming(aug.num_states(), 0.0);
        for (std::size_t s = 0; s < aug.num_states(); ++s) {
            incoming[s] += aug.initial[s];
            for (auto [t, p] : aug.rows[s])
                incoming[t] += p;
        }
        for (double w : incoming)
            CHECK(w > 0.0);
    }
}

TEST_CASE("deterministic rewards are re-indexed edge rewards") {
    Stream rng(8);
    const auto c = testsupport::random_chain(rng, 4, 1, 0.9);
    const auto aug = sat_chain(c);
    for (std::size_t s = 0; s < aug.num_states(); ++s) {
        const auto& st = aug.states[s];
        if (st.is_null)
            continue;
        bool found = false;
        for (const auto& o : c.rows[st.from])
            found = found || (o.next == st.to && o.rewards[0].value == aug.reward[s]);
        CHECK(found);
    }
}

TEST_CASE("reward-sequence prefixes have the same law on both chains") {
    Stream rng(31);
    for (int rep = 0; rep < 15; ++rep) {
        const std::size_t n = 1 + rng.below(3);
        const auto c = testsupport::random_chain(rng, n, 2, 0.8);
        const auto original = testsupport::prefix_law(c, 3);
        const auto lifted = testsupport::prefix_law(as_process(sat_chain(c)), 4);
        std::map<std::vector<double>, double> shifted;
        for (const auto& [seq, p] : lifted) {
            CHECK(seq.front() == 0.0);
            shifted[std::vector<double>(seq.begin() + 1, seq.end())] += p;
        }
        REQUIRE(shifted.size() == original.size());
        for (const auto& [seq, p] : original)
            CHECK(std::fabs(shifted[seq] - p) <= 1e-12);
    }
}

TEST_CASE("augmented return moments scale by gamma") {
    Stream rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        const double gamma = rng.uniform(0.5, 0.97);
        const auto c = testsupport::random_chain(rng, 1 + rng.below(5), 3, gamma);
        const auto oracle = testsupport::iterate_moments(c);
        const auto aug = chain_stats(sat_chain(c));
        CHECK(rel_err(aug.mean, gamma * oracle.mean) <= 1e-9);
        CHECK(rel_err(aug.variance, gamma * gamma * oracle.variance) <= 1e-9);
    }
}

TEST_CASE("augmented MDP policies induce the augmented chain of the original policy") {
    Stream rng(51);
    for (int rep = 0; rep < 10; ++rep) {
        const auto m = testsupport::random_mdp(rng, 3, 3, 2, 0.9);
        const auto aug = sat_transform_mdp(m);
        const PolicySpace space(m);
        const auto pi = space.at(rng.below(space.size()));
        const auto via_mdp = chain_stats(induce_augmented_chain(aug, lift_policy(pi, m, aug)));
        const auto direct = return_stats(induce_chain(m, pi));
        CHECK(rel_err(via_mdp.mean, m.gamma * direct.mean) <= 1e-9);
        CHECK(rel_err(via_mdp.variance, m.gamma * m.gamma * direct.variance) <= 1e-9);
    }
    CHECK(validate_mdp(sat_transform_mdp(chain_shaped()).to_mdp()).ok());
}
