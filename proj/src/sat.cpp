#include "varisk/sat.hpp"

#include <deque>
#include <map>
#include <tuple>

namespace varisk {

namespace {

using QuadKey = std::tuple<bool, StateIndex, ActionIndex, StateIndex, double>;

// Interns augmented states in discovery order; -0.0 and 0.0 share a key.
class StateTable {
public:
    std::size_t intern(const AugmentedState& s, bool& fresh) {
        const QuadKey key{s.is_null, s.from, s.action, s.to, s.reward + 0.0};
        auto [it, inserted] = index_.try_emplace(key, states.size());
        fresh = inserted;
        if (inserted)
            states.push_back(s);
        return it->second;
    }

    std::vector<AugmentedState> states;

private:
    std::map<QuadKey, std::size_t> index_;
};

} // namespace

AugmentedMdp sat_transform_mdp(const Mdp& m) {
    require_valid(m);
    AugmentedMdp aug;
    aug.gamma = m.gamma;

    StateTable table;
    std::vector<std::size_t> null_index(m.num_states(), SIZE_MAX);
    std::deque<std::size_t> frontier;
    for (StateIndex x = 0; x < m.num_states(); ++x) {
        if (m.initial[x] <= 0.0)
            continue;
        bool fresh = false;
        null_index[x] = table.intern(AugmentedState::null_of(x), fresh);
        frontier.push_back(null_index[x]);
    }

    // p(y+ | s, a_y) = p(z | y, a_y) d(j | y, a_y, z), identical for s_null,y
    // and every quadruple ending in y.
    std::vector<std::vector<SparseRow>> kernel;
    while (!frontier.empty()) {
        const std::size_t s = frontier.front();
        frontier.pop_front();
        const StateIndex y = table.states[s].anchor();
        std::vector<SparseRow> rows(m.num_actions(y));
        for (ActionIndex a = 0; a < m.num_actions(y); ++a) {
            for (const auto& o : m.outcomes(y, a)) {
                if (o.prob <= 0.0)
                    continue;
                for (const auto& r : o.rewards) {
                    const double mass = o.prob * r.prob;
                    if (mass <= 0.0)
                        continue;
                    bool fresh = false;
                    const std::size_t t = table.intern({false, y, a, o.next, r.value}, fresh);
                    if (fresh)
                        frontier.push_back(t);
                    rows[a].emplace_back(t, mass);
                }
            }
        }
        if (kernel.size() <= s)
            kernel.resize(s + 1);
        kernel[s] = std::move(rows);
    }

    aug.states = std::move(table.states);
    aug.kernel = std::move(kernel);
    aug.kernel.resize(aug.states.size());
    aug.reward.resize(aug.states.size());
    aug.initial.assign(aug.states.size(), 0.0);
    for (std::size_t s = 0; s < aug.states.size(); ++s)
        aug.reward[s] = aug.states[s].is_null ? 0.0 : aug.states[s].reward;
    for (StateIndex x = 0; x < m.num_states(); ++x)
        if (null_index[x] != SIZE_MAX)
            aug.initial[null_index[x]] = m.initial[x];
    return aug;
}

Mdp AugmentedMdp::to_mdp() const {
    Mdp m;
    m.gamma = gamma;
    m.initial = initial;
    m.kernel.resize(num_states());
    for (std::size_t s = 0; s < num_states(); ++s) {
        const auto& st = states[s];
        m.state_names.push_back(st.is_null ? "null(" + std::to_string(st.from) + ")"
                                           : "(" + std::to_string(st.from) + "," +
                                                 std::to_string(st.action) + "," +
                                                 std::to_string(st.to) + "," +
                                                 std::to_string(st.reward) + ")");
        std::vector<std::string> names;
        for (ActionIndex a = 0; a < kernel[s].size(); ++a) {
            names.push_back(std::to_string(a));
            std::vector<Outcome> outs;
            for (const auto& [t, p] : kernel[s][a])
                outs.push_back({t, p, {{reward[s], 1.0}}});
            m.kernel[s].push_back(std::move(outs));
        }
        m.action_names.push_back(std::move(names));
    }
    return m;
}

LiftedPolicy lift_policy(const DeterministicPolicy& pi, const Mdp& m, const AugmentedMdp& aug) {
    if (pi.size() != m.num_states())
        throw PolicyMismatchError("policy does not match the original MDP");
    LiftedPolicy lifted;
    lifted.actions.reserve(aug.num_states());
    for (const auto& s : aug.states) {
        const StateIndex anchor = s.anchor();
        if (anchor >= m.num_states() || (!s.is_null && s.from >= m.num_states()))
            throw PolicyMismatchError("augmented state references an unknown original state");
        if (pi.action(anchor) >= m.num_actions(anchor))
            throw PolicyMismatchError("policy action not allowable in state " +
                                      std::to_string(anchor));
        lifted.actions.push_back(pi.action(anchor));
    }
    return lifted;
}

Matrix AugmentedChain::transition_matrix() const {
    Matrix p(num_states(), num_states());
    for (std::size_t s = 0; s < num_states(); ++s)
        for (const auto& [t, prob] : rows[s])
            p(s, t) += prob;
    return p;
}

AugmentedChain sat_chain(const MarkovRewardProcess& mrp) {
    AugmentedChain chain;
    chain.gamma = mrp.gamma;

    StateTable table;
    std::deque<std::size_t> frontier;
    std::vector<std::pair<std::size_t, double>> starts;
    for (StateIndex x = 0; x < mrp.num_states(); ++x) {
        if (mrp.initial[x] <= 0.0)
            continue;
        bool fresh = false;
        const std::size_t s = table.intern(AugmentedState::null_of(x), fresh);
        frontier.push_back(s);
        starts.emplace_back(s, mrp.initial[x]);
    }

    std::vector<SparseRow> rows;
    while (!frontier.empty()) {
        const std::size_t s = frontier.front();
        frontier.pop_front();
        const StateIndex y = table.states[s].anchor();
        SparseRow row;
        for (const auto& o : mrp.rows[y]) {
            if (o.prob <= 0.0)
                continue;
            for (const auto& r : o.rewards) {
                const double mass = o.prob * r.prob;
                if (mass <= 0.0)
                    continue;
                bool fresh = false;
                const std::size_t t =
                    table.intern({false, y, AugmentedState::kNoAction, o.next, r.value}, fresh);
                if (fresh)
                    frontier.push_back(t);
                row.emplace_back(t, mass);
            }
        }
        if (rows.size() <= s)
            rows.resize(s + 1);
        rows[s] = std::move(row);
    }

    chain.states = std::move(table.states);
    chain.rows = std::move(rows);
    chain.rows.resize(chain.states.size());
    chain.reward.resize(chain.states.size());
    chain.initial.assign(chain.states.size(), 0.0);
    for (std::size_t s = 0; s < chain.states.size(); ++s)
        chain.reward[s] = chain.states[s].is_null ? 0.0 : chain.states[s].reward;
    for (const auto& [s, p] : starts)
        chain.initial[s] = p;
    return chain;
}

AugmentedChain induce_augmented_chain(const AugmentedMdp& aug, const LiftedPolicy& lifted) {
    if (lifted.actions.size() != aug.num_states())
        throw PolicyMismatchError("lifted policy does not match the augmented MDP");
    AugmentedChain chain;
    chain.states = aug.states;
    chain.reward = aug.reward;
    chain.initial = aug.initial;
    chain.gamma = aug.gamma;
    chain.rows.resize(aug.num_states());
    for (std::size_t s = 0; s < aug.num_states(); ++s) {
        const ActionIndex a = lifted.actions[s];
        if (a >= aug.kernel[s].size())
            throw PolicyMismatchError("lifted action not allowable in augmented state " +
                                      std::to_string(s));
        chain.rows[s] = aug.kernel[s][a];
    }
    return chain;
}

} // namespace varisk
