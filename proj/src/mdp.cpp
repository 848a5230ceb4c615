#include "varisk/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace varisk {

std::vector<double> reward_support(const Mdp& m) {
    std::vector<double> values;
    for (const auto& by_action : m.kernel)
        for (const auto& outs : by_action)
            for (const auto& o : outs) {
                if (o.prob <= 0.0)
                    continue;
                for (const auto& r : o.rewards)
                    if (r.prob > 0.0)
                        values.push_back(r.value);
            }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

std::string ValidationReport::summary() const {
    if (ok())
        return "ok";
    std::ostringstream os;
    os << violations.size() << " violation(s); first: " << violations.front().kind << ": "
       << violations.front().message;
    return os.str();
}

namespace {

bool is_probability(double p) {
    return std::isfinite(p) && p >= 0.0 && p <= 1.0 + kProbabilitySlack;
}

std::string coords(StateIndex x, ActionIndex a) {
    return "(x=" + std::to_string(x) + ", a=" + std::to_string(a) + ")";
}

std::string coords(StateIndex x, ActionIndex a, StateIndex y) {
    return "(x=" + std::to_string(x) + ", a=" + std::to_string(a) + ", y=" + std::to_string(y) + ")";
}

void check_outcomes(const std::vector<Outcome>& outs, std::size_t n, StateIndex x,
                    std::optional<ActionIndex> a, std::vector<Violation>& out) {
    const ActionIndex ai = a.value_or(0);
    double row = 0.0;
    std::vector<StateIndex> seen;
    for (const auto& o : outs) {
        if (o.next >= n) {
            out.push_back({"successor out of range", x, a, o.next, std::nullopt,
                           "successor index out of range at " + coords(x, ai, o.next)});
            continue;
        }
        if (std::find(seen.begin(), seen.end(), o.next) != seen.end())
            out.push_back({"duplicate successor", x, a, o.next, std::nullopt,
                           "successor listed twice at " + coords(x, ai, o.next)});
        seen.push_back(o.next);
        if (!is_probability(o.prob)) {
            out.push_back({"probability out of range", x, a, o.next, std::nullopt,
                           "transition probability " + std::to_string(o.prob) + " at " +
                               coords(x, ai, o.next)});
            continue;
        }
        row += o.prob;
        if (o.prob == 0.0)
            continue;
        double law = 0.0;
        for (const auto& r : o.rewards) {
            if (!std::isfinite(r.value))
                out.push_back({"reward not finite", x, a, o.next, r.value,
                               "non-finite reward value at " + coords(x, ai, o.next)});
            if (!is_probability(r.prob)) {
                out.push_back({"probability out of range", x, a, o.next, r.value,
                               "reward probability " + std::to_string(r.prob) + " at " +
                                   coords(x, ai, o.next)});
                continue;
            }
            law += r.prob;
        }
        if (std::abs(law - 1.0) > kProbabilitySlack)
            out.push_back({"reward law", x, a, o.next, std::nullopt,
                           "reward probabilities sum to " + std::to_string(law) + " at " +
                               coords(x, ai, o.next)});
    }
    if (std::abs(row - 1.0) > kProbabilitySlack)
        out.push_back({"transition row", x, a, std::nullopt, std::nullopt,
                       "transition row " + coords(x, ai) + " sums to " + std::to_string(row)});
}

void check_initial(std::span<const double> initial, std::size_t n, double gamma,
                   std::vector<Violation>& out) {
    if (initial.size() != n) {
        out.push_back({"initial distribution", std::nullopt, std::nullopt, std::nullopt,
                       std::nullopt,
                       "initial distribution has " + std::to_string(initial.size()) +
                           " entries for " + std::to_string(n) + " states"});
    } else {
        double total = 0.0;
        for (std::size_t x = 0; x < n; ++x) {
            if (!is_probability(initial[x])) {
                out.push_back({"probability out of range", x, std::nullopt, std::nullopt,
                               std::nullopt,
                               "initial probability " + std::to_string(initial[x]) +
                                   " at x=" + std::to_string(x)});
                continue;
            }
            total += initial[x];
        }
        if (std::abs(total - 1.0) > kProbabilitySlack)
            out.push_back({"initial distribution", std::nullopt, std::nullopt, std::nullopt,
                           std::nullopt, "initial distribution sums to " + std::to_string(total)});
    }
    if (!(gamma > 0.0 && gamma < 1.0))
        out.push_back({"discount", std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                       "discount " + std::to_string(gamma) + " outside (0,1)"});
}

} // namespace

ValidationReport validate_mdp(const Mdp& m) {
    ValidationReport report;
    auto& out = report.violations;
    const std::size_t n = m.num_states();
    if (n == 0)
        out.push_back({"empty", std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                       "MDP has no states"});
    if (!m.state_names.empty() && m.state_names.size() != n)
        out.push_back({"names", std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                       "state name table does not match the state count"});

    for (StateIndex x = 0; x < n; ++x) {
        if (m.kernel[x].empty())
            out.push_back({"no actions", x, std::nullopt, std::nullopt, std::nullopt,
                           "state " + std::to_string(x) + " has no allowable action"});
        for (ActionIndex a = 0; a < m.kernel[x].size(); ++a)
            check_outcomes(m.kernel[x][a], n, x, a, out);
    }
    check_initial(m.initial, n, m.gamma, out);
    return report;
}

void require_valid(const Mdp& m) {
    const auto report = validate_mdp(m);
    if (!report.ok())
        throw MdpError("invalid MDP: " + report.summary());
}

ValidationReport validate_chain(const MarkovRewardProcess& c) {
    ValidationReport report;
    const std::size_t n = c.num_states();
    for (StateIndex x = 0; x < n; ++x)
        check_outcomes(c.rows[x], n, x, std::nullopt, report.violations);
    check_initial(c.initial, n, c.gamma, report.violations);
    return report;
}

PolicySpace::PolicySpace(std::vector<std::size_t> action_counts)
    : counts_(std::move(action_counts)), strides_(counts_.size()) {
    std::uint64_t stride = 1;
    for (std::size_t x = counts_.size(); x-- > 0;) {
        if (counts_[x] == 0)
            throw MdpError("policy space: state " + std::to_string(x) + " has no actions");
        strides_[x] = stride;
        if (stride > std::numeric_limits<std::uint64_t>::max() / counts_[x])
            throw MdpError("policy space: too many deterministic policies to index");
        stride *= counts_[x];
    }
    size_ = stride;
}

namespace {
std::vector<std::size_t> action_counts(const Mdp& m) {
    std::vector<std::size_t> counts(m.num_states());
    for (StateIndex x = 0; x < m.num_states(); ++x)
        counts[x] = m.num_actions(x);
    return counts;
}
} // namespace

PolicySpace::PolicySpace(const Mdp& m) : PolicySpace(action_counts(m)) {}

DeterministicPolicy PolicySpace::at(std::uint64_t index) const {
    if (index >= size_)
        throw PolicyMismatchError("policy index " + std::to_string(index) + " out of range");
    std::vector<ActionIndex> actions(counts_.size());
    std::uint64_t rest = index;
    for (std::size_t x = 0; x < counts_.size(); ++x) {
        actions[x] = rest / strides_[x];
        rest %= strides_[x];
    }
    return {std::move(actions), index};
}

std::uint64_t PolicySpace::index_of(std::span<const ActionIndex> actions) const {
    if (actions.size() != counts_.size())
        throw PolicyMismatchError("policy covers " + std::to_string(actions.size()) +
                                  " states, model has " + std::to_string(counts_.size()));
    std::uint64_t index = 0;
    for (std::size_t x = 0; x < counts_.size(); ++x) {
        if (actions[x] >= counts_[x])
            throw PolicyMismatchError("action " + std::to_string(actions[x]) +
                                      " not allowable in state " + std::to_string(x));
        index += actions[x] * strides_[x];
    }
    return index;
}

DeterministicPolicy PolicySpace::make(std::vector<ActionIndex> actions) const {
    const auto index = index_of(actions);
    return {std::move(actions), index};
}

std::vector<DeterministicPolicy> enumerate_policies(const Mdp& m) {
    const PolicySpace space(m);
    std::vector<DeterministicPolicy> out;
    out.reserve(space.size());
    for (std::uint64_t i = 0; i < space.size(); ++i)
        out.push_back(space.at(i));
    return out;
}

Matrix MarkovRewardProcess::transition_matrix() const {
    Matrix p(num_states(), num_states());
    for (StateIndex x = 0; x < num_states(); ++x)
        for (const auto& o : rows[x])
            p(x, o.next) += o.prob;
    return p;
}

double MarkovRewardProcess::max_abs_reward() const {
    double r = 0.0;
    for (const auto& row : rows)
        for (const auto& o : row) {
            if (o.prob <= 0.0)
                continue;
            for (const auto& atom : o.rewards)
                if (atom.prob > 0.0)
                    r = std::max(r, std::abs(atom.value));
        }
    return r;
}

MarkovRewardProcess induce_chain(const Mdp& m, const DeterministicPolicy& pi) {
    if (pi.size() != m.num_states())
        throw PolicyMismatchError("policy covers " + std::to_string(pi.size()) +
                                  " states, model has " + std::to_string(m.num_states()));
    MarkovRewardProcess c;
    c.rows.resize(m.num_states());
    for (StateIndex x = 0; x < m.num_states(); ++x) {
        if (pi.action(x) >= m.num_actions(x))
            throw PolicyMismatchError("action " + std::to_string(pi.action(x)) +
                                      " not allowable in state " + std::to_string(x));
        c.rows[x] = m.outcomes(x, pi.action(x));
    }
    c.initial = m.initial;
    c.gamma = m.gamma;
    return c;
}

nlohmann::json mdp_to_json(const Mdp& m) {
    using nlohmann::json;
    json j;
    json states = json::array();
    json actions = json::array();
    for (StateIndex x = 0; x < m.num_states(); ++x) {
        states.push_back(x < m.state_names.size() ? m.state_names[x] : std::to_string(x));
        json names = json::array();
        for (ActionIndex a = 0; a < m.num_actions(x); ++a) {
            const bool named = x < m.action_names.size() && a < m.action_names[x].size();
            names.push_back(named ? m.action_names[x][a] : std::to_string(a));
        }
        actions.push_back(std::move(names));
    }
    json transitions = json::array();
    json rewards = json::array();
    for (StateIndex x = 0; x < m.num_states(); ++x)
        for (ActionIndex a = 0; a < m.num_actions(x); ++a)
            for (const auto& o : m.outcomes(x, a)) {
                transitions.push_back({x, a, o.next, o.prob});
                for (const auto& r : o.rewards)
                    rewards.push_back({x, a, o.next, r.value, r.prob});
            }
    j["states"] = std::move(states);
    j["actions"] = std::move(actions);
    j["transitions"] = std::move(transitions);
    j["rewards"] = std::move(rewards);
    j["initial"] = m.initial;
    j["gamma"] = m.gamma;
    return j;
}

Mdp mdp_from_json(const nlohmann::json& j) {
    try {
        Mdp m;
        m.state_names = j.at("states").get<std::vector<std::string>>();
        const auto& actions = j.at("actions");
        if (actions.size() != m.state_names.size())
            throw MdpError("'actions' must list one action array per state");
        const std::size_t n = m.state_names.size();
        m.kernel.resize(n);
        for (StateIndex x = 0; x < n; ++x) {
            m.action_names.push_back(actions[x].get<std::vector<std::string>>());
            m.kernel[x].resize(m.action_names.back().size());
        }

        auto locate = [&](std::size_t x, std::size_t a) -> std::vector<Outcome>& {
            if (x >= n || a >= m.kernel[x].size())
                throw MdpError("triple references unknown state/action (" + std::to_string(x) +
                               ", " + std::to_string(a) + ")");
            return m.kernel[x][a];
        };

        for (const auto& t : j.at("transitions")) {
            const auto x = t.at(0).get<std::size_t>();
            const auto a = t.at(1).get<std::size_t>();
            const auto y = t.at(2).get<std::size_t>();
            auto& outs = locate(x, a);
            for (const auto& o : outs)
                if (o.next == y)
                    throw MdpError("duplicate transition triple " + coords(x, a, y));
            outs.push_back({y, t.at(3).get<double>(), {}});
        }

        for (const auto& r : j.at("rewards")) {
            const auto x = r.at(0).get<std::size_t>();
            const auto a = r.at(1).get<std::size_t>();
            const auto y = r.at(2).get<std::size_t>();
            const auto value = r.at(3).get<double>();
            const auto prob = r.at(4).get<double>();
            auto& outs = locate(x, a);
            auto it = std::find_if(outs.begin(), outs.end(),
                                   [y](const Outcome& o) { return o.next == y; });
            if (it == outs.end())
                throw MdpError("reward entry without transition " + coords(x, a, y));
            // duplicate values merge by summing mass
            auto atom = std::find_if(it->rewards.begin(), it->rewards.end(),
                                     [value](const RewardAtom& ra) { return ra.value == value; });
            if (atom != it->rewards.end())
                atom->prob += prob;
            else
                it->rewards.push_back({value, prob});
        }

        m.initial = j.at("initial").get<std::vector<double>>();
        m.gamma = j.at("gamma").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw MdpError(std::string("malformed MDP JSON: ") + e.what());
    }
}

} // namespace varisk
