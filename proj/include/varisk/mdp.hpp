#pragma once

#include "varisk/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace varisk {

using StateIndex = std::size_t;
using ActionIndex = std::size_t; // position within the state's own action list

/// One value of the immediate reward with its conditional probability.
struct RewardAtom {
    double value = 0.0;
    double prob = 0.0;
};

/// A successor state reached with probability `prob`; `rewards` is the reward
/// law conditional on the transition.
struct Outcome {
    StateIndex next = 0;
    double prob = 0.0;
    std::vector<RewardAtom> rewards;
};

/**
 * Finite MDP with a stochastic, transition-based reward.
 *
 * States and actions are dense indices; names live in side tables and are
 * only used for I/O. `kernel[x][a]` lists the positive-probability
 * successors of taking the a-th allowable action in state x. Instances are
 * plain values; call validate_mdp() before trusting one that came from
 * outside.
 */
struct Mdp {
    std::vector<std::string> state_names;
    std::vector<std::vector<std::string>> action_names;
    std::vector<std::vector<std::vector<Outcome>>> kernel;
    std::vector<double> initial;
    double gamma = 0.95;

    std::size_t num_states() const { return kernel.size(); }
    std::size_t num_actions(StateIndex x) const { return kernel[x].size(); }
    const std::vector<Outcome>& outcomes(StateIndex x, ActionIndex a) const { return kernel[x][a]; }
};

class MdpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PolicyMismatchError : public MdpError {
public:
    using MdpError::MdpError;
};

/// Sorted distinct reward values appearing with positive probability.
std::vector<double> reward_support(const Mdp& m);

/// Validation tolerance for probability sums.
inline constexpr double kProbabilitySlack = 1e-12;

struct Violation {
    std::string kind;
    std::optional<StateIndex> state;
    std::optional<ActionIndex> action;
    std::optional<StateIndex> next;
    std::optional<double> reward;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

/// Every invariant violation of `m`. Never throws.
ValidationReport validate_mdp(const Mdp& m);

/// Throws MdpError carrying the first violation when `m` is invalid.
void require_valid(const Mdp& m);

class DeterministicPolicy {
public:
    DeterministicPolicy() = default;
    DeterministicPolicy(std::vector<ActionIndex> actions, std::uint64_t index)
        : actions_(std::move(actions)), index_(index) {}

    ActionIndex action(StateIndex x) const { return actions_[x]; }
    std::span<const ActionIndex> actions() const { return actions_; }
    std::uint64_t canonical_index() const { return index_; }
    std::size_t size() const { return actions_.size(); }

    bool operator==(const DeterministicPolicy&) const = default;

private:
    std::vector<ActionIndex> actions_;
    std::uint64_t index_ = 0;
};

/**
 * The deterministic policy space in canonical order: lexicographic over the
 * state list, earlier states varying slowest, actions in construction order.
 * The canonical index of a policy is its mixed-radix value with digit
 * `action(x)` and radix `num_actions(x)`.
 */
class PolicySpace {
public:
    explicit PolicySpace(std::vector<std::size_t> action_counts);
    explicit PolicySpace(const Mdp& m);

    std::uint64_t size() const { return size_; }
    std::size_t num_states() const { return counts_.size(); }
    std::size_t num_actions(StateIndex x) const { return counts_[x]; }

    DeterministicPolicy at(std::uint64_t index) const;
    /// Throws PolicyMismatchError when an action is out of range.
    std::uint64_t index_of(std::span<const ActionIndex> actions) const;
    DeterministicPolicy make(std::vector<ActionIndex> actions) const;

private:
    std::vector<std::size_t> counts_;
    std::vector<std::uint64_t> strides_;
    std::uint64_t size_ = 1;
};

std::vector<DeterministicPolicy> enumerate_policies(const Mdp& m);

/// Markov reward process induced by a deterministic policy. Row x holds the
/// successors of x with their transition-conditional reward laws.
struct MarkovRewardProcess {
    std::vector<std::vector<Outcome>> rows;
    std::vector<double> initial;
    double gamma = 0.95;

    std::size_t num_states() const { return rows.size(); }
    Matrix transition_matrix() const;
    /// max |j| over rewards carried by positive-probability edges
    double max_abs_reward() const;
};

MarkovRewardProcess induce_chain(const Mdp& m, const DeterministicPolicy& pi);

/// Checks the chain invariants (row sums, reward-law sums, initial law).
ValidationReport validate_chain(const MarkovRewardProcess& c);

// JSON schema: {"states": [names], "actions": [[names per state]],
// "transitions": [[x, a, y, p]...], "rewards": [[x, a, y, value, prob]...],
// "initial": [mu...], "gamma": g}. x, y index "states"; a indexes actions[x].
nlohmann::json mdp_to_json(const Mdp& m);
Mdp mdp_from_json(const nlohmann::json& j);

} // namespace varisk
