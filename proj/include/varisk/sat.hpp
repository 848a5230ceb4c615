#pragma once

#include "varisk/mdp.hpp"

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace varisk {

/**
 * State of the augmented model. A quadruple (x, a, y, reward) records the
 * transition that was just taken and the reward it produced; a null state
 * s_null,x stands in front of the first transition out of x.
 *
 * For augmented chains built from an induced Markov reward process there is
 * no action, and `action` is kNoAction.
 */
struct AugmentedState {
    static constexpr ActionIndex kNoAction = std::numeric_limits<ActionIndex>::max();

    bool is_null = false;
    StateIndex from = 0;
    ActionIndex action = kNoAction;
    StateIndex to = 0;
    double reward = 0.0;

    static AugmentedState null_of(StateIndex x) { return {true, x, kNoAction, x, 0.0}; }

    /// Original state whose allowable actions apply here: y for a quadruple,
    /// x for s_null,x.
    StateIndex anchor() const { return is_null ? from : to; }

    bool operator==(const AugmentedState&) const = default;
};

using SparseRow = std::vector<std::pair<std::size_t, double>>;

/// Augmented MDP with a deterministic state-based reward. The allowable
/// actions of augmented state s are those of its anchor state in the
/// original MDP, with the same indices.
struct AugmentedMdp {
    std::vector<AugmentedState> states;
    std::vector<std::vector<SparseRow>> kernel; // kernel[s][a]
    std::vector<double> reward;
    std::vector<double> initial;
    double gamma = 0.95;

    std::size_t num_states() const { return states.size(); }

    /// Re-expresses the augmented model in the plain Mdp schema (each
    /// transition out of s carries reward r(s) with probability one), for
    /// JSON dumps.
    Mdp to_mdp() const;
};

/// SAT applied to a whole MDP: the reachable quadruples over every action.
AugmentedMdp sat_transform_mdp(const Mdp& m);

/// Lifted policy: the action to take in each augmented state.
struct LiftedPolicy {
    std::vector<ActionIndex> actions;
};

LiftedPolicy lift_policy(const DeterministicPolicy& pi, const Mdp& m, const AugmentedMdp& aug);

/// Markov chain with deterministic state-based reward.
struct AugmentedChain {
    std::vector<AugmentedState> states;
    std::vector<SparseRow> rows;
    std::vector<double> reward;
    std::vector<double> initial;
    double gamma = 0.95;

    std::size_t num_states() const { return states.size(); }
    Matrix transition_matrix() const;
};

/// SAT applied to an induced chain. States are the null states of the
/// initial support followed by the reachable (x, y, reward) triples in
/// breadth-first discovery order.
AugmentedChain sat_chain(const MarkovRewardProcess& mrp);

/// Chain induced on an augmented MDP by a lifted policy.
AugmentedChain induce_augmented_chain(const AugmentedMdp& aug, const LiftedPolicy& lifted);

} // namespace varisk
