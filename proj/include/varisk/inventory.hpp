#pragma once

#include "varisk/mdp.hpp"
#include "varisk/rng.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace varisk {

/// Parameters of the two-supplier inventory problem. Supplier U1 is near and
/// reliable; U2 is cheaper, delivers with a one-period lead time and is
/// available with probability beta1. Unmet demand units are independently
/// backlogged (prob. beta2, sold at p_r - c_b) or lost (cost c_l).
struct InventoryParams {
    int M = 3;            // warehouse capacity
    double gamma = 0.95;
    double p_r = 8.0;     // retail price
    double p_s = 1.0;     // compensation per unit ordered from an unavailable U2
    double c1 = 5.0;      // wholesale price, U1
    double c2 = 2.5;      // wholesale price, U2
    double c_b = 1.0;     // backlog discount
    double c_l = 5.5;     // lost-sale cost, always p_r - c2
    double c_f = 1.0;     // fixed cost per supplier ordered from
    double c_h = 1.0;     // holding cost per unit on hand
    std::vector<double> f_D; // demand pmf on {0, ..., 2M}
    double beta1 = 0.9;
    double beta2 = 0.5;
    double alpha = 0.95;  // VaR level
};

class InventoryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Throws InventoryError on any structural violation (pmf shape and sum,
/// probability ranges, c_l = p_r - c2, gamma, alpha).
void validate_params(const InventoryParams& p);

struct FeatureRange {
    std::string name;
    double lo;
    double hi;
};

/// Sampling box of every feature, in feature_vector() order.
std::vector<FeatureRange> feature_ranges(int M);

bool within_sampling_ranges(const InventoryParams& p);

struct InventoryState {
    int on_hand = 0;
    int in_transit = 0;
    bool operator==(const InventoryState&) const = default;
};

struct InventoryAction {
    int k1 = 0; // from U1, arrives immediately
    int k2 = 0; // from U2, arrives next epoch if U2 is available
    bool operator==(const InventoryAction&) const = default;
};

/// States (i, j) with i + j <= M, i outer.
std::vector<InventoryState> inventory_states(int M);

/// Orders with k1 + k2 <= M - i - j, k1 outer.
std::vector<InventoryAction> allowable_actions(InventoryState s, int M);

/// One-epoch reward for a fully specified outcome: demand d, `backlogged`
/// of the unmet units sold late, and whether U2 turned out unavailable.
double inventory_reward(const InventoryParams& p, InventoryState s, InventoryAction a, int demand,
                        int backlogged, bool u2_unavailable);

/// Builds the MDP: states from inventory_states(), actions from
/// allowable_actions(), initial law concentrated on (0, 0). Outcomes with
/// equal (next state, reward) are merged.
Mdp build_inventory_mdp(const InventoryParams& p);

/// Draws every feature uniformly on its sampling range; the demand pmf is
/// uniform on the simplex (normalized unit exponentials).
InventoryParams sample_params(Stream& rng, int M, double gamma);
InventoryParams sample_params(std::uint64_t seed, int M, double gamma);

/// [p_r, p_s, c1, c2, c_b, c_f, c_h, beta1, beta2, alpha, f_D(0..2M)]
std::vector<double> feature_vector(const InventoryParams& p);
std::size_t feature_count(int M);
InventoryParams params_from_features(std::span<const double> features, int M, double gamma);

nlohmann::json params_to_json(const InventoryParams& p);
InventoryParams params_from_json(const nlohmann::json& j);

} // namespace varisk
