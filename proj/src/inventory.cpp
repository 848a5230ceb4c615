#include "varisk/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace varisk {

namespace {

bool in_unit(double x) {
    return std::isfinite(x) && x >= 0.0 && x <= 1.0;
}

std::size_t state_index(InventoryState s, int M) {
    // rows i = 0..on_hand-1 contribute (M - i + 1) states each
    std::size_t idx = 0;
    for (int i = 0; i < s.on_hand; ++i)
        idx += static_cast<std::size_t>(M - i + 1);
    return idx + static_cast<std::size_t>(s.in_transit);
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i)
        c = c * (n - k + i) / i;
    return c;
}

} // namespace

void validate_params(const InventoryParams& p) {
    if (p.M < 1)
        throw InventoryError("capacity M must be at least 1");
    if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw InventoryError("gamma must lie in (0,1)");
    for (double v : {p.p_r, p.p_s, p.c1, p.c2, p.c_b, p.c_l, p.c_f, p.c_h})
        if (!std::isfinite(v))
            throw InventoryError("prices and costs must be finite");
    if (p.c_l != p.p_r - p.c2)
        throw InventoryError("lost-sale cost must equal p_r - c2");
    if (!in_unit(p.beta1) || !in_unit(p.beta2))
        throw InventoryError("beta1 and beta2 must lie in [0,1]");
    if (!(p.alpha > 0.0 && p.alpha < 1.0))
        throw InventoryError("alpha must lie in (0,1)");
    if (p.f_D.size() != static_cast<std::size_t>(2 * p.M + 1))
        throw InventoryError("demand pmf must have 2M+1 entries");
    double total = 0.0;
    for (double f : p.f_D) {
        if (!in_unit(f))
            throw InventoryError("demand probabilities must lie in [0,1]");
        total += f;
    }
    if (std::abs(total - 1.0) > kProbabilitySlack)
        throw InventoryError("demand pmf must sum to 1");
}

std::vector<FeatureRange> feature_ranges(int M) {
    std::vector<FeatureRange> r{{"p_r", 6.0, 10.0}, {"p_s", 0.0, 2.0}, {"c1", 4.0, 6.0},
                                {"c2", 1.0, 4.0},   {"c_b", 0.0, 2.0}, {"c_f", 0.0, 2.0},
                                {"c_h", 0.0, 2.0},  {"beta1", 0.8, 1.0}, {"beta2", 0.0, 1.0},
                                {"alpha", 0.0, 1.0}};
    for (int d = 0; d <= 2 * M; ++d)
        r.push_back({"d" + std::to_string(d), 0.0, 1.0});
    return r;
}

bool within_sampling_ranges(const InventoryParams& p) {
    const auto f = feature_vector(p);
    const auto r = feature_ranges(p.M);
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!(f[i] >= r[i].lo && f[i] <= r[i].hi))
            return false;
    return p.alpha > 0.0 && p.alpha < 1.0;
}

std::vector<InventoryState> inventory_states(int M) {
    std::vector<InventoryState> s;
    for (int i = 0; i <= M; ++i)
        for (int j = 0; i + j <= M; ++j)
            s.push_back({i, j});
    return s;
}

std::vector<InventoryAction> allowable_actions(InventoryState s, int M) {
    const int room = M - s.on_hand - s.in_transit;
    std::vector<InventoryAction> a;
    for (int k1 = 0; k1 <= room; ++k1)
        for (int k2 = 0; k1 + k2 <= room; ++k2)
            a.push_back({k1, k2});
    return a;
}

double inventory_reward(const InventoryParams& p, InventoryState s, InventoryAction a, int demand,
                        int backlogged, bool u2_unavailable) {
    const int stock = s.on_hand + s.in_transit + a.k1;
    const int unmet = std::max(0, demand - stock);
    const int sold = demand - unmet;
    const int fixed = (a.k1 > 0 ? 1 : 0) + (a.k2 > 0 ? 1 : 0);
    double r = p.p_r * sold + (p.p_r - p.c_b) * backlogged - p.c_l * (unmet - backlogged) -
               p.c_f * fixed - (p.c1 * a.k1 + p.c2 * a.k2) - p.c_h * s.on_hand;
    if (u2_unavailable)
        r += p.p_s * a.k2;
    return r;
}

Mdp build_inventory_mdp(const InventoryParams& p) {
    validate_params(p);
    const auto states = inventory_states(p.M);
    Mdp m;
    m.gamma = p.gamma;
    m.initial.assign(states.size(), 0.0);
    m.initial[state_index({0, 0}, p.M)] = 1.0;
    m.kernel.resize(states.size());

    for (std::size_t x = 0; x < states.size(); ++x) {
        const InventoryState s = states[x];
        m.state_names.push_back("(" + std::to_string(s.on_hand) + "," +
                                std::to_string(s.in_transit) + ")");
        std::vector<std::string> names;
        for (const InventoryAction a : allowable_actions(s, p.M)) {
            names.push_back("(" + std::to_string(a.k1) + "," + std::to_string(a.k2) + ")");

            // (next state) -> (reward value -> mass)
            std::map<std::size_t, std::map<double, double>> mass;
            const int stock = s.on_hand + s.in_transit + a.k1;
            struct Branch {
                double prob;
                bool unavailable;
            };
            std::vector<Branch> branches;
            if (a.k2 == 0)
                branches.push_back({1.0, false});
            else
                branches = {{p.beta1, false}, {1.0 - p.beta1, true}};

            for (int d = 0; d <= 2 * p.M; ++d) {
                const double fd = p.f_D[d];
                if (fd <= 0.0)
                    continue;
                const int unmet = std::max(0, d - stock);
                const int left = std::max(0, stock - d);
                for (const auto& br : branches) {
                    if (br.prob <= 0.0)
                        continue;
                    const int next_j = br.unavailable ? 0 : a.k2;
                    const std::size_t y = state_index({left, next_j}, p.M);
                    for (int b = 0; b <= unmet; ++b) {
                        const double pb = binomial(unmet, b) * std::pow(p.beta2, b) *
                                          std::pow(1.0 - p.beta2, unmet - b);
                        const double pr = fd * br.prob * pb;
                        if (pr <= 0.0)
                            continue;
                        const double r = inventory_reward(p, s, a, d, b, br.unavailable) + 0.0;
                        mass[y][r] += pr;
                    }
                }
            }

            std::vector<Outcome> outs;
            for (const auto& [y, by_reward] : mass) {
                Outcome o{y, 0.0, {}};
                for (const auto& [r, pr] : by_reward)
                    o.prob += pr;
                for (const auto& [r, pr] : by_reward)
                    o.rewards.push_back({r, pr / o.prob});
                outs.push_back(std::move(o));
            }
            m.kernel[x].push_back(std::move(outs));
        }
        m.action_names.push_back(std::move(names));
    }
    return m;
}

InventoryParams sample_params(Stream& rng, int M, double gamma) {
    InventoryParams p;
    p.M = M;
    p.gamma = gamma;
    p.p_r = rng.uniform(6.0, 10.0);
    p.p_s = rng.uniform(0.0, 2.0);
    p.c1 = rng.uniform(4.0, 6.0);
    p.c2 = rng.uniform(1.0, 4.0);
    p.c_b = rng.uniform(0.0, 2.0);
    p.c_f = rng.uniform(0.0, 2.0);
    p.c_h = rng.uniform(0.0, 2.0);
    p.beta1 = rng.uniform(0.8, 1.0);
    p.beta2 = rng.uniform(0.0, 1.0);
    p.alpha = rng.uniform_open();
    p.c_l = p.p_r - p.c2;

    p.f_D.resize(2 * M + 1);
    double total = 0.0;
    for (double& f : p.f_D) {
        f = rng.exponential();
        total += f;
    }
    for (double& f : p.f_D)
        f /= total;
    return p;
}

InventoryParams sample_params(std::uint64_t seed, int M, double gamma) {
    Stream rng(seed);
    return sample_params(rng, M, gamma);
}

std::size_t feature_count(int M) {
    return 10 + static_cast<std::size_t>(2 * M + 1);
}

std::vector<double> feature_vector(const InventoryParams& p) {
    std::vector<double> f{p.p_r, p.p_s,   p.c1,    p.c2,    p.c_b,
                          p.c_f, p.c_h,   p.beta1, p.beta2, p.alpha};
    f.insert(f.end(), p.f_D.begin(), p.f_D.end());
    return f;
}

InventoryParams params_from_features(std::span<const double> f, int M, double gamma) {
    if (f.size() != feature_count(M))
        throw InventoryError("feature vector has " + std::to_string(f.size()) + " entries, expected " +
                             std::to_string(feature_count(M)));
    InventoryParams p;
    p.M = M;
    p.gamma = gamma;
    p.p_r = f[0];
    p.p_s = f[1];
    p.c1 = f[2];
    p.c2 = f[3];
    p.c_b = f[4];
    p.c_f = f[5];
    p.c_h = f[6];
    p.beta1 = f[7];
    p.beta2 = f[8];
    p.alpha = f[9];
    p.f_D.assign(f.begin() + 10, f.end());
    p.c_l = p.p_r - p.c2;
    return p;
}

nlohmann::json params_to_json(const InventoryParams& p) {
    return {{"M", p.M},         {"gamma", p.gamma}, {"p_r", p.p_r},     {"p_s", p.p_s},
            {"c1", p.c1},       {"c2", p.c2},       {"c_b", p.c_b},     {"c_l", p.c_l},
            {"c_f", p.c_f},     {"c_h", p.c_h},     {"f_D", p.f_D},     {"beta1", p.beta1},
            {"beta2", p.beta2}, {"alpha", p.alpha}};
}

InventoryParams params_from_json(const nlohmann::json& j) {
    try {
        InventoryParams p;
        p.M = j.at("M").get<int>();
        p.gamma = j.value("gamma", 0.95);
        p.p_r = j.at("p_r").get<double>();
        p.p_s = j.at("p_s").get<double>();
        p.c1 = j.at("c1").get<double>();
        p.c2 = j.at("c2").get<double>();
        p.c_b = j.at("c_b").get<double>();
        p.c_f = j.at("c_f").get<double>();
        p.c_h = j.at("c_h").get<double>();
        p.f_D = j.at("f_D").get<std::vector<double>>();
        p.beta1 = j.at("beta1").get<double>();
        p.beta2 = j.at("beta2").get<double>();
        p.alpha = j.value("alpha", 0.95);
        p.c_l = p.p_r - p.c2;
        validate_params(p);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw InventoryError(std::string("malformed inventory parameters: ") + e.what());
    }
}

} // namespace varisk
