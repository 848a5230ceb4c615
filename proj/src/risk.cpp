#include "varisk/risk.hpp"

#include "varisk/normal.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <omp.h>

namespace varisk {

namespace {

Matrix discounted_system(const Matrix& transition, double discount) {
    const std::size_t n = transition.rows();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = -discount * transition(i, j);
        a(i, i) += 1.0;
    }
    return a;
}

std::vector<double> solve_checked(const Matrix& a, std::span<const double> b, const char* what) {
    std::vector<double> x;
    try {
        x = solve_dense(a, b, 1e-12);
    } catch (const SolverError& e) {
        throw NumericalError(std::string(what) + ": " + e.what());
    }
    if (residual_inf(a, x, b) > kSolveTolerance * (1.0 + norm_inf(x)))
        throw NumericalError(std::string(what) + ": residual above tolerance");
    return x;
}

void check_square(const Matrix& transition, std::size_t n, double gamma) {
    if (transition.rows() != transition.cols() || transition.rows() != n)
        throw std::invalid_argument("moment solve: dimension mismatch");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("moment solve: discount outside (0,1)");
}

std::vector<double> solve_variance_theta(const Matrix& transition, std::span<const double> theta,
                                         double gamma) {
    auto psi = solve_checked(discounted_system(transition, gamma * gamma), theta, "solve_variance");
    for (double& x : psi)
        x = clamp_variance(x);
    return psi;
}

// Mixes conditional moments over an initial law:
// E = sum mu v, V = sum mu psi + sum mu (v - E)^2.
MeanVariance mix(std::span<const double> initial, std::span<const double> v,
                 std::span<const double> psi) {
    double mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        mean += initial[i] * v[i];
    double var = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - mean;
        var += initial[i] * (psi[i] + d * d);
    }
    return {mean, clamp_variance(var)};
}

// States reachable from the initial support, ascending. The set is closed
// under the chain, so restricting the moment systems to it is exact.
std::vector<StateIndex> reachable_states(const MarkovRewardProcess& mrp) {
    const std::size_t n = mrp.num_states();
    std::vector<char> seen(n, 0);
    std::vector<StateIndex> stack;
    for (StateIndex x = 0; x < n; ++x)
        if (mrp.initial[x] > 0.0) {
            seen[x] = 1;
            stack.push_back(x);
        }
    while (!stack.empty()) {
        const StateIndex x = stack.back();
        stack.pop_back();
        for (const auto& o : mrp.rows[x])
            if (o.prob > 0.0 && !seen[o.next]) {
                seen[o.next] = 1;
                stack.push_back(o.next);
            }
    }
    std::vector<StateIndex> out;
    for (StateIndex x = 0; x < n; ++x)
        if (seen[x])
            out.push_back(x);
    return out;
}

MomentPair direct_stats(const MarkovRewardProcess& mrp) {
    const auto reach = reachable_states(mrp);
    const std::size_t k = reach.size();
    std::vector<std::size_t> local(mrp.num_states(), SIZE_MAX);
    for (std::size_t i = 0; i < k; ++i)
        local[reach[i]] = i;

    Matrix p(k, k);
    std::vector<double> expected_reward(k, 0.0);
    std::vector<double> initial(k);
    for (std::size_t i = 0; i < k; ++i) {
        const StateIndex x = reach[i];
        initial[i] = mrp.initial[x];
        for (const auto& o : mrp.rows[x]) {
            if (o.prob <= 0.0)
                continue;
            p(i, local[o.next]) += o.prob;
            for (const auto& r : o.rewards)
                expected_reward[i] += o.prob * r.prob * r.value;
        }
    }

    const auto v = solve_mean(p, expected_reward, mrp.gamma);

    // theta_x = E[(R + gamma v_Y)^2 | x] - v_x^2, evaluated centred
    std::vector<double> theta(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const StateIndex x = reach[i];
        double acc = 0.0;
        for (const auto& o : mrp.rows[x]) {
            if (o.prob <= 0.0)
                continue;
            const double tail = mrp.gamma * v[local[o.next]] - v[i];
            for (const auto& r : o.rewards) {
                const double d = r.value + tail;
                acc += o.prob * r.prob * d * d;
            }
        }
        theta[i] = acc;
    }
    const auto psi = solve_variance_theta(p, theta, mrp.gamma);
    const auto law = mix(initial, v, psi);

    MomentPair out;
    out.mean = law.mean;
    out.variance = law.variance;
    out.v.assign(mrp.num_states(), std::numeric_limits<double>::quiet_NaN());
    out.psi.assign(mrp.num_states(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < k; ++i) {
        out.v[reach[i]] = v[i];
        out.psi[reach[i]] = psi[i];
    }
    return out;
}

} // namespace

double clamp_variance(double variance) {
    if (std::isnan(variance))
        throw NumericalError("variance is NaN");
    if (variance < 0.0) {
        if (variance > -kVarianceSlack)
            return 0.0;
        throw NumericalError("negative variance " + std::to_string(variance));
    }
    return variance;
}

double MomentPair::sd() const {
    return std::sqrt(variance);
}

std::vector<double> solve_mean(const Matrix& transition, std::span<const double> reward,
                               double gamma) {
    check_square(transition, reward.size(), gamma);
    return solve_checked(discounted_system(transition, gamma), reward, "solve_mean");
}

std::vector<double> solve_variance(const Matrix& transition, std::span<const double> reward,
                                   double gamma, std::span<const double> mean) {
    check_square(transition, reward.size(), gamma);
    if (mean.size() != reward.size())
        throw std::invalid_argument("solve_variance: dimension mismatch");
    const std::size_t n = reward.size();
    std::vector<double> theta(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            const double p = transition(x, y);
            if (p == 0.0)
                continue;
            const double d = reward[x] + gamma * mean[y] - mean[x];
            acc += p * d * d;
        }
        theta[x] = acc;
    }
    return solve_variance_theta(transition, theta, gamma);
}

MomentPair chain_stats(const AugmentedChain& chain) {
    const Matrix p = chain.transition_matrix();
    MomentPair out;
    out.v = solve_mean(p, chain.reward, chain.gamma);
    out.psi = solve_variance(p, chain.reward, chain.gamma, out.v);
    const auto law = mix(chain.initial, out.v, out.psi);
    out.mean = law.mean;
    out.variance = law.variance;
    return out;
}

MomentPair return_stats(const MarkovRewardProcess& mrp, MomentMethod method) {
    const auto report = validate_chain(mrp);
    if (!report.ok())
        throw MdpError("invalid Markov reward process: " + report.summary());
    if (method == MomentMethod::direct)
        return direct_stats(mrp);

    // The augmented return starts with a zero reward at the null state, so it
    // equals gamma times the original return.
    MomentPair out = chain_stats(sat_chain(mrp));
    out.mean /= mrp.gamma;
    out.variance /= mrp.gamma * mrp.gamma;
    return out;
}

double risk_value(MeanVariance m, const Measure& measure) {
    if (m.variance < 0.0 || std::isnan(m.variance))
        throw std::invalid_argument("risk_value: variance must be nonnegative");
    const double sd = std::sqrt(m.variance);
    switch (measure.kind) {
    case Measure::Kind::exp_utility:
        return m.mean + 0.5 * measure.param * m.variance;
    case Measure::Kind::mean_sd:
        return m.mean - measure.param * sd;
    case Measure::Kind::mean:
        return m.mean;
    case Measure::Kind::var_threshold: {
        const double alpha = measure.param;
        if (!(alpha > 0.0 && alpha < 1.0))
            throw RiskSpecError("var_threshold: alpha must lie in (0,1)");
        if (sd == 0.0)
            return m.mean;
        return m.mean + sd * normal_quantile(1.0 - alpha);
    }
    case Measure::Kind::var_quantile: {
        const double tau = measure.param;
        if (sd == 0.0)
            return tau < m.mean ? 1.0 : 0.0;
        return 1.0 - normal_cdf((tau - m.mean) / sd);
    }
    }
    throw RiskSpecError("unknown measure");
}

bool satisfies(MeanVariance m, const Constraint& c) {
    switch (c.kind) {
    case Constraint::Kind::ratio_gt:
        if (m.variance > 0.0)
            return m.mean / m.variance > c.bound;
        return m.mean > 0.0;
    case Constraint::Kind::mean_gt:
        return m.mean > c.bound;
    case Constraint::Kind::variance_lt:
        return m.variance < c.bound;
    }
    return false;
}

void RiskSpec::validate() const {
    if (!std::isfinite(objective.param))
        throw RiskSpecError("objective parameter must be finite");
    if (objective.kind == Measure::Kind::var_threshold &&
        !(objective.param > 0.0 && objective.param < 1.0))
        throw RiskSpecError("var_threshold: alpha must lie in (0,1)");
    for (const auto& c : constraints)
        if (!std::isfinite(c.bound))
            throw RiskSpecError("constraint bound must be finite");
}

namespace {

const char* measure_name(Measure::Kind k) {
    switch (k) {
    case Measure::Kind::var_threshold: return "var_threshold";
    case Measure::Kind::var_quantile: return "var_quantile";
    case Measure::Kind::exp_utility: return "exp_utility";
    case Measure::Kind::mean_sd: return "mean_sd";
    case Measure::Kind::mean: return "mean";
    }
    return "?";
}

const char* measure_param(Measure::Kind k) {
    switch (k) {
    case Measure::Kind::var_threshold: return "alpha";
    case Measure::Kind::var_quantile: return "tau";
    case Measure::Kind::exp_utility: return "beta";
    case Measure::Kind::mean_sd: return "k";
    case Measure::Kind::mean: return nullptr;
    }
    return nullptr;
}

const char* constraint_name(Constraint::Kind k) {
    switch (k) {
    case Constraint::Kind::ratio_gt: return "ratio_gt";
    case Constraint::Kind::mean_gt: return "mean_gt";
    case Constraint::Kind::variance_lt: return "variance_lt";
    }
    return "?";
}

const char* constraint_param(Constraint::Kind k) {
    return k == Constraint::Kind::ratio_gt ? "q" : "bound";
}

} // namespace

nlohmann::json risk_spec_to_json(const RiskSpec& spec) {
    nlohmann::json j;
    j["objective"]["kind"] = measure_name(spec.objective.kind);
    if (const char* p = measure_param(spec.objective.kind))
        j["objective"][p] = spec.objective.param;
    j["constraints"] = nlohmann::json::array();
    for (const auto& c : spec.constraints)
        j["constraints"].push_back(
            {{"kind", constraint_name(c.kind)}, {constraint_param(c.kind), c.bound}});
    j["sense"] = spec.sense == Sense::maximize ? "maximize" : "minimize";
    return j;
}

RiskSpec risk_spec_from_json(const nlohmann::json& j) {
    try {
        RiskSpec spec;
        const auto& obj = j.at("objective");
        const auto kind = obj.at("kind").get<std::string>();
        bool known = false;
        for (auto k : {Measure::Kind::var_threshold, Measure::Kind::var_quantile,
                       Measure::Kind::exp_utility, Measure::Kind::mean_sd, Measure::Kind::mean}) {
            if (kind != measure_name(k))
                continue;
            spec.objective.kind = k;
            if (const char* p = measure_param(k))
                spec.objective.param = obj.at(p).get<double>();
            known = true;
        }
        if (!known)
            throw RiskSpecError("unknown objective kind '" + kind + "'");
        if (j.contains("constraints")) {
            for (const auto& c : j.at("constraints")) {
                const auto ck = c.at("kind").get<std::string>();
                Constraint con;
                if (ck == "ratio_gt")
                    con = Constraint::ratio_gt(c.at("q").get<double>());
                else if (ck == "mean_gt")
                    con = Constraint::mean_gt(c.at("bound").get<double>());
                else if (ck == "variance_lt")
                    con = Constraint::variance_lt(c.at("bound").get<double>());
                else
                    throw RiskSpecError("unknown constraint kind '" + ck + "'");
                spec.constraints.push_back(con);
            }
        }
        if (j.contains("sense")) {
            const auto s = j.at("sense").get<std::string>();
            if (s == "maximize")
                spec.sense = Sense::maximize;
            else if (s == "minimize")
                spec.sense = Sense::minimize;
            else
                throw RiskSpecError("sense must be 'maximize' or 'minimize'");
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw RiskSpecError(std::string("malformed risk spec: ") + e.what());
    }
}

std::vector<std::pair<double, double>> var_function(std::span<const MeanVariance> laws,
                                                    std::span<const double> grid) {
    if (laws.empty())
        throw std::invalid_argument("var_function: no policies");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("var_function: grid must be ascending");
    std::vector<std::pair<double, double>> curve;
    curve.reserve(grid.size());
    for (double tau : grid) {
        double lowest = 1.0;
        for (const auto& m : laws) {
            const double sd = std::sqrt(clamp_variance(m.variance));
            const double f = sd == 0.0 ? (tau >= m.mean ? 1.0 : 0.0)
                                       : normal_cdf((tau - m.mean) / sd);
            lowest = std::min(lowest, f);
        }
        curve.emplace_back(tau, lowest);
    }
    return curve;
}

void write_var_csv(std::ostream& os, std::span<const std::pair<double, double>> curve) {
    os << "tau,p\n";
    char buf[64];
    for (const auto& [tau, p] : curve) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", tau, p);
        os << buf;
    }
}

PolicyRecord evaluate_policy(const Mdp& m, const DeterministicPolicy& pi, const RiskSpec& spec,
                             MomentMethod method) {
    const auto stats = return_stats(induce_chain(m, pi), method);
    PolicyRecord rec;
    rec.index = pi.canonical_index();
    rec.mean = stats.mean;
    rec.variance = stats.variance;
    rec.objective = risk_value(stats.law(), spec.objective);
    rec.feasible = std::all_of(spec.constraints.begin(), spec.constraints.end(),
                               [&](const Constraint& c) { return satisfies(stats.law(), c); });
    return rec;
}

namespace {

// Strict improvement; equal objectives keep the lower index.
bool better(const PolicyRecord& cand, const PolicyRecord& best, Sense sense) {
    if (cand.objective != best.objective)
        return sense == Sense::maximize ? cand.objective > best.objective
                                        : cand.objective < best.objective;
    return cand.index < best.index;
}

void fold(RiskReport& report, const PolicyRecord& rec, Sense sense) {
    if (!rec.feasible)
        return;
    ++report.feasible_count;
    if (!report.optimum || better(rec, *report.optimum, sense))
        report.optimum = rec;
}

} // namespace

RiskReport optimize_serial(const Mdp& m, const RiskSpec& spec, const OptimizeOptions& options) {
    require_valid(m);
    spec.validate();
    const PolicySpace space(m);
    RiskReport report;
    report.policy_count = space.size();
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        const auto rec = evaluate_policy(m, space.at(i), spec, options.method);
        fold(report, rec, spec.sense);
        if (options.keep_records)
            report.records.push_back(rec);
    }
    return report;
}

RiskReport optimize(const Mdp& m, const RiskSpec& spec, const OptimizeOptions& options) {
    require_valid(m);
    spec.validate();
    const PolicySpace space(m);
    const auto count = static_cast<std::int64_t>(space.size());
    std::vector<PolicyRecord> records(space.size());

    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
    std::string failure;
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            records[i] = evaluate_policy(m, space.at(i), spec, options.method);
        } catch (const std::exception& e) {
#pragma omp critical(varisk_optimize_failure)
            if (failure.empty())
                failure = e.what();
        }
    }
    if (!failure.empty())
        throw NumericalError("optimize: " + failure);

    RiskReport report;
    report.policy_count = space.size();
    for (const auto& rec : records)
        fold(report, rec, spec.sense);
    if (options.keep_records)
        report.records = std::move(records);
    return report;
}

nlohmann::json risk_report_to_json(const RiskReport& report, const Mdp& m) {
    nlohmann::json j;
    j["policy_count"] = report.policy_count;
    j["feasible_count"] = report.feasible_count;
    j["feasible"] = report.feasible();
    if (report.optimum) {
        const auto& opt = *report.optimum;
        const auto policy = PolicySpace(m).at(opt.index);
        j["rho_star"] = opt.objective;
        j["optimum"] = {{"index", opt.index},
                        {"mean", opt.mean},
                        {"variance", opt.variance},
                        {"objective", opt.objective}};
        nlohmann::json actions = nlohmann::json::array();
        for (StateIndex x = 0; x < m.num_states(); ++x) {
            const auto a = policy.action(x);
            const bool named = x < m.action_names.size() && a < m.action_names[x].size();
            const std::string state = x < m.state_names.size() ? m.state_names[x] : std::to_string(x);
            actions.push_back({{"state", state},
                               {"action", a},
                               {"action_name", named ? m.action_names[x][a] : std::to_string(a)}});
        }
        j["policy"] = std::move(actions);
    } else {
        j["rho_star"] = nullptr;
        j["policy"] = nullptr;
    }
    if (!report.records.empty()) {
        nlohmann::json recs = nlohmann::json::array();
        for (const auto& r : report.records)
            recs.push_back({{"index", r.index},
                            {"mean", r.mean},
                            {"variance", r.variance},
                            {"objective", r.objective},
                            {"feasible", r.feasible}});
        j["records"] = std::move(recs);
    }
    return j;
}

} // namespace varisk
