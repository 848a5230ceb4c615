#pragma once

#include "varisk/linalg.hpp"
#include "varisk/mdp.hpp"
#include "varisk/sat.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "json.hpp"

namespace varisk {

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RiskSpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Variances in (-kVarianceSlack, 0) are roundoff and clamp to zero; anything
/// more negative raises NumericalError.
inline constexpr double kVarianceSlack = 1e-9;

/// Residual bound accepted from the moment solves, relative to 1 + |x|_inf.
inline constexpr double kSolveTolerance = 1e-9;

/// Conditional expected return v = (I - gamma P)^-1 r for a chain with
/// deterministic state reward r.
std::vector<double> solve_mean(const Matrix& transition, std::span<const double> reward,
                               double gamma);

/// Conditional return variance psi = (I - gamma^2 P)^-1 theta, where
/// theta_x = sum_y P(x,y) (r_x + gamma v_y)^2 - v_x^2.
std::vector<double> solve_variance(const Matrix& transition, std::span<const double> reward,
                                   double gamma, std::span<const double> mean);

struct MeanVariance {
    double mean = 0.0;
    double variance = 0.0;
};

/// Return moments of a chain from its initial law. `v`/`psi` are the
/// per-state conditional moments: over the original states for the direct
/// route (NaN where unreachable from the initial support), over the
/// augmented states for the SAT route.
struct MomentPair {
    double mean = 0.0;
    double variance = 0.0;
    std::vector<double> v;
    std::vector<double> psi;

    double sd() const;
    MeanVariance law() const { return {mean, variance}; }
};

enum class MomentMethod { direct, sat };

MomentPair return_stats(const MarkovRewardProcess& mrp, MomentMethod method = MomentMethod::direct);

/// Moments of the augmented chain's own return, started from its initial law
/// (no gamma rescaling).
MomentPair chain_stats(const AugmentedChain& chain);

double clamp_variance(double variance);

struct Measure {
    enum class Kind { var_threshold, var_quantile, exp_utility, mean_sd, mean };
    Kind kind = Kind::var_threshold;
    double param = 0.95;

    static Measure var_threshold(double alpha) { return {Kind::var_threshold, alpha}; }
    static Measure var_quantile(double tau) { return {Kind::var_quantile, tau}; }
    static Measure exp_utility(double beta) { return {Kind::exp_utility, beta}; }
    static Measure mean_sd(double k) { return {Kind::mean_sd, k}; }
    static Measure expected() { return {Kind::mean, 0.0}; }
};

/// Evaluates a law-invariant measure from (E, V) under the normal
/// approximation where one is needed.
double risk_value(MeanVariance m, const Measure& measure);

struct Constraint {
    enum class Kind { ratio_gt, mean_gt, variance_lt };
    Kind kind = Kind::ratio_gt;
    double bound = 0.0;

    static Constraint ratio_gt(double q) { return {Kind::ratio_gt, q}; }
    static Constraint mean_gt(double e) { return {Kind::mean_gt, e}; }
    static Constraint variance_lt(double v) { return {Kind::variance_lt, v}; }
};

/// ratio_gt(q): V > 0 and E/V > q, or V = 0 and E > 0.
bool satisfies(MeanVariance m, const Constraint& c);

enum class Sense { maximize, minimize };

struct RiskSpec {
    Measure objective;
    std::vector<Constraint> constraints;
    Sense sense = Sense::maximize;

    /// Throws RiskSpecError.
    void validate() const;
};

nlohmann::json risk_spec_to_json(const RiskSpec& spec);
RiskSpec risk_spec_from_json(const nlohmann::json& j);

/// Pointwise minimum over policies of the (normal) return CDF at each grid
/// point. Zero-variance laws contribute a unit step at their mean.
std::vector<std::pair<double, double>> var_function(std::span<const MeanVariance> laws,
                                                    std::span<const double> grid);

void write_var_csv(std::ostream& os, std::span<const std::pair<double, double>> curve);

struct PolicyRecord {
    std::uint64_t index = 0;
    double mean = 0.0;
    double variance = 0.0;
    double objective = 0.0;
    bool feasible = false;
};

struct RiskReport {
    std::vector<PolicyRecord> records; // empty unless requested
    std::optional<PolicyRecord> optimum;
    std::uint64_t policy_count = 0;
    std::uint64_t feasible_count = 0;

    bool feasible() const { return optimum.has_value(); }
};

struct OptimizeOptions {
    MomentMethod method = MomentMethod::direct;
    int threads = 0; // 0: OpenMP default
    bool keep_records = false;
};

/// Exhaustive constrained optimization over the deterministic policy space.
/// Ties go to the lowest canonical index. An instance with no feasible
/// policy yields a report without optimum.
RiskReport optimize(const Mdp& m, const RiskSpec& spec, const OptimizeOptions& options = {});

/// Sequential reference for optimize(); same result by construction.
RiskReport optimize_serial(const Mdp& m, const RiskSpec& spec, const OptimizeOptions& options = {});

/// Moments and objective of one policy, as optimize() computes them.
PolicyRecord evaluate_policy(const Mdp& m, const DeterministicPolicy& pi, const RiskSpec& spec,
                             MomentMethod method = MomentMethod::direct);

nlohmann::json risk_report_to_json(const RiskReport& report, const Mdp& m);

} // namespace varisk
