// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include "support.hpp"

#include "varisk/cli.hpp"
#include "varisk/dataset.hpp"
#include "varisk/inventory.hpp"
#include "varisk/mlp.hpp"
#include "varisk/normal.hpp"
#include "varisk/risk.hpp"
#include "varisk/sat.hpp"
#include "varisk/sim.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

using namespace varisk;
using testsupport::rel_err;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Verdict sat_direct_equivalence() {
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const auto m = build_inventory_mdp(sample_params(substream_seed(101, k), 2, 0.95));
        for (const auto& pi : enumerate_policies(m)) {
            const auto c = induce_chain(m, pi);
            const auto d = return_stats(c, MomentMethod::direct);
            const auto s = return_stats(c, MomentMethod::sat);
            worst = std::max({worst, rel_err(s.mean, d.mean), rel_err(s.variance, d.variance)});
            ++checked;
        }
    }
    return {checked == 5400 && worst <= 1e-9,
            fmt("%zu policies, max relative gap %.3g", checked, worst)};
}

Verdict monte_carlo() {
    bool ok = true;
    double worst_z = 0.0, worst_v = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) {
        const auto m = build_inventory_mdp(sample_params(substream_seed(202, k), 2, 0.95));
        const PolicySpace space(m);
        Stream pick(202, 100 + k);
        for (int j = 0; j < 3; ++j) {
            const auto c = induce_chain(m, space.at(pick.below(space.size())));
            SimConfig cfg;
            cfg.episodes = 200000;
            cfg.tail_epsilon = 1e-6;
            cfg.seed = substream_seed(202, 10 * k + j);
            const auto s = simulate_stats(c, cfg);
            const auto a = return_stats(c);
            const double z = std::fabs(s.mean - a.mean) / s.mean_se;
            const double v = std::fabs(s.variance - a.variance) / a.variance;
            worst_z = std::max(worst_z, z);
            worst_v = std::max(worst_v, v);
            ok = ok && z <= 4.0 && v <= 0.05;
        }
    }
    return {ok, fmt("15 policies, max |dE|/SE %.2f, max |dV|/V %.4f", worst_z, worst_v)};
}

Verdict closed_forms() {
    bool ok = true;
    const double gamma = 0.95;
    Matrix one(1, 1, 1.0);
    const std::vector<double> r1{1.0};
    const auto v1 = solve_mean(one, r1, gamma);
    const auto p1 = solve_variance(one, r1, gamma, v1);
    ok = ok && v1[0] == 1.0 / (1.0 - gamma) && p1[0] == 0.0;

    Matrix half(2, 2, 0.5);
    const std::vector<double> r2{0.0, 1.0};
    const auto v2 = solve_mean(half, r2, 0.5);
    const auto p2 = solve_variance(half, r2, 0.5, v2);
    const double err = std::max({std::fabs(v2[0] - 0.5), std::fabs(v2[1] - 1.5),
                                 std::fabs(p2[0] - 1.0 / 12), std::fabs(p2[1] - 1.0 / 12)});
    ok = ok && err <= 1e-12;
    return {ok, fmt("single state v=%.17g psi=%.3g; two-state max error %.3g", v1[0], p1[0], err)};
}

Verdict return_scaling() {
    Stream rng(404);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double gamma = rng.uniform(0.5, 0.98);
        const auto c = testsupport::random_chain(rng, 1 + rng.below(6), 3, gamma);
        const auto d = return_stats(c, MomentMethod::direct);
        const auto aug = chain_stats(sat_chain(c));
        worst = std::max({worst, rel_err(aug.mean, gamma * d.mean),
                          rel_err(aug.variance, gamma * gamma * d.variance)});
    }
    return {worst <= 1e-9, fmt("20 chains, max relative gap %.3g", worst)};
}

Verdict optimizer_soundness() {
    int mismatches = 0, infeasible_ok = 0, feasible = 0;
    for (std::uint64_t k = 0; k < 50; ++k) {
        const int M = k < 25 ? 1 : 2;
        const auto p = sample_params(substream_seed(505, k), M, 0.95);
        const auto m = build_inventory_mdp(p);
        for (double q : {0.0, 1e12}) {
            RiskSpec spec;
            spec.objective = Measure::var_threshold(p.alpha);
            spec.constraints = {Constraint::ratio_gt(q)};

            std::vector<std::pair<double, std::uint64_t>> values;
            for (const auto& pi : enumerate_policies(m)) {
                const auto o = testsupport::iterate_moments(induce_chain(m, pi));
                if (satisfies({o.mean, o.variance}, spec.constraints[0]))
                    values.push_back({risk_value({o.mean, o.variance}, spec.objective),
                                      pi.canonical_index()});
            }
            const auto r = optimize(m, spec);
            if (values.empty()) {
                if (r.feasible())
                    ++mismatches;
                else if (q > 0)
                    ++infeasible_ok;
                continue;
            }
            ++feasible;
            if (!r.feasible() || r.feasible_count != values.size()) {
                ++mismatches;
                continue;
            }
            double best = -INFINITY;
            for (const auto& [v, i] : values)
                best = std::max(best, v);
            // lowest index among the (numerically) tied maximizers
            std::uint64_t arg = UINT64_MAX;
            for (const auto& [v, i] : values)
                if (rel_err(v, best) <= 1e-9)
                    arg = std::min(arg, i);
            if (r.optimum->index != arg || rel_err(r.optimum->objective, best) > 1e-9)
                ++mismatches;
        }
    }
    return {mismatches == 0 && infeasible_ok == 50,
            fmt("%d feasible problems, %d prohibitive-q problems infeasible in both, %d mismatches",
                feasible, infeasible_ok, mismatches)};
}

Verdict inverse_normal() {
    double worst = 0.0;
    for (double p : {1e-6, 0.05, 0.5, 0.975, 1.0 - 1e-6})
        worst = std::max(worst, std::fabs(normal_quantile(p) - testsupport::bisect_quantile(p)));
    return {worst <= 1e-8, fmt("max |error| %.3g", worst)};
}

Verdict gradient_check() {
    Stream rng(707);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        std::vector<std::size_t> dims{2 + rng.below(6), 2 + rng.below(8), 2 + rng.below(6), 1 + rng.below(4)};
        auto m = init_model(dims, rng.next_u64());
        for (auto& l : m.layers)
            for (double& b : l.bias)
                b = rng.uniform(-0.5, 0.5);
        const std::size_t rows = 1 + rng.below(8);
        std::vector<double> x(rows * dims.front()), t(rows * dims.back());
        for (double& v : x)
            v = rng.normal();
        for (double& v : t)
            v = rng.normal();
        const Batch batch{x, t, rows};
        const auto lg = compute_gradients(m, batch);
        for (std::size_t q = 0; q < m.layers.size(); ++q)
            for (int which = 0; which < 2; ++which) {
                auto& params = which ? m.layers[q].bias : m.layers[q].weights;
                const auto& grads = which ? lg.gradients.layers[q].bias : lg.gradients.layers[q].weights;
                for (std::size_t i = 0; i < params.size(); ++i) {
                    const double keep = params[i];
                    params[i] = keep + 1e-5;
                    const double up = batch_loss(m, batch);
                    params[i] = keep - 1e-5;
                    const double down = batch_loss(m, batch);
                    params[i] = keep;
                    const double fd = (up - down) / 2e-5;
                    worst = std::max(worst, std::fabs(fd - grads[i]) /
                                                std::max(1e-6, std::fabs(fd) + std::fabs(grads[i])));
                }
            }
    }
    return {worst <= 1e-4, fmt("20 cases, max relative error %.3g", worst)};
}

Verdict desk_replication() {
    GenConfig cfg;
    cfg.n = 20000;
    cfg.M = 2;
    cfg.seed = 11;
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = generate_dataset(cfg);
    const double gen_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream csv;
    write_dataset_csv(csv, data);
    std::istringstream in(csv.str());
    const auto table = read_dataset_csv(in);

    TrainConfig tc;
    tc.hidden = {12, 8};
    tc.batch_size = 50;
    tc.epochs = 50;
    tc.seed = 1;
    const auto t1 = std::chrono::steady_clock::now();
    const auto res = train(training_data(table), tc, policy_hit(cfg.M, cfg.label_mode));
    const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

    const auto& v = res.history.validation_loss;
    const double lo = *std::min_element(v.begin(), v.end());
    const bool dims_ok = res.model.dims == std::vector<std::size_t>{15, 12, 8, 13};
    const bool a = v[9] <= 1.2 * lo;
    const bool b = v[49] <= 0.1 * v[0];
    const double hit = res.history.validation_hit_rate.back();
    const bool c = hit >= 0.8;
    return {dims_ok && a && b && c,
            fmt("(a) epoch10/min = %.3f %s; (b) epoch50/epoch1 = %.3f %s; (c) hit rate %.4f %s; "
                "gen %.1fs, train %.1fs",
                v[9] / lo, a ? "ok" : "FAIL", v[49] / v[0], b ? "ok" : "FAIL", hit, c ? "ok" : "FAIL",
                gen_s, train_s)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism() {
    const auto dir = fs::temp_directory_path() / "varisk_acceptance";
    fs::create_directories(dir);
    std::ostringstream sink;
    auto cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
    auto path = [&](const std::string& name) { return (dir / name).string(); };

    bool ok = true;
    const std::vector<std::pair<std::string, std::string>> runs{{"1", "10"}, {"1", "11"}, {"8", "80"}};
    for (const auto& [threads, tag] : runs) {
        ok = ok && cli({"gen-data", "--n", "1000", "--M", "2", "--seed", "9", "--threads", threads,
                        "--out", path("d_" + tag + ".csv"), "--report", path("r_" + tag + ".json")}) == 0;
        ok = ok && cli({"train", "--data", path("d_" + tag + ".csv"), "--seed", "4", "--threads", threads,
                        "--out", path("m_" + tag + ".json"), "--history", path("h_" + tag + ".csv")}) == 0;
    }
    std::size_t compared = 0;
    for (const char* kind : {"d_%s.csv", "r_%s.json", "m_%s.json", "h_%s.csv"}) {
        const auto base = slurp(path(fmt(kind, "10")));
        for (const char* other : {"11", "80"}) {
            ok = ok && !base.empty() && base == slurp(path(fmt(kind, other)));
            ++compared;
        }
    }
    return {ok, fmt("%zu artifact comparisons (repeat run, --threads 1 vs 8)", compared)};
}

Verdict var_function_check() {
    const std::vector<MeanVariance> two{{0.0, 1.0}, {1.5, 0.25}};
    std::vector<double> grid;
    for (int k = -400; k <= 400; ++k)
        grid.push_back(k / 50.0);
    double worst = 0.0;
    for (const auto& [t, p] : var_function(two, grid))
        worst = std::max(worst, std::fabs(p - std::min(normal_cdf(t), normal_cdf((t - 1.5) / 0.5))));

    // monotone and bounded on policy laws of a real instance
    const auto m = build_inventory_mdp(sample_params(1010, 2, 0.95));
    std::vector<MeanVariance> laws;
    for (const auto& pi : enumerate_policies(m))
        laws.push_back(return_stats(induce_chain(m, pi)).law());
    std::vector<double> wide;
    for (int k = 0; k <= 2000; ++k)
        wide.push_back(-300.0 + 0.5 * k);
    bool shape = true;
    double last = 0.0;
    for (const auto& [t, p] : var_function(laws, wide)) {
        shape = shape && p >= last && p >= 0.0 && p <= 1.0;
        last = p;
    }
    return {shape && worst <= 1e-12,
            fmt("two-policy max gap %.3g; 54-policy curve %s", worst,
                shape ? "nondecreasing within [0,1]" : "BROKEN")};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"SAT and direct moments agree", sat_direct_equivalence},
        {"Monte-Carlo validation", monte_carlo},
        {"closed-form moments", closed_forms},
        {"return scaling under SAT", return_scaling},
        {"optimizer soundness", optimizer_soundness},
        {"inverse normal accuracy", inverse_normal},
        {"gradient check", gradient_check},
        {"desk-scale training run", desk_replication},
        {"determinism of gen-data and train", determinism},
        {"VaR function", var_function_check},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first, o.detail.c_str(), s);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
