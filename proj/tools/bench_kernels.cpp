// Serial reference vs OpenMP kernel timings. Also checks that both paths agree.
#include "varisk/dataset.hpp"
#include "varisk/inventory.hpp"
#include "varisk/risk.hpp"
#include "varisk/sim.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include <omp.h>

using namespace varisk;

namespace {

double seconds(const std::function<void()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void row(const char* name, double serial, double parallel, bool agree) {
    std::printf("%-12s serial %9.4fs  openmp %9.4fs  speedup %5.2fx  %s\n", name, serial, parallel,
                parallel > 0 ? serial / parallel : 0.0, agree ? "agree" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
    std::printf("threads: %d\n", threads);
    bool all = true;

    {
        const auto p = sample_params(7, 3, 0.95);
        const Mdp m = build_inventory_mdp(p);
        RiskSpec spec;
        spec.objective = Measure::var_threshold(p.alpha);
        spec.constraints = {Constraint::ratio_gt(0.0)};
        OptimizeOptions opt;
        opt.threads = threads;
        RiskReport a, b;
        const double s = seconds([&] { a = optimize_serial(m, spec, opt); });
        const double t = seconds([&] { b = optimize(m, spec, opt); });
        const bool ok = a.feasible() == b.feasible() &&
                        (!a.feasible() || a.optimum->index == b.optimum->index);
        row("optimize M=3", s, t, ok);
        all = all && ok;
    }
    {
        const auto p = sample_params(11, 2, 0.95);
        const Mdp m = build_inventory_mdp(p);
        const auto chain = induce_chain(m, PolicySpace(m).at(17));
        SimConfig cfg;
        cfg.episodes = 50000;
        cfg.seed = 3;
        SimStats a, b;
        const double s = seconds([&] { a = simulate_stats_serial(chain, cfg); });
        const double t = seconds([&] { b = simulate_stats(chain, cfg, threads); });
        const bool ok = a.mean == b.mean && a.variance == b.variance;
        row("simulate", s, t, ok);
        all = all && ok;
    }
    {
        GenConfig cfg;
        cfg.n = 200;
        cfg.M = 2;
        cfg.seed = 5;
        Dataset a, b;
        const double s = seconds([&] { a = generate_dataset_serial(cfg); });
        const double t = seconds([&] { b = generate_dataset(cfg, threads); });
        bool ok = a.rows.size() == b.rows.size();
        for (std::size_t i = 0; ok && i < a.rows.size(); ++i)
            ok = a.rows[i].rho == b.rows[i].rho && a.rows[i].policy == b.rows[i].policy;
        row("gen-data", s, t, ok);
        all = all && ok;
    }
    return all ? 0 : 1;
}
