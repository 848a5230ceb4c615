#include "varisk/cli.hpp"

#include "varisk/dataset.hpp"
#include "varisk/inventory.hpp"
#include "varisk/mdp.hpp"
#include "varisk/mlp.hpp"
#include "varisk/risk.hpp"
#include "varisk/sim.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace varisk::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// "-" or empty writes to `out`.
void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw DataError("cannot write '" + path + "'");
    f << text;
    if (!f)
        throw DataError("write to '" + path + "' failed");
}

struct Instance {
    Mdp mdp;
    std::optional<InventoryParams> inventory;
    std::optional<RiskSpec> spec;
};

Instance load_instance(const std::string& path) {
    const json j = read_json(path);
    Instance inst;
    if (j.contains("states")) {
        inst.mdp = mdp_from_json(j);
        require_valid(inst.mdp);
    } else {
        inst.inventory = params_from_json(j);
        inst.mdp = build_inventory_mdp(*inst.inventory);
    }
    if (j.contains("risk"))
        inst.spec = risk_spec_from_json(j.at("risk"));
    return inst;
}

MomentMethod parse_method(const std::string& s) {
    if (s == "direct")
        return MomentMethod::direct;
    if (s == "sat")
        return MomentMethod::sat;
    throw UsageError("--method must be 'direct' or 'sat'");
}

Sense parse_sense(const std::string& s) {
    if (s == "maximize" || s == "max")
        return Sense::maximize;
    if (s == "minimize" || s == "min")
        return Sense::minimize;
    throw UsageError("--sense must be 'maximize' or 'minimize'");
}

struct SpecFlags {
    double alpha = 0.95;
    double q = 0.0;
    std::string sense = "maximize";
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* q_opt = nullptr;
    CLI::Option* sense_opt = nullptr;

    void attach(CLI::App* cmd) {
        alpha_opt = cmd->add_option("--alpha", alpha, "VaR level for the var_threshold objective");
        q_opt = cmd->add_option("--q", q, "Constraint E/V > q");
        sense_opt = cmd->add_option("--sense", sense, "maximize | minimize");
    }

    // Instance JSON "risk" block first; flags override. Without either, the
    // default is var_threshold at the instance alpha with E/V > 0.
    RiskSpec resolve(const Instance& inst) const {
        RiskSpec spec;
        if (inst.spec) {
            spec = *inst.spec;
        } else {
            spec.objective = Measure::var_threshold(inst.inventory ? inst.inventory->alpha : 0.95);
            spec.constraints = {Constraint::ratio_gt(0.0)};
        }
        if (*alpha_opt)
            spec.objective = Measure::var_threshold(alpha);
        if (*q_opt) {
            std::erase_if(spec.constraints, [](const Constraint& c) {
                return c.kind == Constraint::Kind::ratio_gt;
            });
            spec.constraints.push_back(Constraint::ratio_gt(q));
        }
        if (*sense_opt)
            spec.sense = parse_sense(sense);
        spec.validate();
        return spec;
    }
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(cell, &used));
            if (used != cell.size())
                throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw UsageError("cannot parse '" + cell + "' as a number");
        }
    }
    return v;
}

json policy_json(const DeterministicPolicy& pi, int M) {
    json actions = json::array();
    const auto states = inventory_states(M);
    for (std::size_t x = 0; x < states.size(); ++x) {
        const auto a = allowable_actions(states[x], M)[pi.action(x)];
        actions.push_back({{"i", states[x].on_hand},
                           {"j", states[x].in_transit},
                           {"k1", a.k1},
                           {"k2", a.k2}});
    }
    return {{"index", pi.canonical_index()}, {"actions", actions}};
}

int cmd_solve(const Instance& inst, const RiskSpec& spec, MomentMethod method, int threads,
              bool records, const std::string& out_path, std::ostream& out) {
    OptimizeOptions options;
    options.method = method;
    options.threads = threads;
    options.keep_records = records;
    const auto report = optimize(inst.mdp, spec, options);
    json j = risk_report_to_json(report, inst.mdp);
    j["risk"] = risk_spec_to_json(spec);
    j["method"] = method == MomentMethod::direct ? "direct" : "sat";
    write_output(out_path, j.dump(2) + "\n", out);
    return report.feasible() ? kOk : kInfeasible;
}

} // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Risk-sensitive constrained MDP toolkit", "varisk"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    int threads = 0;

    // solve
    auto* solve = app.add_subcommand("solve", "Optimize a risk objective over all deterministic policies");
    std::string instance_path, out_path, method = "direct";
    bool records = false;
    SpecFlags solve_spec;
    solve->add_option("--instance", instance_path, "MDP or inventory-parameter JSON")->required();
    solve_spec.attach(solve);
    solve->add_option("--method", method, "direct | sat");
    solve->add_flag("--records", records, "Include every policy's record");
    solve->add_option("--out", out_path, "Output JSON (default stdout)");
    solve->add_option("--threads", threads, "Worker threads");

    // var-function
    auto* varfn = app.add_subcommand("var-function", "Emit the VaR function curve as CSV");
    std::string vf_instance, vf_out, vf_method = "direct";
    double grid_min = 0.0, grid_max = 0.0;
    std::size_t points = 201;
    varfn->add_option("--instance", vf_instance, "MDP or inventory-parameter JSON")->required();
    auto* gmin = varfn->add_option("--tau-min", grid_min, "Grid start");
    auto* gmax = varfn->add_option("--tau-max", grid_max, "Grid end");
    varfn->add_option("--points", points, "Grid size")->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    varfn->add_option("--method", vf_method, "direct | sat");
    varfn->add_option("--out", vf_out, "Output CSV (default stdout)");
    varfn->add_option("--threads", threads, "Worker threads");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a labeled synthetic dataset");
    std::string gen_config_path, gen_out, gen_report, gen_mode = "actions", gen_method = "direct";
    GenConfig gcfg;
    auto* gen_cfg_opt = gen->add_option("--config", gen_config_path, "GenConfig JSON");
    auto* gen_n = gen->add_option("--n", gcfg.n, "Number of rows");
    auto* gen_M = gen->add_option("--M", gcfg.M, "Warehouse capacity");
    auto* gen_seed = gen->add_option("--seed", gcfg.seed, "Seed");
    auto* gen_gamma = gen->add_option("--gamma", gcfg.gamma, "Discount factor");
    auto* gen_q = gen->add_option("--q", gcfg.q, "Constraint E/V > q");
    auto* gen_mode_opt = gen->add_option("--label-mode", gen_mode, "actions | index");
    auto* gen_attempts = gen->add_option("--max-attempts", gcfg.max_resample_attempts, "Resample budget per row");
    auto* gen_method_opt = gen->add_option("--method", gen_method, "direct | sat");
    gen->add_option("--out", gen_out, "Dataset CSV")->required();
    gen->add_option("--report", gen_report, "Generation report JSON");
    gen->add_option("--threads", threads, "Worker threads");

    // train
    auto* trn = app.add_subcommand("train", "Train the policy/risk approximator on a dataset CSV");
    std::string data_path, model_path, history_path, hidden = "12,8";
    TrainConfig tcfg;
    trn->add_option("--data", data_path, "Dataset CSV")->required();
    trn->add_option("--out", model_path, "Model JSON")->required();
    trn->add_option("--history", history_path, "Per-epoch history CSV");
    trn->add_option("--epochs", tcfg.epochs, "Epochs");
    trn->add_option("--batch", tcfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
    trn->add_option("--val-frac", tcfg.validation_fraction, "Validation fraction")->check(CLI::Range(0.0, 1.0));
    trn->add_option("--hidden", hidden, "Hidden layer widths, comma separated");
    trn->add_option("--lr", tcfg.adam.learning_rate, "Adam learning rate");
    trn->add_option("--seed", tcfg.seed, "Seed")->required();
    trn->add_option("--threads", threads, "Accepted for symmetry; training is sequential");

    // predict
    auto* pred = app.add_subcommand("predict", "Predict optimal risk and policy from features");
    std::string pred_model, pred_features, pred_data, pred_out;
    pred->add_option("--model", pred_model, "Model JSON")->required();
    auto* feat_opt = pred->add_option("--features", pred_features, "Comma-separated feature vector");
    auto* data_opt = pred->add_option("--data", pred_data, "Dataset CSV to predict row by row");
    pred->add_option("--out", pred_out, "Output JSON (default stdout)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo return statistics of one policy");
    std::string sim_instance, sim_out;
    std::uint64_t policy_index = 0;
    SimConfig scfg;
    std::size_t cdf_points = 0;
    sim->add_option("--instance", sim_instance, "MDP or inventory-parameter JSON")->required();
    sim->add_option("--policy-index", policy_index, "Canonical policy index")->required();
    sim->add_option("--episodes", scfg.episodes, "Episodes")->check(CLI::PositiveNumber);
    sim->add_option("--tail", scfg.tail_epsilon, "Truncation tolerance")->check(CLI::PositiveNumber);
    sim->add_option("--seed", scfg.seed, "Seed")->required();
    sim->add_option("--cdf-points", cdf_points, "Also report the empirical CDF on this many points");
    sim->add_option("--out", sim_out, "Output JSON (default stdout)");
    sim->add_option("--threads", threads, "Worker threads");

    auto fail = [&](int code, const std::string& kind, const std::string& message) {
        err << json{{"error", kind}, {"message", message}}.dump() << "\n";
        return code;
    };

    std::vector<std::string> argv_store{"varisk"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store)
        argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << app.help();
        return fail(kUsage, "usage", e.what());
    }

    try {
        if (*solve) {
            const auto inst = load_instance(instance_path);
            return cmd_solve(inst, solve_spec.resolve(inst), parse_method(method), threads, records,
                             out_path, out);
        }

        if (*varfn) {
            const auto inst = load_instance(vf_instance);
            OptimizeOptions options;
            options.method = parse_method(vf_method);
            options.threads = threads;
            options.keep_records = true;
            RiskSpec spec;
            spec.objective = Measure::expected();
            const auto report = optimize(inst.mdp, spec, options);
            std::vector<MeanVariance> laws;
            for (const auto& r : report.records)
                laws.push_back({r.mean, r.variance});
            double lo = grid_min, hi = grid_max;
            if (!*gmin || !*gmax) {
                double auto_lo = INFINITY, auto_hi = -INFINITY;
                for (const auto& l : laws) {
                    const double sd = std::sqrt(l.variance);
                    auto_lo = std::min(auto_lo, l.mean - 4.0 * sd);
                    auto_hi = std::max(auto_hi, l.mean + 4.0 * sd);
                }
                if (!*gmin)
                    lo = auto_lo;
                if (!*gmax)
                    hi = auto_hi;
            }
            if (!(hi > lo))
                throw UsageError("grid must satisfy tau-max > tau-min");
            std::vector<double> grid(points);
            for (std::size_t i = 0; i < points; ++i)
                grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
            std::ostringstream csv;
            write_var_csv(csv, var_function(laws, grid));
            write_output(vf_out, csv.str(), out);
            return kOk;
        }

        if (*gen) {
            GenConfig cfg;
            if (*gen_cfg_opt) {
                cfg = gen_config_from_json(read_json(gen_config_path));
            } else if (!*gen_seed || !*gen_n) {
                throw UsageError("gen-data needs --config or both --n and --seed");
            }
            // explicit flags override the config file
            if (*gen_n) cfg.n = gcfg.n;
            if (*gen_M) cfg.M = gcfg.M;
            if (*gen_seed) cfg.seed = gcfg.seed;
            if (*gen_gamma) cfg.gamma = gcfg.gamma;
            if (*gen_q) cfg.q = gcfg.q;
            if (*gen_attempts) cfg.max_resample_attempts = gcfg.max_resample_attempts;
            if (*gen_mode_opt) cfg.label_mode = label_mode_from_string(gen_mode);
            if (*gen_method_opt) cfg.method = parse_method(gen_method);
            cfg.validate();

            const auto data = generate_dataset(cfg, threads);
            std::ostringstream csv;
            write_dataset_csv(csv, data);
            write_output(gen_out, csv.str(), out);
            if (!gen_report.empty())
                write_output(gen_report, generation_report_to_json(data).dump(2) + "\n", out);
            err << json{{"rows", data.report.rows},
                        {"seconds", data.report.seconds},
                        {"threads", data.report.threads}}
                       .dump()
                << "\n";
            return kOk;
        }

        if (*trn) {
            std::ifstream in(data_path);
            if (!in)
                throw DataError("cannot open '" + data_path + "'");
            const auto table = read_dataset_csv(in);
            if (table.rows == 0)
                throw DataError("dataset has no rows");
            tcfg.hidden.clear();
            for (double h : parse_list(hidden)) {
                if (!(h >= 1.0) || h != std::floor(h))
                    throw UsageError("--hidden widths must be positive integers");
                tcfg.hidden.push_back(static_cast<std::size_t>(h));
            }
            auto result = train(training_data(table), tcfg, policy_hit(table.M, table.mode));
            result.model.tags["label_mode"] = to_string(table.mode);
            result.model.tags["M"] = std::to_string(table.M);
            write_output(model_path, model_to_json(result.model).dump(1) + "\n", out);
            if (!history_path.empty()) {
                std::ostringstream h;
                write_history_csv(h, result.history);
                write_output(history_path, h.str(), out);
            }
            return kOk;
        }

        if (*pred) {
            const auto model = model_from_json(read_json(pred_model));
            const int M = std::stoi(model.tags.at("M"));
            auto one = [&](std::span<const double> features) {
                const auto p = predict(model, features);
                json j{{"rho_hat", p.rho_hat}, {"raw", p.raw}};
                if (p.policy)
                    j["policy"] = policy_json(*p.policy, M);
                else
                    j["decode_error"] = p.error;
                return j;
            };
            json result;
            if ((feat_opt->count() > 0) == (data_opt->count() > 0))
                throw UsageError("predict needs exactly one of --features or --data");
            if (*feat_opt) {
                const auto features = parse_list(pred_features);
                if (features.size() != model.input_dim())
                    throw DataError("model expects " + std::to_string(model.input_dim()) +
                                    " features, got " + std::to_string(features.size()));
                result = one(features);
            } else {
                std::ifstream in(pred_data);
                if (!in)
                    throw DataError("cannot open '" + pred_data + "'");
                const auto table = read_dataset_csv(in);
                const auto hit = policy_hit(table.M, table.mode);
                json rows = json::array();
                std::size_t hits = 0;
                for (std::size_t r = 0; r < table.rows; ++r) {
                    const std::span<const double> f(table.features.data() + r * table.feature_dim,
                                                    table.feature_dim);
                    const std::span<const double> l(table.labels.data() + r * table.label_dim,
                                                    table.label_dim);
                    rows.push_back(one(f));
                    if (hit(predict_labels(model, f), l))
                        ++hits;
                }
                result = {{"predictions", rows},
                          {"hit_rate", table.rows ? double(hits) / double(table.rows) : 0.0}};
            }
            write_output(pred_out, result.dump(2) + "\n", out);
            return kOk;
        }

        if (*sim) {
            const auto inst = load_instance(sim_instance);
            const PolicySpace space(inst.mdp);
            if (policy_index >= space.size())
                throw DataError("policy index out of range (" + std::to_string(space.size()) +
                                " policies)");
            const auto chain = induce_chain(inst.mdp, space.at(policy_index));
            const auto stats = simulate_stats(chain, scfg, threads);
            const auto exact = return_stats(chain);
            json j{{"policy_index", policy_index},
                   {"seed", scfg.seed},
                   {"tail_epsilon", scfg.tail_epsilon},
                   {"simulation", sim_stats_to_json(stats)},
                   {"analytic", {{"mean", exact.mean}, {"variance", exact.variance}}}};
            if (cdf_points >= 2) {
                const double sd = std::sqrt(exact.variance);
                const double lo = exact.mean - 4.0 * sd, hi = exact.mean + 4.0 * sd;
                std::vector<double> grid(cdf_points);
                for (std::size_t i = 0; i < cdf_points; ++i)
                    grid[i] = lo + (hi - lo) * double(i) / double(cdf_points - 1);
                json cdf = json::array();
                for (const auto& [tau, f] : empirical_cdf(chain, scfg, grid, threads))
                    cdf.push_back({tau, f});
                j["empirical_cdf"] = cdf;
            }
            write_output(sim_out, j.dump(2) + "\n", out);
            return kOk;
        }
    } catch (const UsageError& e) {
        err << app.help();
        return fail(kUsage, "usage", e.what());
    } catch (const std::exception& e) {
        return fail(kDataError, "data", e.what());
    }
    return fail(kUsage, "usage", "no subcommand");
}

} // namespace varisk::cli
