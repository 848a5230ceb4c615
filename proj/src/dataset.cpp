#include "varisk/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include <omp.h>

namespace varisk {

std::string to_string(LabelMode mode) {
    return mode == LabelMode::actions ? "actions" : "index";
}

LabelMode label_mode_from_string(const std::string& s) {
    if (s == "actions")
        return LabelMode::actions;
    if (s == "index")
        return LabelMode::index;
    throw std::invalid_argument("label mode must be 'actions' or 'index', got '" + s + "'");
}

void GenConfig::validate() const {
    if (n < 1)
        throw std::invalid_argument("dataset size n must be at least 1");
    if (M < 1)
        throw std::invalid_argument("capacity M must be at least 1");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("gamma must lie in (0,1)");
    if (!std::isfinite(q))
        throw std::invalid_argument("q must be finite");
    if (max_resample_attempts < 1)
        throw std::invalid_argument("max_resample_attempts must be at least 1");
}

nlohmann::json gen_config_to_json(const GenConfig& cfg) {
    return {{"n", cfg.n},
            {"M", cfg.M},
            {"gamma", cfg.gamma},
            {"q", cfg.q},
            {"seed", cfg.seed},
            {"label_mode", to_string(cfg.label_mode)},
            {"max_resample_attempts", cfg.max_resample_attempts},
            {"method", cfg.method == MomentMethod::direct ? "direct" : "sat"},
            {"sense", cfg.sense == Sense::maximize ? "maximize" : "minimize"}};
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
    try {
        GenConfig cfg;
        cfg.n = j.at("n").get<std::size_t>();
        cfg.M = j.value("M", cfg.M);
        cfg.gamma = j.value("gamma", cfg.gamma);
        cfg.q = j.value("q", cfg.q);
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.label_mode = label_mode_from_string(j.value("label_mode", std::string("actions")));
        cfg.max_resample_attempts = j.value("max_resample_attempts", cfg.max_resample_attempts);
        const auto method = j.value("method", std::string("direct"));
        if (method != "direct" && method != "sat")
            throw std::invalid_argument("method must be 'direct' or 'sat'");
        cfg.method = method == "direct" ? MomentMethod::direct : MomentMethod::sat;
        const auto sense = j.value("sense", std::string("maximize"));
        if (sense != "maximize" && sense != "minimize")
            throw std::invalid_argument("sense must be 'maximize' or 'minimize'");
        cfg.sense = sense == "maximize" ? Sense::maximize : Sense::minimize;
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed generation config: ") + e.what());
    }
}

RiskSpec instance_spec(const InventoryParams& p, const GenConfig& cfg) {
    RiskSpec spec;
    spec.objective = Measure::var_threshold(p.alpha);
    spec.constraints = {Constraint::ratio_gt(cfg.q)};
    spec.sense = cfg.sense;
    return spec;
}

DatasetRow generate_row(const GenConfig& cfg, std::size_t i) {
    Stream rng(cfg.seed, i);
    OptimizeOptions options;
    options.method = cfg.method;
    for (std::size_t attempt = 1; attempt <= cfg.max_resample_attempts; ++attempt) {
        DatasetRow row;
        row.params = sample_params(rng, cfg.M, cfg.gamma);
        const Mdp m = build_inventory_mdp(row.params);
        const auto report = optimize_serial(m, instance_spec(row.params, cfg), options);
        if (!report.feasible())
            continue;
        row.rho = report.optimum->objective;
        row.policy = PolicySpace(m).at(report.optimum->index);
        row.attempts = attempt;
        return row;
    }
    throw GenerationError("row " + std::to_string(i) + ": no feasible instance after " +
                          std::to_string(cfg.max_resample_attempts) + " draws");
}

namespace {

GenerationReport summarize(const std::vector<DatasetRow>& rows, double seconds, int threads) {
    GenerationReport r;
    r.rows = rows.size();
    r.seconds = seconds;
    r.threads = threads;
    for (const auto& row : rows) {
        r.total_attempts += row.attempts;
        if (row.attempts > 1)
            ++r.resampled_rows;
        r.max_attempts_used = std::max(r.max_attempts_used, row.attempts);
    }
    return r;
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

Dataset generate_dataset_serial(const GenConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    Dataset data;
    data.config = cfg;
    data.rows.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i)
        data.rows.push_back(generate_row(cfg, i));
    data.report = summarize(data.rows, elapsed(start), 1);
    return data;
}

Dataset generate_dataset(const GenConfig& cfg, int threads) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const int workers = threads > 0 ? threads : omp_get_max_threads();
    Dataset data;
    data.config = cfg;
    data.rows.resize(cfg.n);

    // lowest failing row index wins so the error is thread-count independent
    std::size_t failed_row = cfg.n;
    std::string failure;
    const auto n = static_cast<std::int64_t>(cfg.n);
#pragma omp parallel for schedule(dynamic, 8) num_threads(workers)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            data.rows[i] = generate_row(cfg, static_cast<std::size_t>(i));
        } catch (const std::exception& e) {
#pragma omp critical(varisk_generation_failure)
            if (static_cast<std::size_t>(i) < failed_row) {
                failed_row = static_cast<std::size_t>(i);
                failure = e.what();
            }
        }
    }
    if (failed_row < cfg.n)
        throw GenerationError(failure);
    data.report = summarize(data.rows, elapsed(start), workers);
    return data;
}

std::size_t label_count(LabelMode mode, int M) {
    return mode == LabelMode::index ? 2 : 1 + 2 * inventory_states(M).size();
}

std::vector<double> encode_labels(const DeterministicPolicy& pi, double rho, LabelMode mode, int M) {
    const auto states = inventory_states(M);
    if (pi.size() != states.size())
        throw PolicyMismatchError("policy does not match the inventory state space");
    std::vector<double> out{rho};
    if (mode == LabelMode::index) {
        out.push_back(static_cast<double>(pi.canonical_index()));
        return out;
    }
    for (std::size_t x = 0; x < states.size(); ++x) {
        const auto actions = allowable_actions(states[x], M);
        if (pi.action(x) >= actions.size())
            throw PolicyMismatchError("action not allowable in state " + std::to_string(x));
        out.push_back(actions[pi.action(x)].k1);
        out.push_back(actions[pi.action(x)].k2);
    }
    return out;
}

DecodedLabels decode_labels(std::span<const double> labels, LabelMode mode, int M) {
    const auto states = inventory_states(M);
    std::vector<std::size_t> counts;
    for (const auto& s : states)
        counts.push_back(allowable_actions(s, M).size());
    const PolicySpace space(counts);

    if (labels.size() != label_count(mode, M))
        throw DecodeError("label vector has " + std::to_string(labels.size()) +
                          " entries, expected " + std::to_string(label_count(mode, M)));
    for (double v : labels)
        if (!std::isfinite(v))
            throw DecodeError("label vector contains a non-finite entry");

    DecodedLabels out;
    out.rho = labels[0];
    if (mode == LabelMode::index) {
        const double idx = std::nearbyint(labels[1]);
        if (idx < 0.0 || idx >= static_cast<double>(space.size()))
            throw DecodeError("policy index " + std::to_string(labels[1]) + " out of range");
        out.policy = space.at(static_cast<std::uint64_t>(idx));
        return out;
    }

    std::vector<ActionIndex> actions(states.size());
    for (std::size_t x = 0; x < states.size(); ++x) {
        const InventoryAction wanted{static_cast<int>(std::nearbyint(labels[1 + 2 * x])),
                                     static_cast<int>(std::nearbyint(labels[2 + 2 * x]))};
        const auto allowed = allowable_actions(states[x], M);
        const auto it = std::find(allowed.begin(), allowed.end(), wanted);
        if (it == allowed.end())
            throw DecodeError("order (" + std::to_string(wanted.k1) + "," +
                              std::to_string(wanted.k2) + ") not allowable in state " +
                              std::to_string(x));
        actions[x] = static_cast<ActionIndex>(it - allowed.begin());
    }
    out.policy = space.make(std::move(actions));
    return out;
}

std::vector<std::string> csv_header(int M, LabelMode mode) {
    std::vector<std::string> h;
    for (const auto& r : feature_ranges(M))
        h.push_back(r.name);
    h.push_back("rho_star");
    if (mode == LabelMode::index) {
        h.push_back("policy_index");
    } else {
        for (const auto& s : inventory_states(M)) {
            const auto tag = "_i" + std::to_string(s.on_hand) + "_j" + std::to_string(s.in_transit);
            h.push_back("k1" + tag);
            h.push_back("k2" + tag);
        }
    }
    return h;
}

namespace {

void write_fields(std::ostream& os, std::span<const double> values, bool& first) {
    char buf[40];
    for (double v : values) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        if (!first)
            os << ',';
        os << buf;
        first = false;
    }
}

} // namespace

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    const auto header = csv_header(data.config.M, data.config.label_mode);
    for (std::size_t i = 0; i < header.size(); ++i)
        os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& row : data.rows) {
        bool first = true;
        write_fields(os, feature_vector(row.params), first);
        write_fields(os, encode_labels(row.policy, row.rho, data.config.label_mode, data.config.M),
                     first);
        os << '\n';
    }
}

nlohmann::json generation_report_to_json(const Dataset& data) {
    const auto& r = data.report;
    return {{"config", gen_config_to_json(data.config)},
            {"rows", r.rows},
            {"total_attempts", r.total_attempts},
            {"resampled_rows", r.resampled_rows},
            {"max_attempts_used", r.max_attempts_used}};
}

DatasetTable read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line))
        throw std::invalid_argument("dataset CSV is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            header.push_back(cell);
    }
    int demand_cols = 0;
    while (10 + demand_cols < static_cast<int>(header.size()) &&
           header[10 + demand_cols] == "d" + std::to_string(demand_cols))
        ++demand_cols;
    if (demand_cols < 3 || demand_cols % 2 == 0)
        throw std::invalid_argument("dataset CSV header has no valid demand columns");

    DatasetTable t;
    t.M = (demand_cols - 1) / 2;
    const bool index_mode = header.back() == "policy_index";
    t.mode = index_mode ? LabelMode::index : LabelMode::actions;
    if (header != csv_header(t.M, t.mode))
        throw std::invalid_argument("dataset CSV header does not match any known layout");
    t.feature_dim = feature_count(t.M);
    t.label_dim = label_count(t.mode, t.M);

    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::size_t col = 0;
        const char* p = line.c_str();
        while (true) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p)
                throw std::invalid_argument("dataset CSV line " + std::to_string(lineno) +
                                            ": bad number");
            (col < t.feature_dim ? t.features : t.labels).push_back(v);
            ++col;
            if (*end == ',') {
                p = end + 1;
                continue;
            }
            if (*end != '\0' && *end != '\r')
                throw std::invalid_argument("dataset CSV line " + std::to_string(lineno) +
                                            ": unexpected character");
            break;
        }
        if (col != header.size())
            throw std::invalid_argument("dataset CSV line " + std::to_string(lineno) + " has " +
                                        std::to_string(col) + " fields");
        ++t.rows;
    }
    return t;
}

HitFn policy_hit(int M, LabelMode mode) {
    return [M, mode](std::span<const double> predicted, std::span<const double> truth) {
        try {
            return decode_labels(predicted, mode, M).policy.canonical_index() ==
                   decode_labels(truth, mode, M).policy.canonical_index();
        } catch (const DecodeError&) {
            return false;
        }
    };
}

TrainingData training_data(const DatasetTable& table) {
    TrainingData d;
    d.rows = table.rows;
    d.feature_dim = table.feature_dim;
    d.label_dim = table.label_dim;
    d.features = table.features;
    d.labels = table.labels;
    for (const auto& r : feature_ranges(table.M)) {
        d.feature_lo.push_back(r.lo);
        d.feature_hi.push_back(r.hi);
    }
    // Action coordinates live in [0, M] (index mode: [0, count)). Scaling them
    // by their data std blows up coordinates that are almost always zero.
    double scale = static_cast<double>(table.M);
    if (table.mode == LabelMode::index) {
        std::vector<std::size_t> counts;
        for (const auto& st : inventory_states(table.M))
            counts.push_back(allowable_actions(st, table.M).size());
        scale = static_cast<double>(PolicySpace(counts).size());
    }
    d.label_scale.assign(table.label_dim, scale);
    d.label_scale[0] = 0.0;
    return d;
}

Prediction predict(const MlpModel& model, std::span<const double> features) {
    const auto mode_it = model.tags.find("label_mode");
    const auto cap_it = model.tags.find("M");
    if (mode_it == model.tags.end() || cap_it == model.tags.end())
        throw MlpError("model lacks the label_mode/M tags needed to decode policies");
    const LabelMode mode = label_mode_from_string(mode_it->second);
    const int M = std::stoi(cap_it->second);

    Prediction out;
    out.raw = predict_labels(model, features);
    out.rho_hat = out.raw.front();
    try {
        out.policy = decode_labels(out.raw, mode, M).policy;
    } catch (const DecodeError& e) {
        out.error = e.what();
    }
    return out;
}

} // namespace varisk
