#pragma once

#include "varisk/inventory.hpp"
#include "varisk/mdp.hpp"
#include "varisk/mlp.hpp"
#include "varisk/risk.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace varisk {

/// How the optimal policy is written into a label vector.
///   actions: [rho, k1(s_1), k2(s_1), ..., k1(s_K), k2(s_K)] over inventory_states()
///   index:   [rho, canonical_index]
enum class LabelMode { actions, index };

std::string to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& s);

struct GenConfig {
    std::size_t n = 1000;
    int M = 3;
    double gamma = 0.95;
    double q = 0.0;
    std::uint64_t seed = 0;
    LabelMode label_mode = LabelMode::actions;
    std::size_t max_resample_attempts = 100;
    MomentMethod method = MomentMethod::direct;
    Sense sense = Sense::maximize;

    void validate() const;
};

nlohmann::json gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const nlohmann::json& j);

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetRow {
    InventoryParams params;
    double rho = 0.0;
    DeterministicPolicy policy;
    std::size_t attempts = 1;
};

struct GenerationReport {
    std::size_t rows = 0;
    std::size_t total_attempts = 0;
    std::size_t resampled_rows = 0;
    std::size_t max_attempts_used = 0;
    double seconds = 0.0;
    int threads = 1;
};

struct Dataset {
    GenConfig config;
    std::vector<DatasetRow> rows;
    GenerationReport report;
};

/// The criterion attached to a sampled instance: maximize the VaR threshold
/// at the instance's alpha subject to E/V > q.
RiskSpec instance_spec(const InventoryParams& p, const GenConfig& cfg);

/// Row i of the dataset, drawn from substream (seed, i). Infeasible draws are
/// resampled from the same substream.
DatasetRow generate_row(const GenConfig& cfg, std::size_t i);

/// Rows are independent; the output does not depend on `threads`.
Dataset generate_dataset(const GenConfig& cfg, int threads = 0);
Dataset generate_dataset_serial(const GenConfig& cfg);

std::size_t label_count(LabelMode mode, int M);
std::vector<double> encode_labels(const DeterministicPolicy& pi, double rho, LabelMode mode, int M);

struct DecodedLabels {
    double rho = 0.0;
    DeterministicPolicy policy;
};

/// Inverse of encode_labels. Entries are rounded to the nearest integer;
/// throws DecodeError when the rounded vector is not a valid policy.
DecodedLabels decode_labels(std::span<const double> labels, LabelMode mode, int M);

std::vector<std::string> csv_header(int M, LabelMode mode);
void write_dataset_csv(std::ostream& os, const Dataset& data);
/// Deterministic summary; wall time and thread count are left out so the
/// report is reproducible byte for byte.
nlohmann::json generation_report_to_json(const Dataset& data);

/// Dataset CSV read back as numeric tables. labels[i] starts with rho_star.
struct DatasetTable {
    int M = 0;
    LabelMode mode = LabelMode::actions;
    std::size_t rows = 0;
    std::size_t feature_dim = 0;
    std::size_t label_dim = 0;
    std::vector<double> features; // row-major rows x feature_dim
    std::vector<double> labels;   // row-major rows x label_dim
};

DatasetTable read_dataset_csv(std::istream& is);

/// Exact decoded-policy match between a predicted and a true label vector.
HitFn policy_hit(int M, LabelMode mode);

/// Builds training input for a table with the inventory sampling box as the
/// feature normalization.
TrainingData training_data(const DatasetTable& table);

struct Prediction {
    double rho_hat = 0.0;
    std::optional<DeterministicPolicy> policy;
    std::vector<double> raw;
    std::string error;
};

/// Runs the network and decodes its output with the label mode and capacity
/// stored in the model tags.
Prediction predict(const MlpModel& model, std::span<const double> features);

} // namespace varisk
