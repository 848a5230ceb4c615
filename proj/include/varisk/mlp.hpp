#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace varisk {

class MlpError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Affine map x -> A x + b with A stored row-major (outputs x inputs).
struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/**
 * Feed-forward network: affine layers with relu between them and a linear
 * output. Inputs are scaled to [-1, 1] by a fixed box (feature_lo/hi); the
 * network works in standardized label space (label_mean/std), and
 * predict_labels() maps back.
 */
struct MlpModel {
    std::vector<std::size_t> dims;
    std::vector<DenseLayer> layers;
    std::string hidden_activation = "relu";
    std::string output_activation = "linear";
    std::vector<double> feature_lo;
    std::vector<double> feature_hi;
    std::vector<double> label_mean;
    std::vector<double> label_std;
    AdamConfig adam;
    std::map<std::string, std::string> tags;

    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }
    std::size_t parameter_count() const;
};

/// Relu layers draw N(0, 2/fan_in); the output layer draws
/// U(-L, L) with L = sqrt(6 / (fan_in + fan_out)). Biases start at zero and
/// the normalizations start as identity.
MlpModel init_model(std::span<const std::size_t> dims, std::uint64_t seed);

std::vector<double> normalize_features(const MlpModel& m, std::span<const double> x);
std::vector<double> normalize_labels(const MlpModel& m, std::span<const double> y);
std::vector<double> denormalize_labels(const MlpModel& m, std::span<const double> z);

/// Network output for an already normalized input.
std::vector<double> forward_normalized(const MlpModel& m, std::span<const double> z);
/// Network output (standardized label space) for a raw feature vector.
std::vector<double> forward(const MlpModel& m, std::span<const double> x);
/// forward() followed by label de-normalization.
std::vector<double> predict_labels(const MlpModel& m, std::span<const double> x);

struct Gradients {
    std::vector<DenseLayer> layers;
};

/// Normalized inputs and targets, row-major.
struct Batch {
    std::span<const double> inputs;
    std::span<const double> targets;
    std::size_t rows = 0;
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients gradients;
};

/// Mean squared error over batch rows and output coordinates, with its
/// gradient by backpropagation (relu'(0) = 0). Rows accumulate in index order.
LossAndGradients compute_gradients(const MlpModel& m, const Batch& batch);

double batch_loss(const MlpModel& m, const Batch& batch);

struct AdamState {
    std::vector<DenseLayer> first;
    std::vector<DenseLayer> second;
    std::uint64_t t = 0;

    static AdamState for_model(const MlpModel& m);
};

void adam_step(AdamState& state, MlpModel& m, const Gradients& g);

using HitFn = std::function<bool(std::span<const double> predicted, std::span<const double> truth)>;

struct TrainingData {
    std::size_t rows = 0;
    std::size_t feature_dim = 0;
    std::size_t label_dim = 0;
    std::vector<double> features;
    std::vector<double> labels;
    std::vector<double> feature_lo;
    std::vector<double> feature_hi;
    /// Optional fixed label scales; an entry of 0 (or an empty vector) means
    /// the training-row standard deviation. Label centring is always the
    /// training-row mean.
    std::vector<double> label_scale;
};

struct TrainConfig {
    std::vector<std::size_t> hidden{12, 8};
    double validation_fraction = 0.2;
    std::size_t epochs = 50;
    std::size_t batch_size = 50;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    std::vector<double> validation_hit_rate; // NaN without a hit function
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> validation_rows;
};

/// Mini-batch Adam on MSE. The split and the per-epoch shuffles come from
/// `seed`; identical inputs give bit-identical models and histories.
TrainResult train(const TrainingData& data, const TrainConfig& cfg, const HitFn& hit = {});

/// MSE in standardized label space over the given rows.
double evaluate_loss(const MlpModel& m, const TrainingData& data, std::span<const std::size_t> rows);
double evaluate_hit_rate(const MlpModel& m, const TrainingData& data,
                         std::span<const std::size_t> rows, const HitFn& hit);

nlohmann::json model_to_json(const MlpModel& m);
MlpModel model_from_json(const nlohmann::json& j);

void write_history_csv(std::ostream& os, const TrainHistory& h);

} // namespace varisk
