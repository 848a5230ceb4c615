#include "varisk/mlp.hpp"

#include "varisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace varisk {

namespace {

constexpr int kFormatVersion = 1;

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    for (const auto& l : layers)
        out.push_back({l.inputs, l.outputs, std::vector<double>(l.weights.size(), 0.0),
                       std::vector<double>(l.bias.size(), 0.0)});
    return out;
}

void check_dims(const MlpModel& m, std::size_t n, const char* what) {
    if (n != m.input_dim())
        throw MlpError(std::string(what) + ": expected " + std::to_string(m.input_dim()) +
                       " inputs, got " + std::to_string(n));
}

// Activations of every layer for one input; acts[0] is the input itself and
// pre[q] the pre-activation of layer q.
struct Trace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> pre;
};

void run_layers(const MlpModel& m, std::span<const double> z, Trace& tr) {
    const std::size_t depth = m.layers.size();
    tr.acts.resize(depth + 1);
    tr.pre.resize(depth);
    tr.acts[0].assign(z.begin(), z.end());
    for (std::size_t q = 0; q < depth; ++q) {
        const auto& layer = m.layers[q];
        auto& pre = tr.pre[q];
        auto& out = tr.acts[q + 1];
        pre.resize(layer.outputs);
        out.resize(layer.outputs);
        const auto& in = tr.acts[q];
        for (std::size_t i = 0; i < layer.outputs; ++i) {
            double acc = layer.bias[i];
            const double* w = layer.weights.data() + i * layer.inputs;
            for (std::size_t j = 0; j < layer.inputs; ++j)
                acc += w[j] * in[j];
            pre[i] = acc;
            out[i] = (q + 1 < depth) ? std::max(0.0, acc) : acc;
        }
    }
}

} // namespace

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        n += l.weights.size() + l.bias.size();
    return n;
}

MlpModel init_model(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2)
        throw MlpError("a network needs at least an input and an output layer");
    for (auto d : dims)
        if (d == 0)
            throw MlpError("layer dimensions must be positive");

    MlpModel m;
    m.dims.assign(dims.begin(), dims.end());
    Stream rng(seed);
    for (std::size_t q = 1; q < dims.size(); ++q) {
        DenseLayer layer{dims[q - 1], dims[q], std::vector<double>(dims[q] * dims[q - 1]),
                         std::vector<double>(dims[q], 0.0)};
        const bool output = q + 1 == dims.size();
        if (!output) {
            const double sd = std::sqrt(2.0 / static_cast<double>(layer.inputs));
            for (double& w : layer.weights)
                w = sd * rng.normal();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
            for (double& w : layer.weights)
                w = rng.uniform(-limit, limit);
        }
        m.layers.push_back(std::move(layer));
    }
    m.feature_lo.assign(dims.front(), 0.0);
    m.feature_hi.assign(dims.front(), 1.0);
    m.label_mean.assign(dims.back(), 0.0);
    m.label_std.assign(dims.back(), 1.0);
    return m;
}

std::vector<double> normalize_features(const MlpModel& m, std::span<const double> x) {
    check_dims(m, x.size(), "normalize_features");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double span = m.feature_hi[i] - m.feature_lo[i];
        z[i] = 2.0 * (x[i] - m.feature_lo[i]) / (span > 0.0 ? span : 1.0) - 1.0;
    }
    return z;
}

std::vector<double> normalize_labels(const MlpModel& m, std::span<const double> y) {
    if (y.size() != m.output_dim())
        throw MlpError("normalize_labels: dimension mismatch");
    std::vector<double> z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        z[i] = (y[i] - m.label_mean[i]) / m.label_std[i];
    return z;
}

std::vector<double> denormalize_labels(const MlpModel& m, std::span<const double> z) {
    if (z.size() != m.output_dim())
        throw MlpError("denormalize_labels: dimension mismatch");
    std::vector<double> y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        y[i] = z[i] * m.label_std[i] + m.label_mean[i];
    return y;
}

std::vector<double> forward_normalized(const MlpModel& m, std::span<const double> z) {
    check_dims(m, z.size(), "forward");
    Trace tr;
    run_layers(m, z, tr);
    return std::move(tr.acts.back());
}

std::vector<double> forward(const MlpModel& m, std::span<const double> x) {
    return forward_normalized(m, normalize_features(m, x));
}

std::vector<double> predict_labels(const MlpModel& m, std::span<const double> x) {
    return denormalize_labels(m, forward(m, x));
}

LossAndGradients compute_gradients(const MlpModel& m, const Batch& batch) {
    if (batch.rows == 0)
        throw MlpError("compute_gradients: empty batch");
    const std::size_t nin = m.input_dim();
    const std::size_t nout = m.output_dim();
    if (batch.inputs.size() != batch.rows * nin || batch.targets.size() != batch.rows * nout)
        throw MlpError("compute_gradients: batch shape does not match the model");

    LossAndGradients out;
    out.gradients.layers = zeros_like(m.layers);
    auto& grads = out.gradients.layers;
    const std::size_t depth = m.layers.size();
    const double scale = 1.0 / static_cast<double>(batch.rows * nout);

    Trace tr;
    std::vector<double> delta;
    std::vector<double> back;
    double loss = 0.0;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        run_layers(m, batch.inputs.subspan(r * nin, nin), tr);
        const auto target = batch.targets.subspan(r * nout, nout);
        const auto& y = tr.acts.back();
        delta.assign(nout, 0.0);
        for (std::size_t i = 0; i < nout; ++i) {
            const double e = y[i] - target[i];
            loss += e * e;
            delta[i] = 2.0 * e * scale;
        }
        for (std::size_t q = depth; q-- > 0;) {
            const auto& layer = m.layers[q];
            auto& g = grads[q];
            const auto& in = tr.acts[q];
            for (std::size_t i = 0; i < layer.outputs; ++i) {
                g.bias[i] += delta[i];
                double* gw = g.weights.data() + i * layer.inputs;
                for (std::size_t j = 0; j < layer.inputs; ++j)
                    gw[j] += delta[i] * in[j];
            }
            if (q == 0)
                break;
            back.assign(layer.inputs, 0.0);
            for (std::size_t i = 0; i < layer.outputs; ++i) {
                const double* w = layer.weights.data() + i * layer.inputs;
                for (std::size_t j = 0; j < layer.inputs; ++j)
                    back[j] += w[j] * delta[i];
            }
            const auto& pre = tr.pre[q - 1];
            for (std::size_t j = 0; j < layer.inputs; ++j)
                back[j] = pre[j] > 0.0 ? back[j] : 0.0;
            delta.swap(back);
        }
    }
    out.loss = loss * scale;
    return out;
}

double batch_loss(const MlpModel& m, const Batch& batch) {
    const std::size_t nin = m.input_dim();
    const std::size_t nout = m.output_dim();
    if (batch.rows == 0)
        throw MlpError("batch_loss: empty batch");
    double loss = 0.0;
    Trace tr;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        run_layers(m, batch.inputs.subspan(r * nin, nin), tr);
        const auto target = batch.targets.subspan(r * nout, nout);
        for (std::size_t i = 0; i < nout; ++i) {
            const double e = tr.acts.back()[i] - target[i];
            loss += e * e;
        }
    }
    return loss / static_cast<double>(batch.rows * nout);
}

AdamState AdamState::for_model(const MlpModel& m) {
    return {zeros_like(m.layers), zeros_like(m.layers), 0};
}

void adam_step(AdamState& state, MlpModel& m, const Gradients& g) {
    if (state.first.size() != m.layers.size() || g.layers.size() != m.layers.size())
        throw MlpError("adam_step: optimizer state does not match the model");
    const auto& cfg = m.adam;
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);

    auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                      std::vector<double>& mom1, std::vector<double>& mom2) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            mom1[i] = cfg.beta1 * mom1[i] + (1.0 - cfg.beta1) * grad[i];
            mom2[i] = cfg.beta2 * mom2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double mhat = mom1[i] / c1;
            const double vhat = mom2[i] / c2;
            param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    };
    for (std::size_t q = 0; q < m.layers.size(); ++q) {
        update(m.layers[q].weights, g.layers[q].weights, state.first[q].weights,
               state.second[q].weights);
        update(m.layers[q].bias, g.layers[q].bias, state.first[q].bias, state.second[q].bias);
    }
}

namespace {

void shuffle(std::vector<std::size_t>& v, Stream& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.below(i)]);
}

// Gathers normalized inputs and targets of `rows` into contiguous buffers.
void gather(const MlpModel& m, const TrainingData& data, std::span<const std::size_t> rows,
            std::vector<double>& inputs, std::vector<double>& targets) {
    inputs.clear();
    targets.clear();
    for (auto r : rows) {
        const auto z = normalize_features(
            m, std::span<const double>(data.features).subspan(r * data.feature_dim, data.feature_dim));
        const auto t = normalize_labels(
            m, std::span<const double>(data.labels).subspan(r * data.label_dim, data.label_dim));
        inputs.insert(inputs.end(), z.begin(), z.end());
        targets.insert(targets.end(), t.begin(), t.end());
    }
}

} // namespace

double evaluate_loss(const MlpModel& m, const TrainingData& data, std::span<const std::size_t> rows) {
    std::vector<double> inputs, targets;
    gather(m, data, rows, inputs, targets);
    return batch_loss(m, {inputs, targets, rows.size()});
}

double evaluate_hit_rate(const MlpModel& m, const TrainingData& data,
                         std::span<const std::size_t> rows, const HitFn& hit) {
    if (!hit || rows.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::size_t hits = 0;
    for (auto r : rows) {
        const auto pred = predict_labels(
            m, std::span<const double>(data.features).subspan(r * data.feature_dim, data.feature_dim));
        if (hit(pred, std::span<const double>(data.labels).subspan(r * data.label_dim, data.label_dim)))
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const HitFn& hit) {
    if (data.rows == 0)
        throw MlpError("train: no data");
    if (cfg.batch_size == 0)
        throw MlpError("train: batch size must be positive");
    if (data.features.size() != data.rows * data.feature_dim ||
        data.labels.size() != data.rows * data.label_dim)
        throw MlpError("train: data tables have inconsistent shapes");
    if (!data.label_scale.empty() && data.label_scale.size() != data.label_dim)
        throw MlpError("train: label_scale must have one entry per label");

    std::vector<std::size_t> dims{data.feature_dim};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(data.label_dim);

    TrainResult res;
    res.model = init_model(dims, substream_seed(cfg.seed, 0));
    auto& model = res.model;
    model.adam = cfg.adam;
    if (!data.feature_lo.empty()) {
        model.feature_lo = data.feature_lo;
        model.feature_hi = data.feature_hi;
    }

    std::vector<std::size_t> order(data.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream split_rng(cfg.seed, 1);
    shuffle(order, split_rng);
    const auto n_val =
        static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.rows)));
    if (n_val == 0 || n_val >= data.rows)
        throw MlpError("train: validation split leaves an empty training or validation set");
    res.validation_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    res.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(res.validation_rows.begin(), res.validation_rows.end());
    std::sort(res.train_rows.begin(), res.train_rows.end());

    // label standardization from the training rows
    const std::size_t nl = data.label_dim;
    std::vector<double> mean(nl, 0.0), var(nl, 0.0);
    for (auto r : res.train_rows)
        for (std::size_t k = 0; k < nl; ++k)
            mean[k] += data.labels[r * nl + k];
    for (auto& v : mean)
        v /= static_cast<double>(res.train_rows.size());
    for (auto r : res.train_rows)
        for (std::size_t k = 0; k < nl; ++k) {
            const double d = data.labels[r * nl + k] - mean[k];
            var[k] += d * d;
        }
    model.label_mean = mean;
    model.label_std.resize(nl);
    for (std::size_t k = 0; k < nl; ++k) {
        const double sd = std::sqrt(var[k] / static_cast<double>(res.train_rows.size()));
        const double fixed = data.label_scale.empty() ? 0.0 : data.label_scale[k];
        model.label_std[k] = fixed > 0.0 ? fixed : (sd > 0.0 ? sd : 1.0);
    }

    AdamState adam = AdamState::for_model(model);
    std::vector<std::size_t> epoch_rows = res.train_rows;
    std::vector<double> inputs, targets;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Stream rng(cfg.seed, 2 + epoch);
        shuffle(epoch_rows, rng);
        double weighted = 0.0;
        for (std::size_t start = 0; start < epoch_rows.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(epoch_rows.size(), start + cfg.batch_size);
            const std::span<const std::size_t> rows(epoch_rows.data() + start, stop - start);
            gather(model, data, rows, inputs, targets);
            const auto lg = compute_gradients(model, {inputs, targets, rows.size()});
            weighted += lg.loss * static_cast<double>(rows.size());
            adam_step(adam, model, lg.gradients);
        }
        res.history.train_loss.push_back(weighted / static_cast<double>(epoch_rows.size()));
        res.history.validation_loss.push_back(evaluate_loss(model, data, res.validation_rows));
        res.history.validation_hit_rate.push_back(
            evaluate_hit_rate(model, data, res.validation_rows, hit));
    }
    return res;
}

nlohmann::json model_to_json(const MlpModel& m) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["layer_dims"] = m.dims;
    j["activations"] = {{"hidden", m.hidden_activation}, {"output", m.output_activation}};
    j["layers"] = nlohmann::json::array();
    for (const auto& l : m.layers)
        j["layers"].push_back({{"weights", l.weights}, {"bias", l.bias}});
    j["feature_normalization"] = {{"min", m.feature_lo}, {"max", m.feature_hi}};
    j["label_normalization"] = {{"mean", m.label_mean}, {"std", m.label_std}};
    j["adam"] = {{"learning_rate", m.adam.learning_rate},
                 {"beta1", m.adam.beta1},
                 {"beta2", m.adam.beta2},
                 {"epsilon", m.adam.epsilon}};
    j["tags"] = m.tags;
    return j;
}

MlpModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw MlpError("unsupported model format version");
        MlpModel m;
        m.dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        if (m.dims.size() < 2)
            throw MlpError("model needs at least two layer dimensions");
        m.hidden_activation = j.at("activations").at("hidden").get<std::string>();
        m.output_activation = j.at("activations").at("output").get<std::string>();
        if (m.hidden_activation != "relu" || m.output_activation != "linear")
            throw MlpError("only relu hidden / linear output activations are supported");
        const auto& layers = j.at("layers");
        if (layers.size() + 1 != m.dims.size())
            throw MlpError("layer count does not match layer_dims");
        for (std::size_t q = 0; q < layers.size(); ++q) {
            DenseLayer l{m.dims[q], m.dims[q + 1], layers[q].at("weights").get<std::vector<double>>(),
                         layers[q].at("bias").get<std::vector<double>>()};
            if (l.weights.size() != l.inputs * l.outputs || l.bias.size() != l.outputs)
                throw MlpError("layer " + std::to_string(q) + " has the wrong shape");
            m.layers.push_back(std::move(l));
        }
        m.feature_lo = j.at("feature_normalization").at("min").get<std::vector<double>>();
        m.feature_hi = j.at("feature_normalization").at("max").get<std::vector<double>>();
        m.label_mean = j.at("label_normalization").at("mean").get<std::vector<double>>();
        m.label_std = j.at("label_normalization").at("std").get<std::vector<double>>();
        if (m.feature_lo.size() != m.input_dim() || m.feature_hi.size() != m.input_dim() ||
            m.label_mean.size() != m.output_dim() || m.label_std.size() != m.output_dim())
            throw MlpError("normalization statistics have the wrong shape");
        for (double s : m.label_std)
            if (!(s > 0.0) || !std::isfinite(s))
                throw MlpError("label standard deviations must be positive and finite");
        const auto& a = j.at("adam");
        m.adam = {a.at("learning_rate").get<double>(), a.at("beta1").get<double>(),
                  a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
        if (j.contains("tags"))
            m.tags = j.at("tags").get<std::map<std::string, std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw MlpError(std::string("malformed model JSON: ") + e.what());
    }
}

void write_history_csv(std::ostream& os, const TrainHistory& h) {
    os << "epoch,train_loss,validation_loss,validation_hit_rate\n";
    char buf[128];
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e + 1, h.train_loss[e],
                      h.validation_loss[e], h.validation_hit_rate[e]);
        os << buf;
    }
}

} // namespace varisk
