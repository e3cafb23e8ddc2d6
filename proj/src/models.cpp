// SPDX-License-Identifier: Apache-2.0
#include "krisk/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "krisk/error.hpp"

namespace krisk {

using nlohmann::json;

std::size_t argmax(std::span<const double> logits) {
    if (logits.empty()) throw DataError("argmax of empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double shift = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - shift);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw DataError("cross-entropy label out of range");
    const double shift = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double l : logits) total += std::exp(l - shift);
    // Clamp tiny negative results of cancellation; the loss is nonnegative.
    return std::max(0.0, std::log(total) + shift - logits[label]);
}

std::vector<Logits> Classifier::predict_batch(const std::vector<std::vector<double>>& inputs) const {
    std::vector<Logits> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) out.push_back(predict(x));
    return out;
}

std::size_t predict_class(const Classifier& model, std::span<const double> x) {
    return argmax(model.predict(x));
}

bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.in == b.in && a.out == b.out && a.weights == b.weights && a.bias == b.bias &&
           a.activation == b.activation;
}

bool operator==(const ToyClassifier& a, const ToyClassifier& b) { return a.layers_ == b.layers_; }

ToyClassifier::ToyClassifier(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw DataError("model: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const std::string where = "model layer " + std::to_string(l);
        if (layer.in == 0 || layer.out == 0) throw DataError(where + ": zero dimension");
        if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
            throw DataError(where + ": parameter sizes do not match " + std::to_string(layer.out) +
                            "x" + std::to_string(layer.in));
        }
        if (l > 0 && layers_[l - 1].out != layer.in) {
            throw DataError(where + ": input size does not chain with previous layer");
        }
        auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
            !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
            throw DataError(where + ": non-finite parameter");
        }
    }
    if (layers_.back().activation != Activation::none) {
        throw DataError("model: last layer must output raw logits (activation none)");
    }
}

ToyClassifier ToyClassifier::from_json(const json& j) {
    try {
        detail::check_keys(j, {"type", "input_dim", "layers"}, "model");
        if (detail::as_string(detail::require_key(j, "type", "model"), "model.type") != "mlp") {
            throw DataError("model: unsupported type (expected \"mlp\")");
        }
        const std::size_t input_dim =
            detail::as_uint(detail::require_key(j, "input_dim", "model"), "model.input_dim");
        const json& jl = detail::require_key(j, "layers", "model");
        if (!jl.is_array()) throw DataError("model.layers: expected an array");
        std::vector<DenseLayer> layers;
        std::size_t in = input_dim;
        for (const auto& entry : jl) {
            detail::check_keys(entry, {"w", "b", "activation"}, "model layer");
            DenseLayer layer;
            const json& w = detail::require_key(entry, "w", "model layer");
            const json& b = detail::require_key(entry, "b", "model layer");
            if (!w.is_array() || !b.is_array()) throw DataError("model layer: w and b must be arrays");
            layer.in = in;
            layer.out = w.size();
            for (const auto& row : w) {
                if (!row.is_array() || row.size() != in) {
                    throw DataError("model layer: weight row length does not match input size");
                }
                for (const auto& v : row) layer.weights.push_back(detail::as_number(v, "model weight"));
            }
            for (const auto& v : b) layer.bias.push_back(detail::as_number(v, "model bias"));
            const std::string act = detail::as_string(
                detail::require_key(entry, "activation", "model layer"), "model layer activation");
            if (act == "relu") layer.activation = Activation::relu;
            else if (act == "none") layer.activation = Activation::none;
            else throw DataError("model layer: unknown activation '" + act + "'");
            in = layer.out;
            layers.push_back(std::move(layer));
        }
        return ToyClassifier(std::move(layers));
    } catch (const ConfigError& e) {
        throw DataError(e.what());
    }
}

json ToyClassifier::to_json() const {
    json layers = json::array();
    for (const auto& layer : layers_) {
        json w = json::array();
        for (std::size_t r = 0; r < layer.out; ++r) {
            w.push_back(std::vector<double>(layer.weights.begin() + r * layer.in,
                                            layer.weights.begin() + (r + 1) * layer.in));
        }
        layers.push_back({{"w", std::move(w)},
                          {"b", layer.bias},
                          {"activation", layer.activation == Activation::relu ? "relu" : "none"}});
    }
    return {{"type", "mlp"}, {"input_dim", input_dim()}, {"layers", std::move(layers)}};
}

ToyClassifier ToyClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void ToyClassifier::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file " + path.string());
    out << to_json().dump() << '\n';
}

void ToyClassifier::check_input(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw DataError("model expects input of length " + std::to_string(input_dim()) + ", got " +
                        std::to_string(x.size()));
    }
}

void ToyClassifier::check_class(std::size_t c) const {
    if (c >= num_classes()) throw DataError("class index " + std::to_string(c) + " out of range");
}

ToyClassifier::Trace ToyClassifier::forward(std::span<const double> x) const {
    check_input(x);
    Trace trace;
    trace.inputs.reserve(layers_.size() + 1);
    trace.pre.reserve(layers_.size());
    trace.inputs.emplace_back(x.begin(), x.end());
    for (const auto& layer : layers_) {
        const auto& in = trace.inputs.back();
        std::vector<double> z(layer.out);
        for (std::size_t r = 0; r < layer.out; ++r) {
            double acc = layer.bias[r];
            const double* row = layer.weights.data() + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) acc += row[c] * in[c];
            z[r] = acc;
        }
        std::vector<double> a = z;
        if (layer.activation == Activation::relu) {
            for (auto& v : a) v = v > 0.0 ? v : 0.0;
        }
        trace.pre.push_back(std::move(z));
        trace.inputs.push_back(std::move(a));
    }
    return trace;
}

std::vector<double> ToyClassifier::backward(const Trace& trace, std::vector<double> grad,
                                            ParameterGradients* params) const {
    if (params) {
        params->weights.resize(layers_.size());
        params->bias.resize(layers_.size());
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        if (layer.activation == Activation::relu) {
            // subgradient 0 at the kink
            for (std::size_t r = 0; r < layer.out; ++r) {
                if (!(trace.pre[l][r] > 0.0)) grad[r] = 0.0;
            }
        }
        const auto& in = trace.inputs[l];
        if (params) {
            auto& gw = params->weights[l];
            gw.assign(layer.weights.size(), 0.0);
            for (std::size_t r = 0; r < layer.out; ++r) {
                for (std::size_t c = 0; c < layer.in; ++c) gw[r * layer.in + c] = grad[r] * in[c];
            }
            params->bias[l] = grad;
        }
        std::vector<double> next(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double g = grad[r];
            if (g == 0.0) continue;
            const double* row = layer.weights.data() + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) next[c] += g * row[c];
        }
        grad = std::move(next);
    }
    return grad;
}

Logits ToyClassifier::predict(std::span<const double> x) const {
    return std::move(forward(x).inputs.back());
}

LossGradient ToyClassifier::loss_and_input_gradient(std::span<const double> x,
                                                    std::size_t label) const {
    check_class(label);
    const Trace trace = forward(x);
    const auto& logits = trace.inputs.back();
    LossGradient out;
    out.loss = softmax_cross_entropy(logits, label);
    std::vector<double> grad = softmax(logits);
    grad[label] -= 1.0;
    out.gradient = backward(trace, std::move(grad), nullptr);
    return out;
}

std::vector<double> ToyClassifier::logit_diff_gradient(std::span<const double> x, std::size_t a,
                                                       std::size_t b) const {
    check_class(a);
    check_class(b);
    const Trace trace = forward(x);
    std::vector<double> grad(num_classes(), 0.0);
    grad[a] += 1.0;
    grad[b] -= 1.0;
    return backward(trace, std::move(grad), nullptr);
}

ParameterGradients ToyClassifier::parameter_gradients(std::span<const double> x,
                                                      std::size_t label) const {
    check_class(label);
    const Trace trace = forward(x);
    const auto& logits = trace.inputs.back();
    ParameterGradients out;
    out.loss = softmax_cross_entropy(logits, label);
    std::vector<double> grad = softmax(logits);
    grad[label] -= 1.0;
    out.input = backward(trace, std::move(grad), &out);
    return out;
}

}  // namespace krisk
