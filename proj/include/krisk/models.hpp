// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace krisk {

using Logits = std::vector<double>;

/// Index of the largest logit; ties resolve to the lowest index.
[[nodiscard]] std::size_t argmax(std::span<const double> logits);
[[nodiscard]] std::vector<double> softmax(std::span<const double> logits);
/// -log softmax(logits)[label], computed with the log-sum-exp shift.
[[nodiscard]] double softmax_cross_entropy(std::span<const double> logits, std::size_t label);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // d loss / d input
};

/// The classifier under test. Implementations are immutable after
/// construction and safe to call concurrently.
class Classifier {
public:
    virtual ~Classifier() = default;

    [[nodiscard]] virtual std::size_t input_dim() const = 0;
    [[nodiscard]] virtual std::size_t num_classes() const = 0;

    [[nodiscard]] virtual Logits predict(std::span<const double> x) const = 0;
    /// One logits vector per input, in input order.
    [[nodiscard]] virtual std::vector<Logits> predict_batch(
        const std::vector<std::vector<double>>& inputs) const;

    /// False for black-box models; the gradient members then throw
    /// BlackBoxModelError.
    [[nodiscard]] virtual bool supports_gradients() const = 0;
    /// Softmax cross-entropy against `label` and its gradient w.r.t. the input.
    [[nodiscard]] virtual LossGradient loss_and_input_gradient(std::span<const double> x,
                                                               std::size_t label) const = 0;
    /// Gradient of logit[a] - logit[b] w.r.t. the input.
    [[nodiscard]] virtual std::vector<double> logit_diff_gradient(std::span<const double> x,
                                                                  std::size_t a,
                                                                  std::size_t b) const = 0;
};

[[nodiscard]] std::size_t predict_class(const Classifier& model, std::span<const double> x);

enum class Activation { relu, none };

/// Affine layer y = act(W x + b), W stored row-major (out x in).
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    Activation activation = Activation::none;
};

/// Parameter gradients for every layer, laid out like the layers themselves.
struct ParameterGradients {
    double loss = 0.0;
    std::vector<double> input;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
};

/// Multi-layer perceptron with ReLU hidden layers and raw-logit output.
class ToyClassifier final : public Classifier {
public:
    /// Validates shape chaining, finiteness and a linear (no activation) last layer.
    explicit ToyClassifier(std::vector<DenseLayer> layers);

    [[nodiscard]] static ToyClassifier from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static ToyClassifier load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] std::size_t input_dim() const override { return layers_.front().in; }
    [[nodiscard]] std::size_t num_classes() const override { return layers_.back().out; }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    [[nodiscard]] Logits predict(std::span<const double> x) const override;
    [[nodiscard]] bool supports_gradients() const override { return true; }
    [[nodiscard]] LossGradient loss_and_input_gradient(std::span<const double> x,
                                                       std::size_t label) const override;
    [[nodiscard]] std::vector<double> logit_diff_gradient(std::span<const double> x,
                                                          std::size_t a,
                                                          std::size_t b) const override;

    /// Cross-entropy gradient w.r.t. the input and every parameter (training).
    [[nodiscard]] ParameterGradients parameter_gradients(std::span<const double> x,
                                                         std::size_t label) const;

    friend bool operator==(const ToyClassifier& a, const ToyClassifier& b);

private:
    struct Trace {
        std::vector<std::vector<double>> inputs;  // input to each layer
        std::vector<std::vector<double>> pre;     // pre-activation of each layer
    };

    Trace forward(std::span<const double> x) const;
    // Backpropagates d/dlogits; fills parameter gradients when `params` is non-null.
    std::vector<double> backward(const Trace& trace, std::vector<double> grad,
                                 ParameterGradients* params) const;
    void check_input(std::span<const double> x) const;
    void check_class(std::size_t c) const;

    std::vector<DenseLayer> layers_;
};

bool operator==(const DenseLayer& a, const DenseLayer& b);

}  // namespace krisk
