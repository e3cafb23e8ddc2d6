// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "krisk/dataset.hpp"
#include "krisk/models.hpp"

namespace krisk {

/// Training-time input augmentation.
struct Augmentation {
    enum class Kind { none, gaussian, fgsm };
    Kind kind = Kind::none;
    double strength = 0.0;  // σ for gaussian, ε for fgsm

    /// "none", "gaussian:<sigma>" or "fgsm:<epsilon>".
    [[nodiscard]] static Augmentation parse(std::string_view text);
    [[nodiscard]] std::string to_string() const;
};

struct TrainConfig {
    std::vector<std::size_t> hidden;  // ReLU layer widths; empty = linear model
    std::size_t num_classes = 0;      // 0: infer from labels
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    Augmentation augmentation;
    std::uint64_t seed = 0;
};

/// Mini-batch SGD on softmax cross-entropy. Deterministic for a fixed config;
/// throws NumericError if the loss becomes non-finite.
[[nodiscard]] ToyClassifier train_toy(const LabeledDataset& dataset, const TrainConfig& config);

/// Fraction of samples whose predicted class equals the label.
[[nodiscard]] double accuracy(const Classifier& model, const LabeledDataset& dataset);

}  // namespace krisk
