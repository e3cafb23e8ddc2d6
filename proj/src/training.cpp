// SPDX-License-Identifier: Apache-2.0
#include "krisk/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "krisk/attacks.hpp"
#include "krisk/error.hpp"
#include "krisk/rng.hpp"

namespace krisk {

Augmentation Augmentation::parse(std::string_view text) {
    if (text == "none") return {};
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw ConfigError("augmentation '" + std::string(text) + "': expected none, gaussian:<sigma> or fgsm:<eps>");
    }
    const auto kind = text.substr(0, colon);
    const auto value = text.substr(colon + 1);
    Augmentation a;
    if (kind == "gaussian") a.kind = Kind::gaussian;
    else if (kind == "fgsm") a.kind = Kind::fgsm;
    else throw ConfigError("augmentation: unknown kind '" + std::string(kind) + "'");
    const auto res = std::from_chars(value.data(), value.data() + value.size(), a.strength);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size() || !std::isfinite(a.strength) ||
        a.strength < 0.0) {
        throw ConfigError("augmentation: strength must be a number >= 0");
    }
    return a;
}

std::string Augmentation::to_string() const {
    switch (kind) {
        case Kind::none: return "none";
        case Kind::gaussian: return "gaussian:" + std::to_string(strength);
        case Kind::fgsm: return "fgsm:" + std::to_string(strength);
    }
    return "none";
}

ToyClassifier train_toy(const LabeledDataset& dataset, const TrainConfig& config) {
    dataset.validate();
    if (dataset.size() == 0) throw ConfigError("train_toy: empty dataset");
    if (config.batch_size == 0) throw ConfigError("train_toy: batch_size must be >= 1");
    if (!(config.learning_rate > 0.0)) throw ConfigError("train_toy: learning_rate must be > 0");
    const std::size_t n_c = config.num_classes ? config.num_classes : dataset.num_classes();
    if (n_c < 2 || n_c < dataset.num_classes()) throw ConfigError("train_toy: need at least two classes");

    // Independent streams so that e.g. zero-strength noise leaves init and
    // shuffling untouched.
    SplitMix64 init_rng(derive_seed(config.seed, 0, 0, 0));
    SplitMix64 order_rng(derive_seed(config.seed, 1, 0, 0));
    SplitMix64 noise_rng(derive_seed(config.seed, 2, 0, 0));

    std::vector<DenseLayer> layers;
    std::size_t in = dataset.geometry.pixels();
    std::vector<std::size_t> widths = config.hidden;
    widths.push_back(n_c);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        DenseLayer layer;
        layer.in = in;
        layer.out = widths[l];
        layer.activation = l + 1 < widths.size() ? Activation::relu : Activation::none;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        layer.weights.resize(layer.in * layer.out);
        for (auto& w : layer.weights) w = init_rng.uniform(-bound, bound);
        layer.bias.assign(layer.out, 0.0);
        layers.push_back(std::move(layer));
        in = widths[l];
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> x(dataset.geometry.pixels());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[order_rng.below(i)]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const ToyClassifier model(layers);
            std::vector<std::vector<double>> gw(layers.size());
            std::vector<std::vector<double>> gb(layers.size());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                gw[l].assign(layers[l].weights.size(), 0.0);
                gb[l].assign(layers[l].bias.size(), 0.0);
            }
            for (std::size_t b = begin; b < end; ++b) {
                const std::size_t s = order[b];
                const auto img = dataset.image(s);
                const std::size_t label = dataset.labels[s];
                switch (config.augmentation.kind) {
                    case Augmentation::Kind::none:
                        std::copy(img.begin(), img.end(), x.begin());
                        break;
                    case Augmentation::Kind::gaussian:
                        for (std::size_t p = 0; p < x.size(); ++p) {
                            x[p] = std::clamp(img[p] + config.augmentation.strength * noise_rng.normal(), 0.0, 1.0);
                        }
                        break;
                    case Augmentation::Kind::fgsm:
                        x = fgsm(model, img, label, config.augmentation.strength);
                        break;
                }
                const ParameterGradients g = model.parameter_gradients(x, label);
                if (!std::isfinite(g.loss)) throw NumericError("train_toy: training diverged (non-finite loss)");
                for (std::size_t l = 0; l < layers.size(); ++l) {
                    for (std::size_t q = 0; q < gw[l].size(); ++q) gw[l][q] += g.weights[l][q];
                    for (std::size_t q = 0; q < gb[l].size(); ++q) gb[l][q] += g.bias[l][q];
                }
            }
            const double scale = config.learning_rate / static_cast<double>(end - begin);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                for (std::size_t q = 0; q < gw[l].size(); ++q) layers[l].weights[q] -= scale * gw[l][q];
                for (std::size_t q = 0; q < gb[l].size(); ++q) layers[l].bias[q] -= scale * gb[l][q];
            }
            for (const auto& layer : layers) {
                const bool finite = std::all_of(layer.weights.begin(), layer.weights.end(),
                                                [](double v) { return std::isfinite(v); });
                if (!finite) throw NumericError("train_toy: training diverged (non-finite weights)");
            }
        }
    }
    return ToyClassifier(std::move(layers));
}

double accuracy(const Classifier& model, const LabeledDataset& dataset) {
    if (dataset.size() == 0) throw ConfigError("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (predict_class(model, dataset.image(i)) == dataset.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace krisk
