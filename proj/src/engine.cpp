// SPDX-License-Identifier: Apache-2.0
#include "krisk/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "json_util.hpp"
#include "krisk/attacks.hpp"
#include "krisk/corruptions.hpp"
#include "krisk/rng.hpp"

namespace krisk {

using nlohmann::json;

namespace {

DatasetRef parse_dataset(const json& j, const std::filesystem::path& base_dir) {
    DatasetRef ref;
    if (j.is_string()) {
        ref.path = j.get<std::string>();
    } else {
        detail::check_keys(j, {"path", "samples", "limit"}, "dataset");
        ref.path = detail::as_string(detail::require_key(j, "path", "dataset"), "dataset.path");
        if (auto it = j.find("samples"); it != j.end()) {
            if (!it->is_array()) throw ConfigError("dataset.samples: expected an array");
            for (const auto& s : *it) ref.samples.push_back(detail::as_string(s, "dataset.samples"));
        }
        if (auto it = j.find("limit"); it != j.end()) ref.limit = detail::as_uint(*it, "dataset.limit");
    }
    if (ref.path.empty()) throw ConfigError("dataset: empty path");
    if (ref.path.is_relative() && !base_dir.empty()) ref.path = base_dir / ref.path;
    return ref;
}

void check_finite(const Logits& logits, const std::string& what) {
    for (double v : logits) {
        if (!std::isfinite(v)) throw NumericError(what + ": model produced non-finite logits");
    }
}

// Runs fn(chunk) for chunk in [0, n) on `workers` threads. The error of the
// lowest failing chunk is rethrown so failures are reported deterministically.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::size_t error_chunk = n;
    std::exception_ptr error;
    auto run = [&] {
        for (std::size_t c = next++; c < n && !failed; c = next++) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (c < error_chunk) {
                    error_chunk = c;
                    error = std::current_exception();
                }
                failed = true;
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    }  // jthreads join here: completion barrier
    if (error) std::rethrow_exception(error);
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    detail::check_keys(j, {"dataset", "distributions", "losses", "n_draws", "master_seed", "kris", "weights"},
                       "scenario");
    ScenarioConfig cfg;
    if (auto it = j.find("dataset"); it != j.end()) cfg.dataset = parse_dataset(*it, base_dir);
    if (auto it = j.find("master_seed"); it != j.end()) cfg.master_seed = detail::as_uint(*it, "master_seed");
    const auto draws = detail::as_uint(detail::require_key(j, "n_draws", "scenario"), "n_draws");
    if (draws == 0 || draws > 0xFFFFFFFFull) throw ConfigError("n_draws must be in [1, 2^32)");
    cfg.n_draws = static_cast<std::uint32_t>(draws);

    const json& dists = detail::require_key(j, "distributions", "scenario");
    if (!dists.is_array()) throw ConfigError("distributions: expected an array");
    for (const auto& d : dists) {
        detail::check_keys(d, {"name", "family", "params", "seed", "n_draws"}, "distribution");
        const std::string name = detail::as_string(detail::require_key(d, "name", "distribution"), "distribution.name");
        const std::string family =
            detail::as_string(detail::require_key(d, "family", "distribution"), "distribution.family");
        const json params = d.contains("params") ? d.at("params") : json::object();
        const std::uint64_t seed = d.contains("seed") ? detail::as_uint(d.at("seed"), "distribution.seed")
                                                      : cfg.master_seed;
        if (auto it = d.find("n_draws"); it != d.end() && detail::as_uint(*it, "distribution.n_draws") != draws) {
            throw ConfigError("distribution '" + name +
                              "': per-distribution n_draws must equal the scenario n_draws "
                              "(use a separate tensor file for a different draw count)");
        }
        cfg.distributions.push_back(make_descriptor(name, family, params, seed));
    }

    const json& losses = detail::require_key(j, "losses", "scenario");
    if (!losses.is_array()) throw ConfigError("losses: expected an array");
    for (const auto& l : losses) cfg.losses.push_back(LossSpec::from_json(l, base_dir));

    if (auto it = j.find("kris"); it != j.end()) {
        if (!it->is_array()) throw ConfigError("kris: expected an array");
        for (const auto& k : *it) cfg.kris.push_back(KriDefinition::from_json(k));
    }
    if (auto it = j.find("weights"); it != j.end()) {
        detail::require_object(*it, "weights");
        Weights w;
        for (const auto& [name, value] : it->items()) w[name] = detail::as_number(value, "weights." + name);
        cfg.weights = std::move(w);
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("scenario config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void ScenarioConfig::validate() const {
    if (distributions.empty()) throw ConfigError("scenario: at least one distribution is required");
    if (losses.empty()) throw ConfigError("scenario: at least one loss is required");
    if (n_draws == 0) throw ConfigError("scenario: n_draws must be >= 1");
    std::set<std::string> names;
    for (const auto& d : distributions) {
        d.validate();
        if (!names.insert(d.name).second) throw ConfigError("scenario: duplicate distribution '" + d.name + "'");
    }
    names.clear();
    for (const auto& l : losses) {
        if (l.name.empty()) throw ConfigError("scenario: loss without a name");
        if (!names.insert(l.name).second) throw ConfigError("scenario: duplicate loss '" + l.name + "'");
    }
    std::vector<std::string> kri_names;
    for (const auto& k : kris) {
        if (std::find(kri_names.begin(), kri_names.end(), k.name) != kri_names.end()) {
            throw ConfigError("scenario: duplicate KRI '" + k.name + "'");
        }
        kri_names.push_back(k.name);
    }
    if (weights) {
        if (kris.empty()) throw ConfigError("scenario: weights given without KRI definitions");
        validate_weights(*weights, kri_names);
    }
}

LabeledDataset ScenarioConfig::select_samples(const LabeledDataset& data) const {
    LabeledDataset out = data;
    if (dataset && !dataset->samples.empty()) out = data.subset(dataset->samples);
    if (dataset && dataset->limit && *dataset->limit < out.size()) {
        std::vector<std::string> ids(out.sample_ids.begin(),
                                     out.sample_ids.begin() + static_cast<std::ptrdiff_t>(*dataset->limit));
        out = out.subset(ids);
    }
    if (out.size() == 0) throw ConfigError("scenario: dataset selection is empty");
    return out;
}

TensorIndex ScenarioConfig::tensor_index(const LabeledDataset& data) const {
    TensorIndex index;
    for (const auto& l : losses) index.loss_names.push_back(l.name);
    index.sample_ids = data.sample_ids;
    index.distributions = distributions;
    index.n_draws = n_draws;
    index.validate();
    return index;
}

Weights ScenarioConfig::resolved_weights() const {
    if (weights) return *weights;
    std::vector<std::string> names;
    for (const auto& k : kris) names.push_back(k.name);
    return uniform_weights(names);
}

std::vector<WorkUnit> plan_work(const TensorIndex& index) {
    const auto dims = index.dims();
    std::vector<WorkUnit> units;
    units.reserve(static_cast<std::size_t>(dims[1]) * dims[2] * dims[3]);
    for (std::uint32_t k = 0; k < dims[2]; ++k) {
        const std::uint64_t master = index.distributions[k].master_seed;
        for (std::uint32_t l = 0; l < dims[3]; ++l) {
            for (std::uint32_t j = 0; j < dims[1]; ++j) {
                units.push_back({j, k, l, derive_seed(master, k, l, j)});
            }
        }
    }
    return units;
}

RiskTensor build_tensor(const Classifier& model, const LabeledDataset& dataset,
                        const ScenarioConfig& config, const BuildOptions& options) {
    config.validate();
    dataset.validate();
    if (model.input_dim() != dataset.geometry.pixels()) {
        throw DataError("model input dimension " + std::to_string(model.input_dim()) +
                        " does not match dataset images of " + std::to_string(dataset.geometry.pixels()) +
                        " values");
    }
    if (dataset.num_classes() > model.num_classes()) {
        throw DataError("dataset labels exceed the model's class count");
    }
    RiskTensor tensor(config.tensor_index(dataset));
    const TensorIndex& index = tensor.index();

    std::vector<Perturbation> perturbations;
    bool adversarial = false;
    for (const auto& d : index.distributions) {
        perturbations.push_back(resolve(d, dataset.geometry));
        adversarial = adversarial || d.kind == DistributionKind::adversarial;
    }
    if (adversarial) require_gradients(model);

    const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
    const std::size_t n_samples = dataset.size();

    // Clean references, computed once per sample and shared by all losses.
    std::vector<LossReferences> refs(n_samples);
    parallel_chunks((n_samples + chunk - 1) / chunk, options.workers, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(n_samples, begin + chunk);
        std::vector<std::vector<double>> inputs;
        for (std::size_t j = begin; j < end; ++j) {
            const auto img = dataset.image(j);
            inputs.emplace_back(img.begin(), img.end());
        }
        const auto logits = model.predict_batch(inputs);
        for (std::size_t j = begin; j < end; ++j) {
            check_finite(logits[j - begin], "clean prediction");
            refs[j] = {argmax(logits[j - begin]), dataset.labels[j]};
        }
    });

    // Deterministic attacks are evaluated on draw 0 and replicated afterwards.
    auto replicated = [&](const WorkUnit& u) {
        const auto* attack = std::get_if<AttackSpec>(&perturbations[u.dist]);
        return attack && attack->deterministic() && u.draw > 0;
    };
    const std::vector<WorkUnit> units = plan_work(index);

    parallel_chunks((units.size() + chunk - 1) / chunk, options.workers, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(units.size(), begin + chunk);
        std::vector<const WorkUnit*> todo;
        std::vector<std::vector<double>> inputs;
        for (std::size_t u = begin; u < end; ++u) {
            const WorkUnit& unit = units[u];
            if (replicated(unit)) continue;
            const auto x = dataset.image(unit.sample);
            std::vector<double> perturbed = std::visit(
                [&](const auto& p) -> std::vector<double> {
                    using T = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, CorruptionSpec>) {
                        return apply(p, sample_params(p, unit.seed), x);
                    } else {
                        const std::size_t label = refs[unit.sample].true_label;
                        switch (p.method) {
                            case AttackMethod::fgsm: return fgsm(model, x, label, p.epsilon);
                            case AttackMethod::pgd: return pgd(model, x, label, p, unit.seed);
                            case AttackMethod::deepfool: return deepfool(model, x, p).adversarial;
                        }
                        throw ConfigError("unknown attack");
                    }
                },
                perturbations[unit.dist]);
            todo.push_back(&unit);
            inputs.push_back(std::move(perturbed));
        }
        if (inputs.empty()) return;
        const auto logits = model.predict_batch(inputs);
        for (std::size_t n = 0; n < todo.size(); ++n) {
            const WorkUnit& unit = *todo[n];
            check_finite(logits[n], "perturbed prediction");
            for (std::size_t i = 0; i < config.losses.size(); ++i) {
                const double v = evaluate(config.losses[i], logits[n], refs[unit.sample]);
                if (!std::isfinite(v)) {
                    throw NumericError("loss '" + config.losses[i].name + "' is not finite");
                }
                tensor.write(i, unit.sample, unit.dist, unit.draw, v);
            }
        }
    });

    for (const auto& unit : units) {
        if (!replicated(unit)) continue;
        for (std::size_t i = 0; i < config.losses.size(); ++i) {
            tensor.write(i, unit.sample, unit.dist, unit.draw, tensor.at(i, unit.sample, unit.dist, 0));
        }
    }
    if (!tensor.complete()) throw RuntimeError("build_tensor: tensor incomplete after population");
    return tensor;
}

double rho_hat(const RiskTensor& t, const Selection& selection) {
    return mean_of(filter(t, selection));
}

}  // namespace krisk
