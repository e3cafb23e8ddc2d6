// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "krisk/dataset.hpp"
#include "krisk/kri.hpp"
#include "krisk/losses.hpp"
#include "krisk/models.hpp"
#include "krisk/tensor.hpp"

namespace krisk {

struct DatasetRef {
    std::filesystem::path path;
    std::vector<std::string> samples;  // empty: all
    std::optional<std::size_t> limit;  // first N samples after the id filter
};

/// Declarative scenario: data, perturbation distributions, losses, draw
/// count, seed, and KRI definitions with their weights. See
/// docs/scenario.md for the JSON schema.
struct ScenarioConfig {
    std::optional<DatasetRef> dataset;
    std::vector<DistributionDescriptor> distributions;
    std::vector<LossSpec> losses;
    std::uint32_t n_draws = 1;
    std::uint64_t master_seed = 0;
    std::vector<KriDefinition> kris;
    std::optional<Weights> weights;

    /// Unknown keys are rejected. Relative paths resolve against `base_dir`.
    [[nodiscard]] static ScenarioConfig from_json(const nlohmann::json& j,
                                                  const std::filesystem::path& base_dir = {});
    [[nodiscard]] static ScenarioConfig load(const std::filesystem::path& path);
    void validate() const;

    /// Applies the dataset reference (sample filter and limit).
    [[nodiscard]] LabeledDataset select_samples(const LabeledDataset& data) const;
    [[nodiscard]] TensorIndex tensor_index(const LabeledDataset& data) const;
    /// Weights if configured, else equal weights over the KRI names.
    [[nodiscard]] Weights resolved_weights() const;
};

/// One (sample, distribution, draw) evaluation; all losses share its inference.
struct WorkUnit {
    std::uint32_t sample = 0;
    std::uint32_t dist = 0;
    std::uint32_t draw = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const WorkUnit&, const WorkUnit&) = default;
};

/// Every work unit in (dist, draw, sample) lexicographic order with
/// seed = derive_seed(distribution master seed, dist, draw, sample).
[[nodiscard]] std::vector<WorkUnit> plan_work(const TensorIndex& index);

struct BuildOptions {
    std::size_t workers = 1;
    std::size_t chunk = 64;  // work units per inference batch
};

/// Populates R[i, j, k, l] = L_i(f_c(perturbed x_j)). Results are independent
/// of worker count and chunk size. Throws BlackBoxModelError for attacks on a
/// gradient-free model, DataError on geometry mismatch and NumericError on
/// non-finite model output.
[[nodiscard]] RiskTensor build_tensor(const Classifier& model, const LabeledDataset& dataset,
                                      const ScenarioConfig& config, const BuildOptions& options = {});

/// Monte Carlo estimate: mean over the selected cells in index order.
[[nodiscard]] double rho_hat(const RiskTensor& t, const Selection& selection = {});

}  // namespace krisk
