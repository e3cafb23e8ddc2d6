// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "krisk/tensor.hpp"

namespace krisk {

/// A named filter over a risk tensor whose cell mean is one key risk
/// indicator. Empty lists select the whole axis; `families` and
/// `distributions` are alternatives that are OR-ed together when both are set.
struct KriDefinition {
    std::string name;
    std::vector<std::string> losses;
    std::vector<std::string> families;
    std::vector<std::string> distributions;
    std::optional<DistributionKind> kind;
    std::vector<std::string> samples;
    std::size_t tensor = 0;  // which tensor file, when several are combined

    /// Selection for `index`. Throws ConfigError if a named family or
    /// distribution does not occur in it.
    [[nodiscard]] Selection selection(const TensorIndex& index) const;

    [[nodiscard]] static KriDefinition from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct KriValue {
    std::string name;
    double value = 0.0;
    std::size_t cells = 0;
};

using Weights = std::map<std::string, double>;

/// Mean over the filtered cells of each definition. Throws ConfigError for an
/// empty filter and DataError for NaN cells.
[[nodiscard]] std::vector<KriValue> compute_kris(const RiskTensor& t,
                                                 const std::vector<KriDefinition>& defs);
/// Same, with each definition reading tensors[def.tensor].
[[nodiscard]] std::vector<KriValue> compute_kris(std::span<const RiskTensor> tensors,
                                                 const std::vector<KriDefinition>& defs);

/// Checks that `weights` covers exactly `names`, is nonnegative and sums to 1
/// within 1e-9. Throws ConfigError.
void validate_weights(const Weights& weights, const std::vector<std::string>& names);
/// Equal weights 1/n.
[[nodiscard]] Weights uniform_weights(const std::vector<std::string>& names);

/// Final risk: sum of weight * value in KRI order.
[[nodiscard]] double combine(const std::vector<KriValue>& kris, const Weights& weights);

struct Provenance {
    std::vector<std::string> tensor_sha256;
    std::string config_sha256;
    std::string model_id;
    std::string generated_at;  // ISO-8601 UTC

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct KriReport {
    struct Entry {
        std::string name;
        double value = 0.0;
        double weight = 0.0;
        std::size_t cells = 0;
        friend bool operator==(const Entry&, const Entry&) = default;
    };
    std::vector<Entry> kris;
    double final_risk = 0.0;
    Provenance provenance;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static KriReport from_json(const nlohmann::json& j);

    friend bool operator==(const KriReport&, const KriReport&) = default;
};

[[nodiscard]] KriReport make_report(const std::vector<KriValue>& kris, const Weights& weights,
                                    Provenance provenance);

enum class ReportFormat { json, csv, plotdata };

/// CSV: header "name,value,weight", one row per KRI, then a "final_risk" row.
[[nodiscard]] std::string render_csv(const KriReport& report);
/// Tab-separated group/label/value rows sorted by (group, label); the group is
/// the model id and each report contributes its KRIs plus "final_risk".
[[nodiscard]] std::string render_plotdata(std::span<const KriReport> reports);

/// Writes one report in `format` to `path`. Throws DataError when the path
/// is not writable.
void emit_report(const KriReport& report, ReportFormat format, const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a byte buffer.
[[nodiscard]] std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace krisk
