// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"
#include "krisk/attacks.hpp"
#include "krisk/corruptions.hpp"

namespace krisk {

enum class DistributionKind { corruption, adversarial };

[[nodiscard]] std::string_view to_string(DistributionKind kind) noexcept;

/// One perturbation distribution D_k: a corruption family or an attack with
/// its parameter record and master seed. `name` identifies it on the tensor's
/// distribution axis.
struct DistributionDescriptor {
    std::string name;
    std::string family;
    DistributionKind kind = DistributionKind::corruption;
    nlohmann::json params = nlohmann::json::object();
    std::uint64_t master_seed = 0;

    /// Checks that `family` is known, `kind` matches it, and `params`
    /// validates against the family schema. Throws ConfigError.
    void validate() const;

    [[nodiscard]] static DistributionDescriptor from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;

    friend bool operator==(const DistributionDescriptor&, const DistributionDescriptor&) = default;
};

/// Builds a descriptor from a family name and parameter record; the kind is
/// inferred and params are normalized to canonical form.
[[nodiscard]] DistributionDescriptor make_descriptor(std::string name, std::string_view family,
                                                     const nlohmann::json& params,
                                                     std::uint64_t master_seed);

/// The typed perturbation behind a descriptor.
using Perturbation = std::variant<CorruptionSpec, AttackSpec>;

/// Resolves a validated descriptor; corruption specs get `geometry`.
[[nodiscard]] Perturbation resolve(const DistributionDescriptor& d, const ImageGeometry& geometry);

}  // namespace krisk
