// SPDX-License-Identifier: Apache-2.0
#include "krisk/distribution.hpp"

#include "json_util.hpp"
#include "krisk/error.hpp"

namespace krisk {

using nlohmann::json;

std::string_view to_string(DistributionKind kind) noexcept {
    return kind == DistributionKind::corruption ? "corruption" : "adversarial";
}

namespace {

json canonical_params(std::string_view family, const json& params, DistributionKind& kind) {
    CorruptionFamily cf;
    if (parse_corruption_family(family, cf)) {
        kind = DistributionKind::corruption;
        return to_json(parse_corruption_params(cf, params));
    }
    AttackMethod am;
    if (parse_attack_method(family, am)) {
        kind = DistributionKind::adversarial;
        return AttackSpec::from_json(am, params).params_json();
    }
    throw ConfigError("unknown perturbation family '" + std::string(family) + "'");
}

}  // namespace

void DistributionDescriptor::validate() const {
    if (name.empty()) throw ConfigError("distribution: empty name");
    DistributionKind inferred{};
    (void)canonical_params(family, params, inferred);
    if (inferred != kind) {
        throw ConfigError("distribution '" + name + "': kind does not match family '" + family + "'");
    }
}

DistributionDescriptor make_descriptor(std::string name, std::string_view family,
                                       const json& params, std::uint64_t master_seed) {
    DistributionDescriptor d;
    d.name = std::move(name);
    d.family = std::string(family);
    d.params = canonical_params(family, params, d.kind);
    d.master_seed = master_seed;
    d.validate();
    return d;
}

DistributionDescriptor DistributionDescriptor::from_json(const json& j) {
    detail::check_keys(j, {"name", "family", "kind", "params", "master_seed"}, "distribution descriptor");
    DistributionDescriptor d;
    d.name = detail::as_string(detail::require_key(j, "name", "distribution"), "distribution.name");
    d.family = detail::as_string(detail::require_key(j, "family", "distribution"), "distribution.family");
    const std::string kind = detail::as_string(detail::require_key(j, "kind", "distribution"), "distribution.kind");
    if (kind == "corruption") d.kind = DistributionKind::corruption;
    else if (kind == "adversarial") d.kind = DistributionKind::adversarial;
    else throw ConfigError("distribution '" + d.name + "': unknown kind '" + kind + "'");
    d.params = detail::require_key(j, "params", "distribution");
    d.master_seed = detail::as_uint(detail::require_key(j, "master_seed", "distribution"), "distribution.master_seed");
    d.validate();
    return d;
}

json DistributionDescriptor::to_json() const {
    return {{"name", name}, {"family", family}, {"kind", std::string(krisk::to_string(kind))},
            {"params", params}, {"master_seed", master_seed}};
}

Perturbation resolve(const DistributionDescriptor& d, const ImageGeometry& geometry) {
    CorruptionFamily cf;
    if (parse_corruption_family(d.family, cf)) {
        CorruptionSpec spec{parse_corruption_params(cf, d.params), d.master_seed, geometry};
        spec.validate();
        return spec;
    }
    AttackMethod am;
    if (parse_attack_method(d.family, am)) {
        AttackSpec spec = AttackSpec::from_json(am, d.params);
        spec.master_seed = d.master_seed;
        return spec;
    }
    throw ConfigError("unknown perturbation family '" + d.family + "'");
}

}  // namespace krisk
