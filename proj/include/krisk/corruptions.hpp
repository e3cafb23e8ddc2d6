// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "krisk/image.hpp"

namespace krisk {

enum class CorruptionFamily {
    brightness,
    contrast,
    shadow,
    rotation,
    gaussian,
    uniform,
    salt_pepper,
    fog,
    rain,
};

[[nodiscard]] std::string_view to_string(CorruptionFamily family) noexcept;
/// Returns false for names that are not corruption families (e.g. attacks).
[[nodiscard]] bool parse_corruption_family(std::string_view name, CorruptionFamily& out) noexcept;

/// Closed interval sampled uniformly.
struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct BrightnessParams { Range beta; };
struct ContrastParams { Range gamma{1.0, 1.0}; };
struct ShadowParams { Range factor{1.0, 1.0}; };
struct RotationParams { Range degrees; };
struct GaussianParams { double sigma = 0.0; };
struct UniformParams { double amplitude = 0.0; };
struct SaltPepperParams { double p = 0.0; };
struct FogParams { Range t; };
struct RainParams {
    std::uint32_t min_drops = 0;
    std::uint32_t max_drops = 0;
    Range delta;
    Range length{1.0, 1.0};
    Range slant;  // degrees from vertical
};

using CorruptionParams =
    std::variant<BrightnessParams, ContrastParams, ShadowParams, RotationParams,
                 GaussianParams, UniformParams, SaltPepperParams, FogParams, RainParams>;

/// Parses and validates the family-specific parameter record. Unknown keys,
/// missing keys and out-of-domain values throw ConfigError.
[[nodiscard]] CorruptionParams parse_corruption_params(CorruptionFamily family,
                                                       const nlohmann::json& params);
/// Canonical JSON form; parse_corruption_params(to_json(p)) == p.
[[nodiscard]] nlohmann::json to_json(const CorruptionParams& params);
[[nodiscard]] CorruptionFamily family_of(const CorruptionParams& params) noexcept;

struct CorruptionSpec {
    CorruptionParams params;
    std::uint64_t master_seed = 0;
    ImageGeometry geometry;

    [[nodiscard]] CorruptionFamily family() const noexcept { return family_of(params); }
    /// Throws ConfigError on an invalid parameter record or empty geometry.
    void validate() const;
};

/// One sampled parameter set θ. Noise families carry a seed for their
/// per-pixel stream instead of the pixels themselves.
struct ScalarDraw { double value = 0.0; };  // β, γ, φ (degrees) or t
struct ShadowDraw {
    double factor = 1.0;
    double angle = 0.0;  // normal direction of the shadow edge, radians
    double x = 0.0;      // point on the edge, pixel coordinates
    double y = 0.0;
};
struct NoiseDraw { std::uint64_t seed = 0; };
struct RainSegment {
    double x = 0.0;
    double y = 0.0;
    double length = 0.0;
    double slant = 0.0;  // radians from vertical
};
struct RainDraw {
    double delta = 0.0;
    std::vector<RainSegment> segments;
};

using ParamDraw = std::variant<ScalarDraw, ShadowDraw, NoiseDraw, RainDraw>;

/// Deterministic function of (spec, draw_seed).
[[nodiscard]] ParamDraw sample_params(const CorruptionSpec& spec, std::uint64_t draw_seed);

/// Applies the corruption for a given draw; output is clipped to [0, 1].
/// Throws DataError for pixels outside [0, 1] or a geometry mismatch.
[[nodiscard]] std::vector<double> apply(const CorruptionSpec& spec, const ParamDraw& draw,
                                        std::span<const double> image);

}  // namespace krisk
