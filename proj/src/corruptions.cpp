// SPDX-License-Identifier: Apache-2.0
#include "krisk/corruptions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "json_util.hpp"
#include "krisk/error.hpp"
#include "krisk/rng.hpp"

namespace krisk {

namespace {

using detail::check_keys;
using detail::get_number;
using detail::get_range;
using detail::range_json;
using nlohmann::json;

constexpr std::array<std::pair<CorruptionFamily, std::string_view>, 9> kFamilyNames{{
    {CorruptionFamily::brightness, "brightness"},
    {CorruptionFamily::contrast, "contrast"},
    {CorruptionFamily::shadow, "shadow"},
    {CorruptionFamily::rotation, "rotation"},
    {CorruptionFamily::gaussian, "gaussian"},
    {CorruptionFamily::uniform, "uniform"},
    {CorruptionFamily::salt_pepper, "salt_pepper"},
    {CorruptionFamily::fog, "fog"},
    {CorruptionFamily::rain, "rain"},
}};

double clip01(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

double deg_to_rad(double deg) noexcept { return deg * (std::numbers::pi / 180.0); }

void require_within(const Range& r, double lo, double hi, const std::string& what) {
    if (r.lo < lo || r.hi > hi) {
        throw ConfigError(what + ": range must lie within [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
    }
}

void require_nonnegative(double v, const std::string& what) {
    if (v < 0.0) throw ConfigError(what + ": must be >= 0");
}

CorruptionParams parse_rain(const json& j, const std::string& what) {
    check_keys(j, {"drops", "delta", "length", "slant"}, what);
    RainParams p;
    const Range drops = get_range(j, "drops", what);
    if (drops.lo < 0 || drops.lo != std::floor(drops.lo) || drops.hi != std::floor(drops.hi)) {
        throw ConfigError(what + ".drops: expected nonnegative integers");
    }
    p.min_drops = static_cast<std::uint32_t>(drops.lo);
    p.max_drops = static_cast<std::uint32_t>(drops.hi);
    p.delta = get_range(j, "delta", what);
    require_nonnegative(p.delta.lo, what + ".delta");
    p.length = j.contains("length") ? get_range(j, "length", what) : Range{1.0, 1.0};
    require_nonnegative(p.length.lo, what + ".length");
    p.slant = j.contains("slant") ? get_range(j, "slant", what) : Range{};
    require_within(p.slant, -90.0, 90.0, what + ".slant");
    return p;
}

// Bilinear read with out-of-frame coordinates clamped to the nearest edge pixel.
double sample_bilinear(std::span<const double> plane, std::size_t w, std::size_t h, double sx,
                       double sy) noexcept {
    const double fx0 = std::floor(sx);
    const double fy0 = std::floor(sy);
    const double fx = sx - fx0;
    const double fy = sy - fy0;
    auto clamp_index = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
    };
    const std::size_t x0 = clamp_index(fx0, w);
    const std::size_t x1 = clamp_index(fx0 + 1.0, w);
    const std::size_t y0 = clamp_index(fy0, h);
    const std::size_t y1 = clamp_index(fy0 + 1.0, h);
    const double v00 = plane[y0 * w + x0];
    const double v10 = plane[y0 * w + x1];
    const double v01 = plane[y1 * w + x0];
    const double v11 = plane[y1 * w + x1];
    return (1.0 - fx) * (1.0 - fy) * v00 + fx * (1.0 - fy) * v10 + (1.0 - fx) * fy * v01 +
           fx * fy * v11;
}

std::vector<double> rotate(const ImageGeometry& g, double degrees, std::span<const double> x) {
    const std::size_t w = g.width;
    const std::size_t h = g.height;
    const double phi = deg_to_rad(degrees);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    std::vector<double> out(x.size());
    for (std::size_t ch = 0; ch < g.channels; ++ch) {
        const auto plane = x.subspan(ch * g.plane(), g.plane());
        for (std::size_t yi = 0; yi < h; ++yi) {
            for (std::size_t xi = 0; xi < w; ++xi) {
                const double dx = static_cast<double>(xi) - cx;
                const double dy = static_cast<double>(yi) - cy;
                // inverse map: output pixel reads from the source rotated by -phi
                const double sx = c * dx + s * dy + cx;
                const double sy = -s * dx + c * dy + cy;
                out[ch * g.plane() + yi * w + xi] = clip01(sample_bilinear(plane, w, h, sx, sy));
            }
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(CorruptionFamily family) noexcept {
    for (const auto& [f, name] : kFamilyNames) {
        if (f == family) return name;
    }
    return "unknown";
}

bool parse_corruption_family(std::string_view name, CorruptionFamily& out) noexcept {
    for (const auto& [f, n] : kFamilyNames) {
        if (n == name) {
            out = f;
            return true;
        }
    }
    return false;
}

CorruptionFamily family_of(const CorruptionParams& params) noexcept {
    return std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BrightnessParams>) return CorruptionFamily::brightness;
            else if constexpr (std::is_same_v<T, ContrastParams>) return CorruptionFamily::contrast;
            else if constexpr (std::is_same_v<T, ShadowParams>) return CorruptionFamily::shadow;
            else if constexpr (std::is_same_v<T, RotationParams>) return CorruptionFamily::rotation;
            else if constexpr (std::is_same_v<T, GaussianParams>) return CorruptionFamily::gaussian;
            else if constexpr (std::is_same_v<T, UniformParams>) return CorruptionFamily::uniform;
            else if constexpr (std::is_same_v<T, SaltPepperParams>) return CorruptionFamily::salt_pepper;
            else if constexpr (std::is_same_v<T, FogParams>) return CorruptionFamily::fog;
            else return CorruptionFamily::rain;
        },
        params);
}

CorruptionParams parse_corruption_params(CorruptionFamily family, const json& j) {
    const std::string what = std::string(to_string(family)) + " params";
    switch (family) {
        case CorruptionFamily::brightness: {
            check_keys(j, {"beta"}, what);
            BrightnessParams p{get_range(j, "beta", what)};
            require_within(p.beta, -1.0, 1.0, what + ".beta");
            return p;
        }
        case CorruptionFamily::contrast: {
            check_keys(j, {"gamma"}, what);
            ContrastParams p{get_range(j, "gamma", what)};
            require_nonnegative(p.gamma.lo, what + ".gamma");
            return p;
        }
        case CorruptionFamily::shadow: {
            check_keys(j, {"factor"}, what);
            ShadowParams p{get_range(j, "factor", what)};
            if (p.factor.lo <= 0.0 || p.factor.hi > 1.0) {
                throw ConfigError(what + ".factor: range must lie within (0, 1]");
            }
            return p;
        }
        case CorruptionFamily::rotation: {
            check_keys(j, {"degrees"}, what);
            RotationParams p{get_range(j, "degrees", what)};
            require_within(p.degrees, -180.0, 180.0, what + ".degrees");
            return p;
        }
        case CorruptionFamily::gaussian: {
            check_keys(j, {"sigma"}, what);
            GaussianParams p{get_number(j, "sigma", what)};
            require_nonnegative(p.sigma, what + ".sigma");
            return p;
        }
        case CorruptionFamily::uniform: {
            check_keys(j, {"amplitude"}, what);
            UniformParams p{get_number(j, "amplitude", what)};
            require_nonnegative(p.amplitude, what + ".amplitude");
            return p;
        }
        case CorruptionFamily::salt_pepper: {
            check_keys(j, {"p"}, what);
            SaltPepperParams p{get_number(j, "p", what)};
            if (p.p < 0.0 || p.p > 1.0) throw ConfigError(what + ".p: must lie within [0, 1]");
            return p;
        }
        case CorruptionFamily::fog: {
            check_keys(j, {"t"}, what);
            FogParams p{get_range(j, "t", what)};
            require_within(p.t, 0.0, 1.0, what + ".t");
            return p;
        }
        case CorruptionFamily::rain:
            return parse_rain(j, what);
    }
    throw ConfigError("unknown corruption family");
}

json to_json(const CorruptionParams& params) {
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BrightnessParams>) {
                return {{"beta", range_json(p.beta)}};
            } else if constexpr (std::is_same_v<T, ContrastParams>) {
                return {{"gamma", range_json(p.gamma)}};
            } else if constexpr (std::is_same_v<T, ShadowParams>) {
                return {{"factor", range_json(p.factor)}};
            } else if constexpr (std::is_same_v<T, RotationParams>) {
                return {{"degrees", range_json(p.degrees)}};
            } else if constexpr (std::is_same_v<T, GaussianParams>) {
                return {{"sigma", p.sigma}};
            } else if constexpr (std::is_same_v<T, UniformParams>) {
                return {{"amplitude", p.amplitude}};
            } else if constexpr (std::is_same_v<T, SaltPepperParams>) {
                return {{"p", p.p}};
            } else if constexpr (std::is_same_v<T, FogParams>) {
                return {{"t", range_json(p.t)}};
            } else {
                return {{"drops", json::array({p.min_drops, p.max_drops})},
                        {"delta", range_json(p.delta)},
                        {"length", range_json(p.length)},
                        {"slant", range_json(p.slant)}};
            }
        },
        params);
}

void CorruptionSpec::validate() const {
    // Round-tripping through the parser applies every domain check.
    (void)parse_corruption_params(family(), to_json(params));
    if (geometry.pixels() == 0) throw ConfigError("corruption spec: empty image geometry");
}

ParamDraw sample_params(const CorruptionSpec& spec, std::uint64_t draw_seed) {
    SplitMix64 rng(draw_seed);
    auto uniform = [&rng](const Range& r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); };
    const auto& g = spec.geometry;
    return std::visit(
        [&](const auto& p) -> ParamDraw {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BrightnessParams>) {
                return ScalarDraw{uniform(p.beta)};
            } else if constexpr (std::is_same_v<T, ContrastParams>) {
                return ScalarDraw{uniform(p.gamma)};
            } else if constexpr (std::is_same_v<T, RotationParams>) {
                return ScalarDraw{uniform(p.degrees)};
            } else if constexpr (std::is_same_v<T, FogParams>) {
                return ScalarDraw{uniform(p.t)};
            } else if constexpr (std::is_same_v<T, ShadowParams>) {
                ShadowDraw d;
                d.factor = uniform(p.factor);
                d.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
                d.x = rng.uniform(0.0, static_cast<double>(g.width));
                d.y = rng.uniform(0.0, static_cast<double>(g.height));
                return d;
            } else if constexpr (std::is_same_v<T, RainParams>) {
                RainDraw d;
                d.delta = uniform(p.delta);
                const std::uint32_t k =
                    p.min_drops + static_cast<std::uint32_t>(rng.below(p.max_drops - p.min_drops + 1ull));
                d.segments.reserve(k);
                for (std::uint32_t i = 0; i < k; ++i) {
                    RainSegment s;
                    s.x = rng.uniform(0.0, static_cast<double>(g.width));
                    s.y = rng.uniform(0.0, static_cast<double>(g.height));
                    s.length = uniform(p.length);
                    s.slant = deg_to_rad(uniform(p.slant));
                    d.segments.push_back(s);
                }
                return d;
            } else {
                return NoiseDraw{rng()};
            }
        },
        spec.params);
}

std::vector<double> apply(const CorruptionSpec& spec, const ParamDraw& draw,
                          std::span<const double> image) {
    const ImageGeometry& g = spec.geometry;
    if (image.size() != g.pixels()) {
        throw DataError("corruption: image has " + std::to_string(image.size()) +
                        " values, geometry expects " + std::to_string(g.pixels()));
    }
    require_unit_range(image, "corruption input");

    auto wrong_draw = [&] {
        return ConfigError("corruption: parameter draw does not match family " +
                           std::string(to_string(spec.family())));
    };
    std::vector<double> out(image.begin(), image.end());

    switch (spec.family()) {
        case CorruptionFamily::brightness: {
            const auto* d = std::get_if<ScalarDraw>(&draw);
            if (!d) throw wrong_draw();
            for (auto& v : out) v = clip01(v + d->value);
            break;
        }
        case CorruptionFamily::contrast: {
            const auto* d = std::get_if<ScalarDraw>(&draw);
            if (!d) throw wrong_draw();
            // (x - 0.5)γ + 0.5 rearranged so that γ = 1 is an exact identity
            const double offset = 0.5 * (1.0 - d->value);
            for (auto& v : out) v = clip01(d->value * v + offset);
            break;
        }
        case CorruptionFamily::fog: {
            const auto* d = std::get_if<ScalarDraw>(&draw);
            if (!d) throw wrong_draw();
            for (auto& v : out) v = clip01((1.0 - d->value) * v + d->value);
            break;
        }
        case CorruptionFamily::rotation: {
            const auto* d = std::get_if<ScalarDraw>(&draw);
            if (!d) throw wrong_draw();
            out = rotate(g, d->value, image);
            break;
        }
        case CorruptionFamily::shadow: {
            const auto* d = std::get_if<ShadowDraw>(&draw);
            if (!d) throw wrong_draw();
            const double nx = std::cos(d->angle);
            const double ny = std::sin(d->angle);
            for (std::size_t ch = 0; ch < g.channels; ++ch) {
                for (std::size_t yi = 0; yi < g.height; ++yi) {
                    for (std::size_t xi = 0; xi < g.width; ++xi) {
                        const double side = (static_cast<double>(xi) - d->x) * nx +
                                            (static_cast<double>(yi) - d->y) * ny;
                        if (side > 0.0) {
                            auto& v = out[ch * g.plane() + yi * g.width + xi];
                            v = clip01(v * d->factor);
                        }
                    }
                }
            }
            break;
        }
        case CorruptionFamily::gaussian: {
            const auto* d = std::get_if<NoiseDraw>(&draw);
            if (!d) throw wrong_draw();
            const double sigma = std::get<GaussianParams>(spec.params).sigma;
            SplitMix64 rng(d->seed);
            for (auto& v : out) v = clip01(v + sigma * rng.normal());
            break;
        }
        case CorruptionFamily::uniform: {
            const auto* d = std::get_if<NoiseDraw>(&draw);
            if (!d) throw wrong_draw();
            const double u = std::get<UniformParams>(spec.params).amplitude;
            SplitMix64 rng(d->seed);
            for (auto& v : out) v = clip01(v + u * (2.0 * rng.uniform() - 1.0));
            break;
        }
        case CorruptionFamily::salt_pepper: {
            const auto* d = std::get_if<NoiseDraw>(&draw);
            if (!d) throw wrong_draw();
            const double p = std::get<SaltPepperParams>(spec.params).p;
            SplitMix64 rng(d->seed);
            for (auto& v : out) {
                if (rng.uniform() < p) v = rng.below(2) == 0 ? 0.0 : 1.0;
            }
            break;
        }
        case CorruptionFamily::rain: {
            const auto* d = std::get_if<RainDraw>(&draw);
            if (!d) throw wrong_draw();
            std::vector<bool> wet(g.plane(), false);
            for (const auto& s : d->segments) {
                const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(s.length)));
                for (std::size_t t = 0; t <= steps; ++t) {
                    const double frac = static_cast<double>(t) / static_cast<double>(steps);
                    const double px = std::round(s.x + frac * s.length * std::sin(s.slant));
                    const double py = std::round(s.y + frac * s.length * std::cos(s.slant));
                    if (px >= 0.0 && py >= 0.0 && px < g.width && py < g.height) {
                        wet[static_cast<std::size_t>(py) * g.width + static_cast<std::size_t>(px)] = true;
                    }
                }
            }
            for (std::size_t ch = 0; ch < g.channels; ++ch) {
                for (std::size_t i = 0; i < g.plane(); ++i) {
                    if (wet[i]) {
                        auto& v = out[ch * g.plane() + i];
                        v = clip01(v + d->delta);
                    }
                }
            }
            break;
        }
    }
    return out;
}

}  // namespace krisk
