// SPDX-License-Identifier: Apache-2.0
// Small helpers for strict JSON schema checks. Internal to the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "krisk/corruptions.hpp"
#include "krisk/error.hpp"

namespace krisk::detail {

using nlohmann::json;

inline void require_object(const json& j, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
}

/// Rejects keys outside `allowed`.
inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& what) {
    require_object(j, what);
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError(what + ": unknown key '" + key + "'");
    }
}

inline const json& require_key(const json& j, const std::string& key, const std::string& what) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(what + ": missing key '" + key + "'");
    return *it;
}

inline double as_number(const json& v, const std::string& what) {
    if (!v.is_number()) throw ConfigError(what + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(what + ": expected a finite number");
    return d;
}

inline double get_number(const json& j, const std::string& key, const std::string& what) {
    return as_number(require_key(j, key, what), what + "." + key);
}

inline double get_number_or(const json& j, const std::string& key, double fallback,
                            const std::string& what) {
    auto it = j.find(key);
    return it == j.end() ? fallback : as_number(*it, what + "." + key);
}

inline std::uint64_t as_uint(const json& v, const std::string& what) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(what + ": expected a nonnegative integer");
}

inline std::string as_string(const json& v, const std::string& what) {
    if (!v.is_string()) throw ConfigError(what + ": expected a string");
    return v.get<std::string>();
}

/// A range is either [lo, hi] or a single number (degenerate range).
inline Range get_range(const json& j, const std::string& key, const std::string& what) {
    const json& v = require_key(j, key, what);
    const std::string name = what + "." + key;
    if (v.is_number()) {
        const double d = as_number(v, name);
        return {d, d};
    }
    if (!v.is_array() || v.size() != 2) throw ConfigError(name + ": expected [lo, hi]");
    Range r{as_number(v[0], name), as_number(v[1], name)};
    if (r.lo > r.hi) throw ConfigError(name + ": lo exceeds hi");
    return r;
}

inline json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace krisk::detail
