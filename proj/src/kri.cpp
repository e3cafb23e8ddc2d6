// SPDX-License-Identifier: Apache-2.0
#include "krisk/kri.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include "json_util.hpp"

namespace krisk {

using nlohmann::json;

namespace {

constexpr double kWeightSumTolerance = 1e-9;

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> optional_strings(const json& j, const std::string& key, const std::string& what) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    if (it->is_string()) return {it->get<std::string>()};
    if (!it->is_array()) throw ConfigError(what + "." + key + ": expected a string or an array");
    for (const auto& v : *it) out.push_back(detail::as_string(v, what + "." + key));
    return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

Selection KriDefinition::selection(const TensorIndex& index) const {
    for (const auto& f : families) {
        const bool present = std::any_of(index.distributions.begin(), index.distributions.end(),
                                         [&](const DistributionDescriptor& d) { return d.family == f; });
        if (!present) throw ConfigError("KRI '" + name + "': family '" + f + "' is absent from the tensor");
    }
    for (const auto& n : distributions) {
        const bool present = std::any_of(index.distributions.begin(), index.distributions.end(),
                                         [&](const DistributionDescriptor& d) { return d.name == n; });
        if (!present) throw ConfigError("KRI '" + name + "': distribution '" + n + "' is absent from the tensor");
    }
    Selection sel;
    if (!losses.empty()) sel.losses = losses;
    if (!samples.empty()) sel.samples = samples;
    sel.distributions = [families = families, names = distributions, kind = kind](const DistributionDescriptor& d) {
        if (kind && d.kind != *kind) return false;
        if (families.empty() && names.empty()) return true;
        return contains(families, d.family) || contains(names, d.name);
    };
    return sel;
}

KriDefinition KriDefinition::from_json(const json& j) {
    detail::check_keys(j, {"name", "loss", "losses", "families", "distributions", "kind", "samples", "tensor"},
                       "kri");
    KriDefinition def;
    def.name = detail::as_string(detail::require_key(j, "name", "kri"), "kri.name");
    const std::string what = "kri '" + def.name + "'";
    if (j.contains("loss") && j.contains("losses")) throw ConfigError(what + ": give loss or losses, not both");
    def.losses = optional_strings(j, j.contains("loss") ? "loss" : "losses", what);
    def.families = optional_strings(j, "families", what);
    def.distributions = optional_strings(j, "distributions", what);
    def.samples = optional_strings(j, "samples", what);
    if (auto it = j.find("kind"); it != j.end()) {
        const std::string kind = detail::as_string(*it, what + ".kind");
        if (kind == "corruption") def.kind = DistributionKind::corruption;
        else if (kind == "adversarial") def.kind = DistributionKind::adversarial;
        else throw ConfigError(what + ": unknown kind '" + kind + "'");
    }
    if (auto it = j.find("tensor"); it != j.end()) def.tensor = detail::as_uint(*it, what + ".tensor");
    return def;
}

json KriDefinition::to_json() const {
    json j{{"name", name}};
    if (!losses.empty()) j["losses"] = losses;
    if (!families.empty()) j["families"] = families;
    if (!distributions.empty()) j["distributions"] = distributions;
    if (kind) j["kind"] = std::string(to_string(*kind));
    if (!samples.empty()) j["samples"] = samples;
    if (tensor != 0) j["tensor"] = tensor;
    return j;
}

std::vector<KriValue> compute_kris(std::span<const RiskTensor> tensors,
                                   const std::vector<KriDefinition>& defs) {
    if (defs.empty()) throw ConfigError("no KRI definitions");
    std::set<std::string> names;
    std::vector<KriValue> out;
    out.reserve(defs.size());
    for (const auto& def : defs) {
        if (!names.insert(def.name).second) throw ConfigError("duplicate KRI name '" + def.name + "'");
        if (def.tensor >= tensors.size()) {
            throw ConfigError("KRI '" + def.name + "': tensor " + std::to_string(def.tensor) + " not supplied");
        }
        const RiskTensor& t = tensors[def.tensor];
        const RiskTensor sub = filter(t, def.selection(t.index()));
        if (!sub.complete()) throw DataError("KRI '" + def.name + "': selected cells are incomplete");
        out.push_back({def.name, mean_of(sub), sub.size()});
    }
    return out;
}

std::vector<KriValue> compute_kris(const RiskTensor& t, const std::vector<KriDefinition>& defs) {
    return compute_kris(std::span<const RiskTensor>(&t, 1), defs);
}

void validate_weights(const Weights& weights, const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (!weights.contains(n)) throw ConfigError("weights: missing weight for KRI '" + n + "'");
    }
    double sum = 0.0;
    for (const auto& [name, w] : weights) {
        if (!contains(names, name)) throw ConfigError("weights: no KRI named '" + name + "'");
        if (!std::isfinite(w) || w < 0.0) throw ConfigError("weights: '" + name + "' must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
        throw ConfigError("weights: sum is " + format_number(sum) + ", expected 1");
    }
}

Weights uniform_weights(const std::vector<std::string>& names) {
    Weights w;
    for (const auto& n : names) w[n] = 1.0 / static_cast<double>(names.size());
    return w;
}

double combine(const std::vector<KriValue>& kris, const Weights& weights) {
    std::vector<std::string> names;
    for (const auto& k : kris) names.push_back(k.name);
    validate_weights(weights, names);
    double total = 0.0;
    for (const auto& k : kris) total += weights.at(k.name) * k.value;
    return total;
}

KriReport make_report(const std::vector<KriValue>& kris, const Weights& weights, Provenance provenance) {
    KriReport report;
    report.final_risk = combine(kris, weights);
    for (const auto& k : kris) report.kris.push_back({k.name, k.value, weights.at(k.name), k.cells});
    report.provenance = std::move(provenance);
    return report;
}

json KriReport::to_json() const {
    json entries = json::array();
    for (const auto& e : kris) {
        entries.push_back({{"name", e.name}, {"value", e.value}, {"weight", e.weight}, {"cells", e.cells}});
    }
    return {{"kris", std::move(entries)},
            {"final_risk", final_risk},
            {"provenance",
             {{"tensor_sha256", provenance.tensor_sha256},
              {"config_sha256", provenance.config_sha256},
              {"model_id", provenance.model_id},
              {"generated_at", provenance.generated_at}}}};
}

KriReport KriReport::from_json(const json& j) {
    try {
        KriReport r;
        for (const auto& e : j.at("kris")) {
            r.kris.push_back({e.at("name").get<std::string>(), e.at("value").get<double>(),
                              e.at("weight").get<double>(), e.at("cells").get<std::size_t>()});
        }
        r.final_risk = j.at("final_risk").get<double>();
        const auto& p = j.at("provenance");
        r.provenance.tensor_sha256 = p.at("tensor_sha256").get<std::vector<std::string>>();
        r.provenance.config_sha256 = p.at("config_sha256").get<std::string>();
        r.provenance.model_id = p.at("model_id").get<std::string>();
        r.provenance.generated_at = p.at("generated_at").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed KRI report: ") + e.what());
    }
}

std::string render_csv(const KriReport& report) {
    std::string out = "name,value,weight\n";
    for (const auto& e : report.kris) {
        out += e.name + "," + format_number(e.value) + "," + format_number(e.weight) + "\n";
    }
    out += "final_risk," + format_number(report.final_risk) + ",1\n";
    return out;
}

std::string render_plotdata(std::span<const KriReport> reports) {
    std::vector<std::tuple<std::string, std::string, double>> rows;
    for (const auto& r : reports) {
        for (const auto& e : r.kris) rows.emplace_back(r.provenance.model_id, e.name, e.value);
        rows.emplace_back(r.provenance.model_id, "final_risk", r.final_risk);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    std::string out = "group\tlabel\tvalue\n";
    for (const auto& [group, label, value] : rows) {
        out += group + "\t" + label + "\t" + format_number(value) + "\n";
    }
    return out;
}

void emit_report(const KriReport& report, ReportFormat format, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write report " + path.string());
    switch (format) {
        case ReportFormat::json: out << report.to_json().dump(2) << '\n'; break;
        case ReportFormat::csv: out << render_csv(report); break;
        case ReportFormat::plotdata: out << render_plotdata(std::span<const KriReport>(&report, 1)); break;
    }
    if (!out) throw DataError("write failed for report " + path.string());
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw RuntimeError("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace krisk
