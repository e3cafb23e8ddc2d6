// SPDX-License-Identifier: Apache-2.0
#include "krisk/losses.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "krisk/error.hpp"
#include "krisk/models.hpp"

namespace krisk {

using nlohmann::json;

std::string_view to_string(LossKind kind) noexcept {
    switch (kind) {
        case LossKind::class_change: return "class_change";
        case LossKind::misclassification: return "misclassification";
        case LossKind::severity: return "severity";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    return "unknown";
}

CostMatrix::CostMatrix(std::vector<std::vector<double>> rows) : n_(rows.size()) {
    if (n_ == 0) throw ConfigError("cost matrix: empty");
    values_.reserve(n_ * n_);
    for (std::size_t r = 0; r < n_; ++r) {
        if (rows[r].size() != n_) throw ConfigError("cost matrix: not square");
        for (std::size_t c = 0; c < n_; ++c) {
            const double v = rows[r][c];
            if (!std::isfinite(v) || v < 0.0) throw ConfigError("cost matrix: entries must be finite and >= 0");
            if (r == c && v != 0.0) throw ConfigError("cost matrix: diagonal must be zero");
            values_.push_back(v);
        }
    }
}

CostMatrix CostMatrix::parse_csv(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ConfigError("cost matrix CSV: bad number '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return CostMatrix(std::move(rows));
}

CostMatrix CostMatrix::from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cost matrix " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

std::vector<std::vector<double>> CostMatrix::rows() const {
    std::vector<std::vector<double>> out(n_);
    for (std::size_t r = 0; r < n_; ++r) {
        out[r].assign(values_.begin() + r * n_, values_.begin() + (r + 1) * n_);
    }
    return out;
}

LossSpec LossSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
    detail::check_keys(j, {"name", "kind", "reference", "costs", "costs_csv"}, "loss");
    LossSpec spec;
    spec.name = detail::as_string(detail::require_key(j, "name", "loss"), "loss.name");
    const std::string kind = detail::as_string(detail::require_key(j, "kind", "loss"), "loss.kind");
    if (kind == "class_change") {
        spec.kind = LossKind::class_change;
        spec.reference = LossReference::clean_prediction;
    } else if (kind == "misclassification") {
        spec.kind = LossKind::misclassification;
        spec.reference = LossReference::true_label;
    } else if (kind == "severity") {
        spec.kind = LossKind::severity;
        spec.reference = LossReference::true_label;
    } else if (kind == "cross_entropy") {
        spec.kind = LossKind::cross_entropy;
        spec.reference = LossReference::true_label;
    } else {
        throw ConfigError("loss '" + spec.name + "': unknown kind '" + kind + "'");
    }
    if (auto it = j.find("reference"); it != j.end()) {
        if (spec.kind != LossKind::class_change && spec.kind != LossKind::misclassification) {
            throw ConfigError("loss '" + spec.name + "': reference applies only to indicator losses");
        }
        const std::string ref = detail::as_string(*it, "loss.reference");
        if (ref == "clean_prediction") spec.reference = LossReference::clean_prediction;
        else if (ref == "true_label") spec.reference = LossReference::true_label;
        else throw ConfigError("loss '" + spec.name + "': unknown reference '" + ref + "'");
    }
    const bool inline_costs = j.contains("costs");
    const bool csv_costs = j.contains("costs_csv");
    if (spec.kind == LossKind::severity) {
        if (inline_costs == csv_costs) {
            throw ConfigError("loss '" + spec.name + "': severity needs exactly one of costs, costs_csv");
        }
        if (inline_costs) {
            try {
                spec.costs = CostMatrix(j.at("costs").get<std::vector<std::vector<double>>>());
            } catch (const json::exception&) {
                throw ConfigError("loss '" + spec.name + "': costs must be a matrix of numbers");
            }
        } else {
            std::filesystem::path p = detail::as_string(j.at("costs_csv"), "loss.costs_csv");
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            spec.costs = CostMatrix::from_csv(p);
        }
    } else if (inline_costs || csv_costs) {
        throw ConfigError("loss '" + spec.name + "': costs apply only to severity losses");
    }
    return spec;
}

json LossSpec::to_json() const {
    json j{{"name", name}, {"kind", std::string(to_string(kind))}};
    if (kind == LossKind::class_change || kind == LossKind::misclassification) {
        j["reference"] = reference == LossReference::clean_prediction ? "clean_prediction" : "true_label";
    }
    if (kind == LossKind::severity) j["costs"] = costs.rows();
    return j;
}

double evaluate(const LossSpec& spec, std::span<const double> logits, const LossReferences& refs) {
    if (logits.empty()) throw DataError("loss '" + spec.name + "': empty logits");
    const std::size_t n_c = logits.size();
    if (refs.clean_class >= n_c || refs.true_label >= n_c) {
        throw DataError("loss '" + spec.name + "': reference class out of range");
    }
    switch (spec.kind) {
        case LossKind::class_change:
        case LossKind::misclassification: {
            const std::size_t ref =
                spec.reference == LossReference::clean_prediction ? refs.clean_class : refs.true_label;
            return argmax(logits) != ref ? 1.0 : 0.0;
        }
        case LossKind::severity:
            if (spec.costs.size() != n_c) {
                throw DataError("loss '" + spec.name + "': cost matrix is " +
                                std::to_string(spec.costs.size()) + "x" +
                                std::to_string(spec.costs.size()) + " but model has " +
                                std::to_string(n_c) + " classes");
            }
            return spec.costs(refs.true_label, argmax(logits));
        case LossKind::cross_entropy:
            return softmax_cross_entropy(logits, refs.true_label);
    }
    throw DataError("unknown loss kind");
}

}  // namespace krisk
