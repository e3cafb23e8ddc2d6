// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace krisk {

enum class LossKind { class_change, misclassification, severity, cross_entropy };
enum class LossReference { clean_prediction, true_label };

[[nodiscard]] std::string_view to_string(LossKind kind) noexcept;

/// Square cost matrix: cost[true][predicted], zero diagonal, nonnegative.
class CostMatrix {
public:
    CostMatrix() = default;
    explicit CostMatrix(std::vector<std::vector<double>> rows);

    [[nodiscard]] static CostMatrix from_csv(const std::filesystem::path& path);
    [[nodiscard]] static CostMatrix parse_csv(std::string_view text);

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] double operator()(std::size_t truth, std::size_t predicted) const {
        return values_[truth * n_ + predicted];
    }
    [[nodiscard]] std::vector<std::vector<double>> rows() const;

private:
    std::size_t n_ = 0;
    std::vector<double> values_;
};

/// Loss L_i mapping logits to a nonnegative damage value. Indicator losses
/// are oriented so that 1 means an error (larger is worse).
struct LossSpec {
    std::string name;
    LossKind kind = LossKind::class_change;
    LossReference reference = LossReference::clean_prediction;
    CostMatrix costs;  // severity only

    [[nodiscard]] static LossSpec from_json(const nlohmann::json& j,
                                            const std::filesystem::path& base_dir = {});
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Reference information for one sample.
struct LossReferences {
    std::size_t clean_class = 0;
    std::size_t true_label = 0;
};

/// Throws DataError on shape or range violations.
[[nodiscard]] double evaluate(const LossSpec& spec, std::span<const double> logits,
                              const LossReferences& refs);

}  // namespace krisk
