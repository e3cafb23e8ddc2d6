// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "krisk/distribution.hpp"
#include "krisk/error.hpp"

namespace krisk {

/// Axes of the risk tensor R[loss, sample, dist, draw].
enum class Axis : std::uint8_t { loss = 0, sample = 1, dist = 2, draw = 3 };

/// Axis set for aggregation.
class AxisSet {
public:
    constexpr AxisSet() = default;
    constexpr AxisSet(std::initializer_list<Axis> axes) {
        for (Axis a : axes) bits_ |= bit(a);
    }
    [[nodiscard]] static constexpr AxisSet all() {
        return {Axis::loss, Axis::sample, Axis::dist, Axis::draw};
    }
    [[nodiscard]] constexpr bool contains(Axis a) const { return (bits_ & bit(a)) != 0; }

private:
    static constexpr std::uint8_t bit(Axis a) { return std::uint8_t(1u << static_cast<unsigned>(a)); }
    std::uint8_t bits_ = 0;
};

/// Axis labels of a risk tensor. Every draw of every distribution shares
/// one draw count; tensors with different draw counts are kept in separate
/// files and combined at the KRI level.
struct TensorIndex {
    std::vector<std::string> loss_names;
    std::vector<std::string> sample_ids;
    std::vector<DistributionDescriptor> distributions;
    std::uint32_t n_draws = 0;

    [[nodiscard]] std::array<std::uint32_t, 4> dims() const;
    /// Nonempty axes, unique identifiers, valid descriptors. Throws ConfigError.
    void validate() const;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static TensorIndex from_json(const nlohmann::json& j);

    friend bool operator==(const TensorIndex&, const TensorIndex&) = default;
};

/// Cell selection for filter(). Unset members select the whole axis.
struct Selection {
    std::optional<std::vector<std::string>> losses;
    std::optional<std::vector<std::string>> samples;
    std::function<bool(const DistributionDescriptor&)> distributions;
};

/// Dense 4-D array of loss values, row-major with the loss axis slowest and
/// the draw axis fastest. NaN marks cells that have not been computed; every
/// other value is finite and nonnegative.
///
/// RiskTensor (float) is the stored form; aggregation produces MeanTensor
/// (double) so means are not rounded back to single precision.
template <typename Value>
class BasicRiskTensor {
    static_assert(std::is_floating_point_v<Value>);

public:
    using value_type = Value;

    /// All cells start as NaN. Throws ConfigError for an invalid index.
    explicit BasicRiskTensor(TensorIndex index);

    [[nodiscard]] const TensorIndex& index() const noexcept { return index_; }
    [[nodiscard]] const std::array<std::uint32_t, 4>& dims() const noexcept { return dims_; }
    [[nodiscard]] std::span<const Value> values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    [[nodiscard]] std::size_t offset(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;
    [[nodiscard]] Value at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return values_[offset(i, j, k, l)];
    }
    /// Stores v (finite, >= 0) in one cell. Throws ConfigError on a bad index
    /// and NumericError on a bad value. Disjoint cells may be written concurrently.
    void write(std::size_t i, std::size_t j, std::size_t k, std::size_t l, double v);

    [[nodiscard]] bool complete() const noexcept;

    /// Replaces the whole payload; used by the file loader.
    void assign_values(std::vector<Value> values);

private:
    TensorIndex index_;
    std::array<std::uint32_t, 4> dims_{};
    std::vector<Value> values_;
};

using RiskTensor = BasicRiskTensor<float>;
using MeanTensor = BasicRiskTensor<double>;

[[nodiscard]] RiskTensor new_tensor(TensorIndex index);

/// Equal index and bit-identical payload (NaN cells compare equal).
template <typename Value>
[[nodiscard]] bool identical(const BasicRiskTensor<Value>& a, const BasicRiskTensor<Value>& b);

/// Sub-tensor of the selected cells; axis order is preserved. Throws
/// ConfigError when the selection matches nothing on some axis or names an
/// unknown loss or sample.
template <typename Value>
[[nodiscard]] BasicRiskTensor<Value> filter(const BasicRiskTensor<Value>& t, const Selection& sel);

/// Arithmetic mean over `axes`, summed left to right in index order. Reduced
/// axes keep length 1 with a "*" label. Throws DataError on NaN cells.
template <typename Value>
[[nodiscard]] MeanTensor aggregate_mean(const BasicRiskTensor<Value>& t, AxisSet axes);

/// Mean over every cell (index order). Throws DataError on NaN cells.
template <typename Value>
[[nodiscard]] double mean_of(const BasicRiskTensor<Value>& t);

/// Binary "KRIT" v1 file: bit-exact round trip including NaN cells.
[[nodiscard]] std::vector<std::uint8_t> serialize_tensor(const RiskTensor& t);
[[nodiscard]] RiskTensor parse_tensor(std::span<const std::uint8_t> bytes);
void save(const RiskTensor& t, const std::filesystem::path& path);
[[nodiscard]] RiskTensor load_tensor(const std::filesystem::path& path);

}  // namespace krisk
