// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "krisk/image.hpp"

namespace krisk {

/// Labeled images with planar pixels in [0, 1].
struct LabeledDataset {
    ImageGeometry geometry;
    std::vector<double> pixels;  // size() * geometry.pixels()
    std::vector<std::uint16_t> labels;
    std::vector<std::string> sample_ids;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::span<const double> image(std::size_t i) const {
        return std::span<const double>(pixels).subspan(i * geometry.pixels(), geometry.pixels());
    }
    /// Largest label + 1.
    [[nodiscard]] std::size_t num_classes() const noexcept;

    /// Checks sizes, pixel range and id uniqueness; throws DataError.
    void validate() const;

    /// Samples whose ids appear in `ids`, in dataset order. Unknown ids throw ConfigError.
    [[nodiscard]] LabeledDataset subset(const std::vector<std::string>& ids) const;
};

/// Ids assigned to samples read from files that carry none: "0", "1", ...
[[nodiscard]] std::vector<std::string> default_sample_ids(std::size_t n);

/// Native dataset format ("KRID", version 1, little-endian).
[[nodiscard]] LabeledDataset load_krid(const std::filesystem::path& path);
void save_krid(const LabeledDataset& dataset, const std::filesystem::path& path);
[[nodiscard]] LabeledDataset parse_krid(std::span<const std::uint8_t> bytes);
[[nodiscard]] std::vector<std::uint8_t> serialize_krid(const LabeledDataset& dataset);

/// CIFAR-10 binary batches: 3073-byte records (label byte, then R, G, B planes
/// of 32x32 bytes). Pixels are mapped to [0, 1] by /255.
[[nodiscard]] LabeledDataset parse_cifar_batch(std::span<const std::uint8_t> bytes);
[[nodiscard]] LabeledDataset import_cifar(const std::vector<std::filesystem::path>& batches);

/// Loads a dataset by extension: ".bin" is read as a CIFAR-10 batch, anything
/// else as KRID.
[[nodiscard]] LabeledDataset load_dataset(const std::filesystem::path& path);

[[nodiscard]] std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace krisk
