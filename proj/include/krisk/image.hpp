// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace krisk {

/// Image shape. Pixel buffers are planar: channel slowest, then row, then
/// column (the CIFAR-10 layout), values in [0, 1].
struct ImageGeometry {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;

    [[nodiscard]] std::size_t pixels() const noexcept {
        return static_cast<std::size_t>(height) * width * channels;
    }
    [[nodiscard]] std::size_t plane() const noexcept {
        return static_cast<std::size_t>(height) * width;
    }
    friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

/// Throws DataError unless every value is finite and inside [0, 1].
void require_unit_range(std::span<const double> x, const std::string& what);

}  // namespace krisk
