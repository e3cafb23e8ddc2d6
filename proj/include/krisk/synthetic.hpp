// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "krisk/dataset.hpp"

namespace krisk {

struct BlobOptions {
    std::size_t n = 100;
    std::size_t classes = 2;
    ImageGeometry geometry{1, 2, 1};
    double sigma = 0.05;      // per-pixel cluster spread
    double separation = 6.0;  // distance between class centers, in units of sigma
    std::uint64_t seed = 0;
};

/// Gaussian clusters around 0.5 + (separation*sigma/sqrt 2) * u_k with
/// orthonormal u_k, so any two centers are separation*sigma apart. Labels are
/// assigned round-robin. Pixels are clipped to [0,1].
[[nodiscard]] LabeledDataset make_blobs(const BlobOptions& options);

struct RingOptions {
    std::size_t n = 100;
    std::size_t classes = 2;
    ImageGeometry geometry{1, 2, 1};
    double width = 0.02;  // radial noise
    std::uint64_t seed = 0;
};

/// Concentric rings in a random 2-D plane through the gray image; class k has
/// radius 0.4 (k + 1) / classes.
[[nodiscard]] LabeledDataset make_rings(const RingOptions& options);

}  // namespace krisk
