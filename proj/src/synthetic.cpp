// SPDX-License-Identifier: Apache-2.0
#include "krisk/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "krisk/error.hpp"
#include "krisk/rng.hpp"

namespace krisk {
namespace {

void check_shape(std::size_t n, std::size_t classes, const ImageGeometry& g) {
    if (g.height == 0 || g.width == 0 || g.channels == 0) throw ConfigError("gen-data: invalid geometry");
    if (classes < 2 || n < classes) throw ConfigError("gen-data: need n >= classes >= 2");
    if (classes > 65535) throw ConfigError("gen-data: too many classes");
}

// Gram-Schmidt on Gaussian vectors.
std::vector<std::vector<double>> orthonormal(std::size_t count, std::size_t dim, SplitMix64& rng) {
    if (count > dim) throw ConfigError("gen-data: more directions than pixels");
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.normal();
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t p = 0; p < dim; ++p) dot += v[p] * b[p];
            for (std::size_t p = 0; p < dim; ++p) v[p] -= dot * b[p];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (auto& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

LabeledDataset empty_dataset(std::size_t n, const ImageGeometry& g) {
    LabeledDataset ds;
    ds.geometry = g;
    ds.pixels.resize(n * g.pixels());
    ds.labels.resize(n);
    ds.sample_ids = default_sample_ids(n);
    return ds;
}

}  // namespace

LabeledDataset make_blobs(const BlobOptions& o) {
    check_shape(o.n, o.classes, o.geometry);
    if (!(o.sigma >= 0.0) || !(o.separation >= 0.0)) throw ConfigError("gen-data: sigma and separation must be >= 0");
    const std::size_t dim = o.geometry.pixels();
    SplitMix64 dir_rng(derive_seed(o.seed, 0, 0, 0));
    SplitMix64 noise_rng(derive_seed(o.seed, 1, 0, 0));
    const auto dirs = orthonormal(o.classes, dim, dir_rng);
    const double offset = o.separation * o.sigma / std::numbers::sqrt2;

    LabeledDataset ds = empty_dataset(o.n, o.geometry);
    for (std::size_t i = 0; i < o.n; ++i) {
        const std::size_t k = i % o.classes;
        ds.labels[i] = static_cast<std::uint16_t>(k);
        for (std::size_t p = 0; p < dim; ++p) {
            const double v = 0.5 + offset * dirs[k][p] + o.sigma * noise_rng.normal();
            ds.pixels[i * dim + p] = std::clamp(v, 0.0, 1.0);
        }
    }
    return ds;
}

LabeledDataset make_rings(const RingOptions& o) {
    check_shape(o.n, o.classes, o.geometry);
    if (!(o.width >= 0.0)) throw ConfigError("gen-data: ring width must be >= 0");
    const std::size_t dim = o.geometry.pixels();
    if (dim < 2) throw ConfigError("gen-data: rings need at least two pixels");
    SplitMix64 dir_rng(derive_seed(o.seed, 0, 0, 0));
    SplitMix64 noise_rng(derive_seed(o.seed, 1, 0, 0));
    const auto plane = orthonormal(2, dim, dir_rng);

    LabeledDataset ds = empty_dataset(o.n, o.geometry);
    for (std::size_t i = 0; i < o.n; ++i) {
        const std::size_t k = i % o.classes;
        ds.labels[i] = static_cast<std::uint16_t>(k);
        const double theta = noise_rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double r = 0.4 * static_cast<double>(k + 1) / static_cast<double>(o.classes) +
                         o.width * noise_rng.normal();
        const double a = r * std::cos(theta);
        const double b = r * std::sin(theta);
        for (std::size_t p = 0; p < dim; ++p) {
            ds.pixels[i * dim + p] = std::clamp(0.5 + a * plane[0][p] + b * plane[1][p], 0.0, 1.0);
        }
    }
    return ds;
}

}  // namespace krisk
