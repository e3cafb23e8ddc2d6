// SPDX-License-Identifier: Apache-2.0
#include "krisk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "byte_io.hpp"
#include "krisk/error.hpp"

namespace krisk {

namespace {

constexpr char kKridMagic[4] = {'K', 'R', 'I', 'D'};
constexpr std::uint16_t kKridVersion = 1;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

}  // namespace

void require_unit_range(std::span<const double> x, const std::string& what) {
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataError(what + ": pixel value outside [0, 1]");
    }
}

std::size_t LabeledDataset::num_classes() const noexcept {
    if (labels.empty()) return 0;
    return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

void LabeledDataset::validate() const {
    if (geometry.pixels() == 0) throw DataError("dataset: empty image geometry");
    if (pixels.size() != size() * geometry.pixels()) {
        throw DataError("dataset: pixel buffer does not match sample count and geometry");
    }
    if (sample_ids.size() != size()) throw DataError("dataset: sample id count mismatch");
    require_unit_range(pixels, "dataset");
    std::unordered_set<std::string> seen;
    for (const auto& id : sample_ids) {
        if (!seen.insert(id).second) throw DataError("dataset: duplicate sample id '" + id + "'");
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::string>& ids) const {
    std::unordered_set<std::string> wanted(ids.begin(), ids.end());
    LabeledDataset out;
    out.geometry = geometry;
    for (std::size_t i = 0; i < size(); ++i) {
        if (wanted.erase(sample_ids[i]) == 0) continue;
        auto img = image(i);
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
        out.labels.push_back(labels[i]);
        out.sample_ids.push_back(sample_ids[i]);
    }
    if (!wanted.empty()) throw ConfigError("dataset subset: unknown sample id '" + *wanted.begin() + "'");
    return out;
}

std::vector<std::string> default_sample_ids(std::size_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    return ids;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::uint8_t> serialize_krid(const LabeledDataset& ds) {
    ds.validate();
    detail::ByteWriter w;
    w.reserve(24 + ds.pixels.size() * 4 + ds.size() * 2);
    w.bytes(kKridMagic, 4);
    w.le(kKridVersion);
    w.le(static_cast<std::uint32_t>(ds.size()));
    w.le(ds.geometry.height);
    w.le(ds.geometry.width);
    w.le(ds.geometry.channels);
    for (double v : ds.pixels) w.f32(static_cast<float>(v));
    for (auto label : ds.labels) w.le(label);
    return std::move(w).take();
}

LabeledDataset parse_krid(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "KRID dataset");
    if (!std::equal(kKridMagic, kKridMagic + 4, r.bytes(4).begin())) {
        throw FormatError("KRID dataset: bad magic");
    }
    if (r.le<std::uint16_t>() != kKridVersion) throw FormatError("KRID dataset: unsupported version");
    LabeledDataset ds;
    const std::uint32_t n = r.le<std::uint32_t>();
    ds.geometry.height = r.le<std::uint32_t>();
    ds.geometry.width = r.le<std::uint32_t>();
    ds.geometry.channels = r.le<std::uint32_t>();
    const std::size_t count = static_cast<std::size_t>(n) * ds.geometry.pixels();
    if (count / std::max<std::size_t>(n, 1) != ds.geometry.pixels() ||
        r.remaining() / 4 < count) {
        throw FormatError("KRID dataset: truncated");
    }
    ds.pixels.resize(count);
    for (auto& v : ds.pixels) v = static_cast<double>(r.f32());
    ds.labels.resize(n);
    for (auto& label : ds.labels) label = r.le<std::uint16_t>();
    if (r.remaining() != 0) throw FormatError("KRID dataset: trailing bytes");
    ds.sample_ids = default_sample_ids(n);
    ds.validate();
    return ds;
}

LabeledDataset load_krid(const std::filesystem::path& path) {
    return parse_krid(read_file_bytes(path));
}

void save_krid(const LabeledDataset& dataset, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_krid(dataset));
}

LabeledDataset parse_cifar_batch(std::span<const std::uint8_t> bytes) {
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
        throw FormatError("CIFAR-10 batch: size " + std::to_string(bytes.size()) +
                          " is not a positive multiple of 3073");
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    LabeledDataset ds;
    ds.geometry = {static_cast<std::uint32_t>(kCifarSide), static_cast<std::uint32_t>(kCifarSide), 3};
    ds.pixels.reserve(n * (kCifarRecord - 1));
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto record = bytes.subspan(i * kCifarRecord, kCifarRecord);
        if (record[0] > 9) {
            throw FormatError("CIFAR-10 batch: record " + std::to_string(i) + " has label " +
                              std::to_string(record[0]) + " > 9");
        }
        ds.labels.push_back(record[0]);
        for (std::size_t p = 1; p < kCifarRecord; ++p) {
            ds.pixels.push_back(static_cast<double>(record[p]) / 255.0);
        }
    }
    ds.sample_ids = default_sample_ids(n);
    return ds;
}

LabeledDataset import_cifar(const std::vector<std::filesystem::path>& batches) {
    if (batches.empty()) throw ConfigError("import-cifar: no batch files given");
    LabeledDataset out;
    for (const auto& path : batches) {
        LabeledDataset part = parse_cifar_batch(read_file_bytes(path));
        out.geometry = part.geometry;
        out.pixels.insert(out.pixels.end(), part.pixels.begin(), part.pixels.end());
        out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    }
    out.sample_ids = default_sample_ids(out.labels.size());
    return out;
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    if (path.extension() == ".bin") return parse_cifar_batch(read_file_bytes(path));
    return load_krid(path);
}

}  // namespace krisk
