// SPDX-License-Identifier: Apache-2.0
#include "krisk/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "byte_io.hpp"
#include "json_util.hpp"
#include "krisk/dataset.hpp"

namespace krisk {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'K', 'R', 'I', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr const char* kReducedLabel = "*";

template <typename T, typename Key>
void require_unique(const std::vector<T>& items, Key key, const std::string& axis) {
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        if (!seen.insert(key(item)).second) {
            throw ConfigError("tensor index: duplicate " + axis + " '" + key(item) + "'");
        }
    }
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + ": expected an array");
    std::vector<std::string> out;
    for (const auto& v : j) out.push_back(detail::as_string(v, what));
    return out;
}

// Positions of `wanted` names within `axis`, in axis order.
std::vector<std::size_t> pick(const std::vector<std::string>& axis,
                              const std::optional<std::vector<std::string>>& wanted,
                              const std::string& what) {
    std::vector<std::size_t> out;
    if (!wanted) {
        out.resize(axis.size());
        for (std::size_t i = 0; i < axis.size(); ++i) out[i] = i;
        return out;
    }
    for (const auto& name : *wanted) {
        if (std::find(axis.begin(), axis.end(), name) == axis.end()) {
            throw ConfigError("filter: unknown " + what + " '" + name + "'");
        }
    }
    for (std::size_t i = 0; i < axis.size(); ++i) {
        if (std::find(wanted->begin(), wanted->end(), axis[i]) != wanted->end()) out.push_back(i);
    }
    if (out.empty()) throw ConfigError("filter: selection matches no " + what);
    return out;
}

DistributionDescriptor reduced_distribution() {
    // Placeholder label for a reduced distribution axis; never validated.
    DistributionDescriptor d;
    d.name = kReducedLabel;
    d.family = kReducedLabel;
    return d;
}

}  // namespace

std::array<std::uint32_t, 4> TensorIndex::dims() const {
    return {static_cast<std::uint32_t>(loss_names.size()), static_cast<std::uint32_t>(sample_ids.size()),
            static_cast<std::uint32_t>(distributions.size()), n_draws};
}

void TensorIndex::validate() const {
    if (loss_names.empty() || sample_ids.empty() || distributions.empty() || n_draws == 0) {
        throw ConfigError("tensor index: every axis needs at least one entry");
    }
    auto self = [](const std::string& s) { return s; };
    require_unique(loss_names, self, "loss name");
    require_unique(sample_ids, self, "sample id");
    require_unique(distributions, [](const DistributionDescriptor& d) { return d.name; }, "distribution");
    for (const auto& d : distributions) {
        if (d.name == kReducedLabel && d.family == kReducedLabel) continue;
        d.validate();
    }
}

json TensorIndex::to_json() const {
    json dists = json::array();
    for (const auto& d : distributions) dists.push_back(d.to_json());
    return {{"loss_names", loss_names}, {"sample_ids", sample_ids},
            {"distributions", std::move(dists)}, {"n_draws", n_draws}};
}

TensorIndex TensorIndex::from_json(const json& j) {
    detail::check_keys(j, {"loss_names", "sample_ids", "distributions", "n_draws"}, "tensor index");
    TensorIndex index;
    index.loss_names = string_list(detail::require_key(j, "loss_names", "tensor index"), "loss_names");
    index.sample_ids = string_list(detail::require_key(j, "sample_ids", "tensor index"), "sample_ids");
    const json& dists = detail::require_key(j, "distributions", "tensor index");
    if (!dists.is_array()) throw ConfigError("tensor index: distributions must be an array");
    for (const auto& d : dists) {
        if (d.value("name", "") == kReducedLabel && d.value("family", "") == kReducedLabel) {
            index.distributions.push_back(reduced_distribution());
        } else {
            index.distributions.push_back(DistributionDescriptor::from_json(d));
        }
    }
    index.n_draws = static_cast<std::uint32_t>(
        detail::as_uint(detail::require_key(j, "n_draws", "tensor index"), "n_draws"));
    index.validate();
    return index;
}

template <typename Value>
BasicRiskTensor<Value>::BasicRiskTensor(TensorIndex index) : index_(std::move(index)) {
    index_.validate();
    dims_ = index_.dims();
    std::size_t n = 1;
    for (auto d : dims_) n *= d;
    values_.assign(n, std::numeric_limits<Value>::quiet_NaN());
}

template <typename Value>
std::size_t BasicRiskTensor<Value>::offset(std::size_t i, std::size_t j, std::size_t k,
                                          std::size_t l) const {
    if (i >= dims_[0] || j >= dims_[1] || k >= dims_[2] || l >= dims_[3]) {
        throw ConfigError("risk tensor: index (" + std::to_string(i) + ", " + std::to_string(j) + ", " +
                          std::to_string(k) + ", " + std::to_string(l) + ") out of range");
    }
    return ((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
}

template <typename Value>
void BasicRiskTensor<Value>::write(std::size_t i, std::size_t j, std::size_t k, std::size_t l,
                                   double v) {
    const std::size_t at = offset(i, j, k, l);
    if (!std::isfinite(v) || v < 0.0) {
        throw NumericError("risk tensor: loss value must be finite and >= 0, got " + std::to_string(v));
    }
    values_[at] = static_cast<Value>(v);
}

template <typename Value>
bool BasicRiskTensor<Value>::complete() const noexcept {
    return std::none_of(values_.begin(), values_.end(), [](Value v) { return std::isnan(v); });
}

template <typename Value>
void BasicRiskTensor<Value>::assign_values(std::vector<Value> values) {
    if (values.size() != values_.size()) throw FormatError("risk tensor: payload size mismatch");
    for (Value v : values) {
        if (!std::isnan(v) && (!std::isfinite(v) || v < 0)) {
            throw FormatError("risk tensor: payload holds a negative or infinite loss");
        }
    }
    values_ = std::move(values);
}

template class BasicRiskTensor<float>;
template class BasicRiskTensor<double>;

RiskTensor new_tensor(TensorIndex index) { return RiskTensor(std::move(index)); }

template <typename Value>
bool identical(const BasicRiskTensor<Value>& a, const BasicRiskTensor<Value>& b) {
    return a.index() == b.index() && a.size() == b.size() &&
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(Value)) == 0;
}

template bool identical(const RiskTensor&, const RiskTensor&);
template bool identical(const MeanTensor&, const MeanTensor&);

template <typename Value>
BasicRiskTensor<Value> filter(const BasicRiskTensor<Value>& t, const Selection& sel) {
    const TensorIndex& src = t.index();
    const auto li = pick(src.loss_names, sel.losses, "loss");
    const auto si = pick(src.sample_ids, sel.samples, "sample");
    std::vector<std::size_t> di;
    for (std::size_t k = 0; k < src.distributions.size(); ++k) {
        if (!sel.distributions || sel.distributions(src.distributions[k])) di.push_back(k);
    }
    if (di.empty()) throw ConfigError("filter: selection matches no distribution");

    TensorIndex sub;
    for (auto i : li) sub.loss_names.push_back(src.loss_names[i]);
    for (auto j : si) sub.sample_ids.push_back(src.sample_ids[j]);
    for (auto k : di) sub.distributions.push_back(src.distributions[k]);
    sub.n_draws = src.n_draws;

    std::vector<Value> values;
    values.reserve(li.size() * si.size() * di.size() * src.n_draws);
    for (auto i : li) {
        for (auto j : si) {
            for (auto k : di) {
                const std::size_t base = t.offset(i, j, k, 0);
                values.insert(values.end(), t.values().begin() + base,
                              t.values().begin() + base + src.n_draws);
            }
        }
    }
    BasicRiskTensor<Value> out(std::move(sub));
    // Values were validated in the source tensor.
    out.assign_values(std::move(values));
    return out;
}

template <typename Value>
MeanTensor aggregate_mean(const BasicRiskTensor<Value>& t, AxisSet axes) {
    if (!t.complete()) throw DataError("aggregate_mean: incomplete tensor (NaN cells); filter them first");
    const TensorIndex& src = t.index();
    TensorIndex out_index = src;
    if (axes.contains(Axis::loss)) out_index.loss_names = {kReducedLabel};
    if (axes.contains(Axis::sample)) out_index.sample_ids = {kReducedLabel};
    if (axes.contains(Axis::dist)) out_index.distributions = {reduced_distribution()};
    if (axes.contains(Axis::draw)) out_index.n_draws = 1;
    MeanTensor out(std::move(out_index));

    const auto& d = t.dims();
    const auto& od = out.dims();
    std::vector<double> sums(out.size(), 0.0);
    // Index-order traversal: each output cell accumulates its inputs left to right.
    for (std::size_t i = 0; i < d[0]; ++i) {
        const std::size_t oi = axes.contains(Axis::loss) ? 0 : i;
        for (std::size_t j = 0; j < d[1]; ++j) {
            const std::size_t oj = axes.contains(Axis::sample) ? 0 : j;
            for (std::size_t k = 0; k < d[2]; ++k) {
                const std::size_t ok = axes.contains(Axis::dist) ? 0 : k;
                for (std::size_t l = 0; l < d[3]; ++l) {
                    const std::size_t ol = axes.contains(Axis::draw) ? 0 : l;
                    sums[((oi * od[1] + oj) * od[2] + ok) * od[3] + ol] +=
                        static_cast<double>(t.at(i, j, k, l));
                }
            }
        }
    }
    const double count = static_cast<double>(t.size() / out.size());
    for (auto& s : sums) s /= count;
    out.assign_values(std::move(sums));
    return out;
}

template <typename Value>
double mean_of(const BasicRiskTensor<Value>& t) {
    return aggregate_mean(t, AxisSet::all()).values()[0];
}

template RiskTensor filter(const RiskTensor&, const Selection&);
template MeanTensor filter(const MeanTensor&, const Selection&);
template MeanTensor aggregate_mean(const RiskTensor&, AxisSet);
template MeanTensor aggregate_mean(const MeanTensor&, AxisSet);
template double mean_of(const RiskTensor&);
template double mean_of(const MeanTensor&);

std::vector<std::uint8_t> serialize_tensor(const RiskTensor& t) {
    const std::string meta = t.index().to_json().dump();
    detail::ByteWriter w;
    w.reserve(32 + meta.size() + t.size() * 4);
    w.bytes(kMagic, 4);
    w.le(kVersion);
    w.le(std::uint16_t{0});
    for (auto d : t.dims()) w.le(d);
    w.le(static_cast<std::uint64_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    for (float v : t.values()) w.f32(v);
    return std::move(w).take();
}

RiskTensor parse_tensor(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "KRIT tensor");
    const auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("KRIT tensor: bad magic");
    const auto version = r.le<std::uint16_t>();
    if (version != kVersion) {
        throw FormatError("KRIT tensor: unsupported version " + std::to_string(version));
    }
    if (r.le<std::uint16_t>() != 0) throw FormatError("KRIT tensor: reserved field is not zero");
    std::array<std::uint32_t, 4> dims{};
    for (auto& d : dims) d = r.le<std::uint32_t>();
    const auto meta_len = r.le<std::uint64_t>();
    if (meta_len > r.remaining()) throw FormatError("KRIT tensor: truncated metadata");
    const auto meta = r.bytes(static_cast<std::size_t>(meta_len));

    TensorIndex index;
    try {
        index = TensorIndex::from_json(json::parse(meta.begin(), meta.end()));
    } catch (const json::exception& e) {
        throw FormatError(std::string("KRIT tensor: bad metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("KRIT tensor: bad metadata: ") + e.what());
    }
    if (index.dims() != dims) throw FormatError("KRIT tensor: header dims do not match metadata");

    std::size_t n = 1;
    for (auto d : dims) n *= d;
    if (r.remaining() < n * 4) throw FormatError("KRIT tensor: truncated payload");
    if (r.remaining() > n * 4) throw FormatError("KRIT tensor: trailing bytes after payload");
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32();

    RiskTensor t(std::move(index));
    t.assign_values(std::move(values));
    return t;
}

void save(const RiskTensor& t, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_tensor(t));
}

RiskTensor load_tensor(const std::filesystem::path& path) {
    return parse_tensor(read_file_bytes(path));
}

}  // namespace krisk
