// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cstring>
#include <fstream>

#include "krisk/tensor.hpp"
#include "test_support.hpp"

using namespace krisk;
using namespace krisk::testing;

namespace {

// 1 loss, 1 sample, 2 dists, 2 draws holding [[0,1],[1,1]].
RiskTensor small_tensor() {
    RiskTensor t(make_index(1, 1, 2, 2));
    t.write(0, 0, 0, 0, 0.0);
    t.write(0, 0, 0, 1, 1.0);
    t.write(0, 0, 1, 0, 1.0);
    t.write(0, 0, 1, 1, 1.0);
    return t;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST_CASE("new tensor shapes") {
    const RiskTensor one(make_index(1, 1, 1, 1));
    CHECK(one.size() == 1);
    CHECK(std::isnan(one.at(0, 0, 0, 0)));
    CHECK_FALSE(one.complete());

    const RiskTensor t(make_index(2, 3, 4, 5));
    CHECK(t.size() == 120);
    CHECK(t.dims() == std::array<std::uint32_t, 4>{2, 3, 4, 5});

    auto idx = make_index(1, 1, 1, 1);
    idx.loss_names.clear();
    CHECK_THROWS_AS(RiskTensor{idx}, ConfigError);
    auto zero_draws = make_index(1, 1, 1, 1);
    zero_draws.n_draws = 0;
    CHECK_THROWS_AS(RiskTensor{zero_draws}, ConfigError);
}

TEST_CASE("duplicate identifiers are rejected") {
    auto idx = make_index(2, 2, 1, 1);
    idx.sample_ids[1] = idx.sample_ids[0];
    CHECK_THROWS_AS(RiskTensor{idx}, ConfigError);
}

TEST_CASE("write touches exactly one cell") {
    RiskTensor t(make_index(1, 1, 1, 1));
    t.write(0, 0, 0, 0, 0.0);
    CHECK(t.at(0, 0, 0, 0) == 0.0f);
    CHECK(t.complete());

    RiskTensor big(make_index(2, 2, 2, 2));
    big.write(1, 0, 1, 0, 3.5);
    std::size_t set = 0;
    for (float v : big.values()) set += std::isnan(v) ? 0 : 1;
    CHECK(set == 1);
    CHECK(big.at(1, 0, 1, 0) == 3.5f);
    CHECK(big.offset(1, 0, 1, 0) == 8 + 2);
}

TEST_CASE("write rejects bad indices and values") {
    RiskTensor t(make_index(1, 1, 1, 3));
    CHECK_THROWS_AS(t.write(0, 0, 0, 3, 1.0), ConfigError);
    CHECK_THROWS_AS(t.write(1, 0, 0, 0, 1.0), ConfigError);
    CHECK_THROWS_AS(t.write(0, 0, 0, 0, -1.0), NumericError);
    CHECK_THROWS_AS(t.write(0, 0, 0, 0, std::nan("")), NumericError);
    CHECK_THROWS_AS(t.write(0, 0, 0, 0, INFINITY), NumericError);
}

TEST_CASE("aggregate_mean hand examples") {
    const RiskTensor t = small_tensor();
    const MeanTensor all = aggregate_mean(t, AxisSet::all());
    CHECK(all.size() == 1);
    CHECK(all.at(0, 0, 0, 0) == 0.75);
    CHECK(all.index().loss_names == std::vector<std::string>{"*"});

    const MeanTensor per_dist = aggregate_mean(t, {Axis::draw});
    CHECK(per_dist.dims() == std::array<std::uint32_t, 4>{1, 1, 2, 1});
    CHECK(per_dist.at(0, 0, 0, 0) == 0.5);
    CHECK(per_dist.at(0, 0, 1, 0) == 1.0);
    CHECK(per_dist.index().distributions == t.index().distributions);

    const RiskTensor incomplete(make_index(1, 1, 2, 2));
    CHECK_THROWS_AS((void)aggregate_mean(incomplete, {Axis::draw}), DataError);
    CHECK_THROWS_AS((void)mean_of(incomplete), DataError);
}

TEST_CASE("aggregating nothing returns the same values") {
    const RiskTensor t = iota_tensor(make_index(2, 2, 2, 2));
    const MeanTensor m = aggregate_mean(t, AxisSet{});
    REQUIRE(m.size() == t.size());
    for (std::size_t c = 0; c < t.size(); ++c) CHECK(m.values()[c] == static_cast<double>(t.values()[c]));
}

TEST_CASE("filter examples") {
    const RiskTensor t = iota_tensor(make_index(2, 2, 2, 2));
    CHECK(identical(filter(t, Selection{}), t));

    Selection one_loss;
    one_loss.losses = std::vector<std::string>{"loss1"};
    const RiskTensor sub = filter(t, one_loss);
    REQUIRE(sub.size() == 8);
    for (std::size_t c = 0; c < 8; ++c) CHECK(sub.values()[c] == static_cast<float>(8 + c));
    CHECK(sub.index().loss_names == std::vector<std::string>{"loss1"});

    Selection adversarial;
    adversarial.distributions = [](const DistributionDescriptor& d) { return d.kind == DistributionKind::adversarial; };
    CHECK_THROWS_AS((void)filter(t, adversarial), ConfigError);

    Selection unknown;
    unknown.samples = std::vector<std::string>{"nope"};
    CHECK_THROWS_AS((void)filter(t, unknown), ConfigError);
}

TEST_CASE("filter keeps axis order and picks the right cells") {
    const RiskTensor t = iota_tensor(make_index(2, 3, 3, 2));
    Selection sel;
    sel.samples = std::vector<std::string>{"s2", "s0"};
    sel.distributions = [](const DistributionDescriptor& d) { return d.name != "d1"; };
    const RiskTensor sub = filter(t, sel);
    CHECK(sub.index().sample_ids == std::vector<std::string>{"s0", "s2"});
    REQUIRE(sub.dims() == std::array<std::uint32_t, 4>{2, 2, 2, 2});
    const std::size_t js[] = {0, 2}, ks[] = {0, 2};
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t l = 0; l < 2; ++l) CHECK(sub.at(i, a, b, l) == t.at(i, js[a], ks[b], l));
}

TEST_CASE("filter and aggregate commute on disjoint axes") {
    SplitMix64 rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        RiskTensor t(make_index(3, 4, 2, 5));
        const auto d = t.dims();
        for (std::size_t i = 0; i < d[0]; ++i)
            for (std::size_t j = 0; j < d[1]; ++j)
                for (std::size_t k = 0; k < d[2]; ++k)
                    for (std::size_t l = 0; l < d[3]; ++l) t.write(i, j, k, l, rng.uniform(0.0, 3.0));
        Selection sel;
        sel.losses = std::vector<std::string>{"loss0", "loss2"};
        const MeanTensor a = filter(aggregate_mean(t, {Axis::draw}), sel);
        const MeanTensor b = aggregate_mean(filter(t, sel), {Axis::draw});
        CHECK(identical(a, b));
    }
}

TEST_CASE("mean over all axes equals the flat mean") {
    SplitMix64 rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        RiskTensor t(make_index(2, 5, 3, 7));
        std::vector<float> flat;
        const auto d = t.dims();
        for (std::size_t i = 0; i < d[0]; ++i)
            for (std::size_t j = 0; j < d[1]; ++j)
                for (std::size_t k = 0; k < d[2]; ++k)
                    for (std::size_t l = 0; l < d[3]; ++l) {
                        t.write(i, j, k, l, rng.uniform(0.0, 1.0));
                        flat.push_back(t.at(i, j, k, l));
                    }
        long double ref = 0.0L;
        for (float v : flat) ref += v;
        ref /= static_cast<long double>(flat.size());
        const double got = aggregate_mean(t, AxisSet::all()).at(0, 0, 0, 0);
        CHECK(std::abs(got - static_cast<double>(ref)) <= 1e-12 * static_cast<double>(ref));
        CHECK(mean_of(t) == got);
    }
}

TEST_CASE("KRIT round trip is bit exact including NaN cells") {
    RiskTensor t = iota_tensor(make_index(2, 3, 4, 5));
    RiskTensor partial(make_index(2, 3, 4, 5));
    partial.write(1, 2, 3, 4, 0.25);
    for (const RiskTensor* src : {&t, &partial}) {
        const auto bytes = serialize_tensor(*src);
        const RiskTensor back = parse_tensor(bytes);
        CHECK(identical(back, *src));
        CHECK(serialize_tensor(back) == bytes);
    }
    TempDir dir("tensor");
    save(t, dir / "t.krit");
    CHECK(identical(load_tensor(dir / "t.krit"), t));
}

TEST_CASE("KRIT header layout") {
    const RiskTensor t = iota_tensor(make_index(1, 2, 1, 3));
    const auto b = serialize_tensor(t);
    REQUIRE(b.size() > 32);
    CHECK(std::memcmp(b.data(), "KRIT", 4) == 0);
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 0);
    CHECK(b[7] == 0);
    CHECK(b[8] == 1);
    CHECK(b[12] == 2);
    CHECK(b[16] == 1);
    CHECK(b[20] == 3);
    std::uint64_t meta = 0;
    for (int i = 0; i < 8; ++i) meta |= std::uint64_t(b[24 + i]) << (8 * i);
    CHECK(b.size() == 32 + meta + 6 * 4);
    const auto j = nlohmann::json::parse(b.begin() + 32, b.begin() + 32 + static_cast<std::ptrdiff_t>(meta));
    CHECK(TensorIndex::from_json(j) == t.index());
    float last = 0;
    std::memcpy(&last, b.data() + b.size() - 4, 4);
    CHECK(last == 5.0f);
}

TEST_CASE("malformed KRIT files are rejected") {
    const RiskTensor t = iota_tensor(make_index(2, 2, 2, 2));
    const auto good = serialize_tensor(t);

    auto magic = good;
    std::memcpy(magic.data(), "XXXX", 4);
    CHECK_THROWS_AS((void)parse_tensor(magic), FormatError);

    auto version = good;
    version[4] = 2;
    CHECK_THROWS_AS((void)parse_tensor(version), FormatError);

    auto truncated = good;
    truncated.resize(truncated.size() - 4);  // 15 floats
    CHECK_THROWS_AS((void)parse_tensor(truncated), FormatError);

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS((void)parse_tensor(trailing), FormatError);

    auto dims = good;
    put_u32(dims, 8, 3);
    CHECK_THROWS_AS((void)parse_tensor(dims), FormatError);

    CHECK_THROWS_AS((void)parse_tensor(std::vector<std::uint8_t>{'K', 'R'}), FormatError);

    auto negative = good;
    const float minus = -1.0f;
    std::memcpy(negative.data() + negative.size() - 4, &minus, 4);
    CHECK_THROWS_AS((void)parse_tensor(negative), FormatError);
}

TEST_CASE("tensor index json round trip") {
    const TensorIndex idx = make_index(2, 3, 2, 4);
    CHECK(TensorIndex::from_json(idx.to_json()) == idx);
}
