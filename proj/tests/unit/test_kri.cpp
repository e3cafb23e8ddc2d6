// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "krisk/engine.hpp"
#include "krisk/kri.hpp"
#include "krisk/synthetic.hpp"
#include "test_support.hpp"

using namespace krisk;
using namespace krisk::testing;
using nlohmann::json;

namespace {

// Losses {cc, ce}, 2 samples, distributions bright/contrast/fgsm, 2 draws.
TensorIndex mixed_index() {
    TensorIndex idx;
    idx.loss_names = {"cc", "ce"};
    idx.sample_ids = {"a", "b"};
    idx.distributions = {
        make_descriptor("bright", "brightness", {{"beta", 0.1}}, 1),
        make_descriptor("contrast", "contrast", {{"gamma", 0.5}}, 1),
        make_descriptor("fgsm", "fgsm", {{"epsilon", 0.1}}, 1),
    };
    idx.n_draws = 2;
    return idx;
}

RiskTensor filled(const TensorIndex& idx, const std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>& f) {
    RiskTensor t(idx);
    const auto d = t.dims();
    for (std::size_t i = 0; i < d[0]; ++i)
        for (std::size_t j = 0; j < d[1]; ++j)
            for (std::size_t k = 0; k < d[2]; ++k)
                for (std::size_t l = 0; l < d[3]; ++l) t.write(i, j, k, l, f(i, j, k, l));
    return t;
}

KriDefinition family_kri(std::string name, std::vector<std::string> families, std::vector<std::string> losses = {}) {
    KriDefinition d;
    d.name = std::move(name);
    d.families = std::move(families);
    d.losses = std::move(losses);
    return d;
}

}  // namespace

TEST_CASE("compute_kris examples") {
    const RiskTensor t = filled(mixed_index(), [](auto, auto, std::size_t k, auto) { return k == 0 ? 0.25 : (k == 1 ? 0.4 : 0.9); });
    auto kris = compute_kris(t, {family_kri("br", {"brightness"})});
    CHECK(kris[0].value == 0.25);
    CHECK(kris[0].cells == 8);

    const RiskTensor u = filled(mixed_index(), [](auto, auto, std::size_t k, auto) { return k == 0 ? 0.2 : 0.4; });
    kris = compute_kris(u, {family_kri("sc", {"brightness", "contrast"})});
    CHECK(kris[0].value == doctest::Approx(0.3).epsilon(1e-7));

    CHECK_THROWS_AS((void)compute_kris(t, {family_kri("x", {"rain"})}), ConfigError);
    CHECK_THROWS_AS((void)compute_kris(t, {family_kri("x", {"brightness"}), family_kri("x", {"contrast"})}), ConfigError);

    KriDefinition adv;
    adv.name = "adv";
    adv.kind = DistributionKind::adversarial;
    adv.losses = {"cc"};
    kris = compute_kris(t, {adv});
    CHECK(kris[0].value == doctest::Approx(0.9));
    CHECK(kris[0].cells == 4);

    RiskTensor partial(mixed_index());
    CHECK_THROWS_AS((void)compute_kris(partial, {family_kri("br", {"brightness"})}), DataError);
}

TEST_CASE("combine examples") {
    const std::vector<KriValue> kris{{"a", 0.2, 1}, {"b", 0.4, 1}};
    CHECK(combine(kris, {{"a", 0.5}, {"b", 0.5}}) == doctest::Approx(0.3));
    CHECK(combine(kris, {{"a", 1.0}, {"b", 0.0}}) == 0.2);
    CHECK_THROWS_AS((void)combine(kris, {{"a", 0.5}, {"b", 0.6}}), ConfigError);
    CHECK_THROWS_AS((void)combine(kris, {{"a", 1.0}}), ConfigError);
    CHECK_THROWS_AS((void)combine(kris, {{"a", 0.5}, {"b", 0.5}, {"c", 0.0}}), ConfigError);
    CHECK_THROWS_AS((void)combine(kris, {{"a", 1.5}, {"b", -0.5}}), ConfigError);
    CHECK_NOTHROW((void)combine(kris, {{"a", 0.5 + 4e-10}, {"b", 0.5}}));
}

TEST_CASE("convex combination stays within the KRI range") {
    SplitMix64 rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<KriValue> kris;
        Weights w;
        double total = 0.0;
        const std::size_t n = 1 + rng.below(6);
        for (std::size_t i = 0; i < n; ++i) {
            kris.push_back({"k" + std::to_string(i), rng.uniform(0, 3), 1});
            w["k" + std::to_string(i)] = rng.uniform();
            total += w["k" + std::to_string(i)];
        }
        for (auto& [name, v] : w) v /= total;
        if (std::abs(std::accumulate(w.begin(), w.end(), 0.0, [](double s, const auto& p) { return s + p.second; }) - 1.0) > 1e-9) continue;
        const double r = combine(kris, w);
        const auto [lo, hi] = std::minmax_element(kris.begin(), kris.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
        CHECK(r >= lo->value - 1e-12);
        CHECK(r <= hi->value + 1e-12);
    }
}

TEST_CASE("partition with count weights reproduces the global mean") {
    SplitMix64 rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const RiskTensor t = filled(mixed_index(), [&](auto, auto, auto, auto) { return rng.uniform(0, 2); });
        const std::vector<KriDefinition> defs{
            family_kri("cc_sensor", {"brightness", "contrast"}, {"cc"}),
            family_kri("ce_sensor", {"brightness", "contrast"}, {"ce"}),
            family_kri("adv", {"fgsm"}),
        };
        const auto kris = compute_kris(t, defs);
        std::size_t cells = 0;
        for (const auto& k : kris) cells += k.cells;
        REQUIRE(cells == t.size());
        Weights w;
        for (const auto& k : kris) w[k.name] = static_cast<double>(k.cells) / static_cast<double>(cells);
        const double global = mean_of(t);
        CHECK(std::abs(combine(kris, w) - global) <= 1e-10 * global);
    }
}

TEST_CASE("kri definitions from json") {
    const auto d = KriDefinition::from_json({{"name", "sc"}, {"loss", "cc"}, {"families", {"brightness", "contrast"}}, {"samples", {"a"}}});
    CHECK(d.losses == std::vector<std::string>{"cc"});
    CHECK(d.families.size() == 2);
    CHECK(KriDefinition::from_json(d.to_json()).to_json() == d.to_json());
    CHECK_THROWS_AS((void)KriDefinition::from_json({{"name", "x"}, {"loss", "a"}, {"losses", {"b"}}}), ConfigError);
    CHECK_THROWS_AS((void)KriDefinition::from_json({{"name", "x"}, {"kind", "weather"}}), ConfigError);
    CHECK_THROWS_AS((void)KriDefinition::from_json({{"name", "x"}, {"bogus", 1}}), ConfigError);
}

TEST_CASE("kris over several tensors") {
    const RiskTensor a = filled(mixed_index(), [](auto...) { return 0.1; });
    auto idx = mixed_index();
    idx.n_draws = 5;
    const RiskTensor b = filled(idx, [](auto...) { return 0.7; });
    KriDefinition second = family_kri("second", {"brightness"});
    second.tensor = 1;
    const std::vector<RiskTensor> tensors{a, b};
    const auto kris = compute_kris(tensors, {family_kri("first", {"brightness"}), second});
    CHECK(kris[0].value == doctest::Approx(0.1));
    CHECK(kris[1].value == doctest::Approx(0.7));
    CHECK(kris[1].cells == 20);
    KriDefinition missing = second;
    missing.tensor = 2;
    CHECK_THROWS_AS((void)compute_kris(tensors, {missing}), ConfigError);
}

TEST_CASE("report rendering") {
    const std::vector<KriValue> kris{{"br", 0.25, 8}, {"adv", 0.5, 4}};
    const KriReport r = make_report(kris, {{"br", 0.75}, {"adv", 0.25}},
                                    {{"00ff"}, "abcd", "model-a", "2024-01-01T00:00:00Z"});
    CHECK(r.final_risk == 0.3125);

    const std::string csv = render_csv(r);
    CHECK(csv == "name,value,weight\nbr,0.25,0.75\nadv,0.5,0.25\nfinal_risk,0.3125,1\n");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    CHECK(KriReport::from_json(r.to_json()) == r);
    CHECK(KriReport::from_json(json::parse(r.to_json().dump())).to_json().dump() == r.to_json().dump());

    KriReport other = r;
    other.provenance.model_id = "model-0";
    const std::vector<KriReport> both{r, other};
    const std::string plot = render_plotdata(both);
    CHECK(plot ==
          "group\tlabel\tvalue\n"
          "model-0\tadv\t0.5\nmodel-0\tbr\t0.25\nmodel-0\tfinal_risk\t0.3125\n"
          "model-a\tadv\t0.5\nmodel-a\tbr\t0.25\nmodel-a\tfinal_risk\t0.3125\n");

    TempDir dir("report");
    emit_report(r, ReportFormat::csv, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == csv);
    emit_report(r, ReportFormat::json, dir / "r.json");
    std::ifstream jin(dir / "r.json");
    CHECK(KriReport::from_json(json::parse(jin)) == r);
    CHECK_THROWS_AS(emit_report(r, ReportFormat::csv, dir / "missing" / "r.csv"), DataError);
}

TEST_CASE("sha256 known answers") {
    const std::string abc = "abc";
    CHECK(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("model ranking is invariant to scaling severity costs") {
    const auto ds = make_blobs({.n = 12, .classes = 3, .geometry = {2, 2, 1}, .sigma = 0.1, .seed = 2});
    SplitMix64 rng(5);
    std::vector<ToyClassifier> models;
    for (int m = 0; m < 4; ++m) models.push_back(random_mlp(rng, {4, 8, 3}, 3.0));
    auto scenario = [](double scale) {
        json costs = {{0, 1 * scale, 2 * scale}, {3 * scale, 0, 1 * scale}, {1 * scale, 4 * scale, 0}};
        return ScenarioConfig::from_json({
            {"n_draws", 5},
            {"distributions",
             {{{"name", "g"}, {"family", "gaussian"}, {"params", {{"sigma", 0.2}}}},
              {{"name", "b"}, {"family", "brightness"}, {"params", {{"beta", {-0.4, 0.4}}}}}}},
            {"losses", {{{"name", "sev"}, {"kind", "severity"}, {"costs", costs}}}},
            {"kris", {{{"name", "noise"}, {"families", {"gaussian"}}}, {{"name", "bright"}, {"families", {"brightness"}}}}},
            {"weights", {{"noise", 0.3}, {"bright", 0.7}}},
        });
    };
    auto ranking = [&](double scale) {
        const auto cfg = scenario(scale);
        std::vector<std::pair<double, int>> risks;
        for (int m = 0; m < 4; ++m) {
            const RiskTensor t = build_tensor(models[static_cast<std::size_t>(m)], ds, cfg);
            risks.emplace_back(combine(compute_kris(t, cfg.kris), cfg.resolved_weights()), m);
        }
        std::sort(risks.begin(), risks.end());
        std::vector<int> order;
        for (const auto& r : risks) order.push_back(r.second);
        return order;
    };
    CHECK(ranking(1.0) == ranking(4.0));
    CHECK(ranking(1.0) == ranking(0.5));
}
