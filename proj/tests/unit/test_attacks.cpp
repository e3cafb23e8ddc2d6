// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>

#include "krisk/attacks.hpp"
#include "krisk/losses.hpp"
#include "test_support.hpp"

using namespace krisk;
using namespace krisk::testing;

namespace {

struct AffineCase {
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> x;
    double margin() const { return dot(w, x) + b; }
    double l2_distance() const { return std::abs(margin()) / norm2(w); }
};

AffineCase random_affine(SplitMix64& rng, std::size_t dim) {
    AffineCase c;
    c.w = random_vector(rng, dim, -1, 1);
    c.x = random_vector(rng, dim, 0.3, 0.7);
    c.b = -dot(c.w, c.x) + rng.uniform(-0.3, 0.3);
    return c;
}

AttackSpec pgd_spec(double eps, double step, std::uint32_t n) {
    AttackSpec s{.method = AttackMethod::pgd, .epsilon = eps, .step = step, .iterations = n};
    s.validate();
    return s;
}

LabeledDataset one_sample(std::span<const double> x, std::uint16_t label) {
    LabeledDataset ds;
    ds.geometry = {1, static_cast<std::uint32_t>(x.size()), 1};
    ds.pixels.assign(x.begin(), x.end());
    ds.labels = {label};
    ds.sample_ids = {"0"};
    return ds;
}

/// Gradient-free wrapper around another classifier.
class Opaque final : public Classifier {
public:
    explicit Opaque(const Classifier& inner) : inner_(inner) {}
    std::size_t input_dim() const override { return inner_.input_dim(); }
    std::size_t num_classes() const override { return inner_.num_classes(); }
    Logits predict(std::span<const double> x) const override { return inner_.predict(x); }
    bool supports_gradients() const override { return false; }
    LossGradient loss_and_input_gradient(std::span<const double>, std::size_t) const override {
        throw BlackBoxModelError("opaque");
    }
    std::vector<double> logit_diff_gradient(std::span<const double>, std::size_t, std::size_t) const override {
        throw BlackBoxModelError("opaque");
    }

private:
    const Classifier& inner_;
};

}  // namespace

TEST_CASE("fgsm zero budget and closed form") {
    SplitMix64 rng(1);
    for (int rep = 0; rep < 30; ++rep) {
        const auto c = random_affine(rng, 8);
        const ToyClassifier m = affine_binary(c.w, c.b);
        const std::size_t y = rep % 2;
        CHECK(fgsm(m, c.x, y, 0.0) == c.x);

        const double eps = 0.05;
        const auto adv = fgsm(m, c.x, y, eps);
        const auto p = softmax(m.predict(c.x));
        const double coeff = p[0] - (y == 0 ? 1.0 : 0.0);
        for (std::size_t i = 0; i < c.w.size(); ++i) {
            const double g = coeff * c.w[i];
            const double s = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
            CHECK(adv[i] == std::clamp(c.x[i] + eps * s, 0.0, 1.0));
            if (g != 0.0) CHECK(std::abs(adv[i] - c.x[i]) == doctest::Approx(eps).epsilon(1e-12));
        }
    }
}

TEST_CASE("attacks refuse gradient-free models") {
    SplitMix64 rng(2);
    const auto c = random_affine(rng, 4);
    const ToyClassifier m = affine_binary(c.w, c.b);
    const Opaque opaque(m);
    CHECK_THROWS_AS((void)fgsm(opaque, c.x, 0, 0.1), BlackBoxModelError);
    CHECK_THROWS_AS((void)pgd(opaque, c.x, 0, pgd_spec(0.1, 0.05, 3)), BlackBoxModelError);
    CHECK_THROWS_AS((void)deepfool(opaque, c.x, {.method = AttackMethod::deepfool}), BlackBoxModelError);
    CHECK(exit_code(BlackBoxModelError("x").kind()) == 3);
}

TEST_CASE("pgd single full step equals fgsm bit for bit") {
    SplitMix64 rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const ToyClassifier m = random_mlp(rng, {6, 10, 3});
        const auto x = random_vector(rng, 6, 0, 1);
        const std::size_t y = rng.below(3);
        const double eps = rng.uniform(0.01, 0.2);
        CHECK(pgd(m, x, y, pgd_spec(eps, eps, 1)) == fgsm(m, x, y, eps));
        CHECK(pgd(m, x, y, pgd_spec(0.0, 0.1, 5)) == std::vector<double>(x.begin(), x.end()));
    }
}

TEST_CASE("pgd stays in the admissible set and dominates fgsm") {
    SplitMix64 rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        const ToyClassifier m = random_mlp(rng, {6, 12, 4}, 3.0);
        const auto x = random_vector(rng, 6, 0, 1);
        const std::size_t y = rng.below(4);
        const double eps = rng.uniform(0.01, 0.3);
        auto spec = pgd_spec(eps, eps, 10);
        const auto adv = pgd(m, x, y, spec);
        const auto f = fgsm(m, x, y, eps);
        CHECK(softmax_cross_entropy(m.predict(adv), y) >= softmax_cross_entropy(m.predict(f), y));
        spec.random_start = true;
        spec.step = eps / 4;
        const auto rs = pgd(m, x, y, spec, 99);
        CHECK(rs == pgd(m, x, y, spec, 99));
        for (const auto* a : {&adv, &f, &rs}) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::abs((*a)[i] - x[i]) <= eps + 1e-12);
                CHECK((*a)[i] >= 0.0);
                CHECK((*a)[i] <= 1.0);
            }
        }
    }
}

TEST_CASE("deepfool recovers the affine minimal perturbation") {
    SplitMix64 rng(5);
    const AttackSpec spec{.method = AttackMethod::deepfool, .overshoot = 0.0};
    for (int rep = 0; rep < 50; ++rep) {
        const auto c = random_affine(rng, 10);
        const ToyClassifier m = affine_binary(c.w, c.b);
        const auto r = deepfool(m, c.x, spec);
        CHECK(r.converged);
        CHECK(norm2(r.perturbation) == doctest::Approx(c.l2_distance()).epsilon(1e-6));
        // r is parallel to -(w.x+b) w.
        const double k = -c.margin() / dot(c.w, c.w);
        for (std::size_t i = 0; i < c.w.size(); ++i) CHECK(r.perturbation[i] == doctest::Approx(k * c.w[i]).epsilon(1e-6));
    }
}

TEST_CASE("deepfool with overshoot flips in one step near the boundary") {
    const std::vector<double> w{1.0, -2.0, 0.5};
    const std::vector<double> x{0.5, 0.5, 0.5};
    const double b = -dot(w, x) + 1e-9;
    const ToyClassifier m = affine_binary(w, b);
    const auto r = deepfool(m, x, {.method = AttackMethod::deepfool});
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK(predict_class(m, r.adversarial) != predict_class(m, x));
}

TEST_CASE("deepfool on an MLP changes the class") {
    SplitMix64 rng(6);
    int flipped = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const ToyClassifier m = random_mlp(rng, {5, 16, 3}, 2.0);
        const auto x = random_vector(rng, 5, 0.3, 0.7);
        AttackSpec spec{.method = AttackMethod::deepfool};
        const auto r = deepfool(m, x, spec);
        if (!r.converged) continue;
        std::vector<double> moved(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) moved[i] = x[i] + r.perturbation[i];
        flipped += predict_class(m, moved) != predict_class(m, x);
    }
    CHECK(flipped >= 15);
}

TEST_CASE("deepfool spec validation") {
    AttackSpec spec{.method = AttackMethod::deepfool, .max_iter = 0};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    AttackSpec neg{.method = AttackMethod::deepfool, .overshoot = -0.1};
    CHECK_THROWS_AS(neg.validate(), ConfigError);
    CHECK_THROWS_AS(pgd_spec(0.1, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(pgd_spec(0.1, 0.1, 0), ConfigError);
}

TEST_CASE("estimate_min_perturbation examples") {
    SplitMix64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const auto c = random_affine(rng, 6);
        const ToyClassifier m = affine_binary(c.w, c.b);
        const double est = estimate_min_perturbation(m, c.x);
        CHECK(est >= c.l2_distance() * (1 - 1e-12));
        CHECK(est <= c.l2_distance() * (1 + 1e-3));
    }
    // Margin 1 and margin 2 points along the normal of x0 + x1 = 1.
    const ToyClassifier m = affine_binary({1.0, 1.0}, -1.0);
    const double s = std::sqrt(2.0);
    const std::vector<double> near{0.5 + 0.1 / s, 0.5 + 0.1 / s};
    const std::vector<double> far{0.5 + 0.2 / s, 0.5 + 0.2 / s};
    const double d1 = estimate_min_perturbation(m, near);
    const double d2 = estimate_min_perturbation(m, far);
    CHECK(d2 / d1 == doctest::Approx(2.0).epsilon(2e-3));

    const ToyClassifier flat = affine_binary({0.0, 0.0}, 1.0);
    CHECK_THROWS_AS((void)estimate_min_perturbation(flat, near), NonConvergenceError);
}

TEST_CASE("estimated perturbation always changes the class") {
    SplitMix64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const ToyClassifier m = random_mlp(rng, {4, 12, 3}, 2.0);
        const auto x = random_vector(rng, 4, 0.2, 0.8);
        const AttackSpec spec{.method = AttackMethod::deepfool, .overshoot = 0.0};
        const DeepFoolResult df = deepfool(m, x, spec);
        if (!df.converged) continue;
        const double est = estimate_min_perturbation(m, x);
        const double len = norm2(df.perturbation);
        if (len == 0.0) continue;
        std::vector<double> moved(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) moved[i] = x[i] + df.perturbation[i] * est / len;
        CHECK(predict_class(m, moved) != predict_class(m, x));
    }
}

TEST_CASE("rho1 examples") {
    const ToyClassifier m = affine_binary({1.0, 0.0}, -0.5);
    LabeledDataset ds;
    ds.geometry = {1, 2, 1};
    ds.pixels = {0.6, 0.5, 0.8, 0.5};  // distances 0.1 and 0.3
    ds.labels = {0, 0};
    ds.sample_ids = {"a", "b"};
    const auto r = rho1(m, ds);
    CHECK(r.converged == 2);
    CHECK(r.mean == doctest::Approx(0.2).epsilon(1e-3));

    const auto single = rho1(m, one_sample(std::vector<double>{0.6, 0.5}, 0));
    LabeledDataset twice = one_sample(std::vector<double>{0.6, 0.5}, 0);
    twice.pixels = {0.6, 0.5, 0.6, 0.5};
    twice.labels = {0, 0};
    twice.sample_ids = {"a", "b"};
    CHECK(rho1(m, twice).mean == single.mean);
    CHECK(single.mean == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("rho2 examples") {
    const LossSpec cc{.name = "cc", .kind = LossKind::class_change};
    const LossSpec ce{.name = "ce", .kind = LossKind::cross_entropy, .reference = LossReference::true_label};
    SplitMix64 rng(9);
    const ToyClassifier mlp = random_mlp(rng, {3, 8, 2});
    LabeledDataset ds;
    ds.geometry = {1, 3, 1};
    for (int j = 0; j < 5; ++j) {
        for (double v : random_vector(rng, 3, 0, 1)) ds.pixels.push_back(v);
        ds.labels.push_back(static_cast<std::uint16_t>(j % 2));
        ds.sample_ids.push_back(std::to_string(j));
    }
    double clean = 0.0;
    for (std::size_t j = 0; j < ds.size(); ++j) clean += softmax_cross_entropy(mlp.predict(ds.image(j)), ds.labels[j]);
    CHECK(adversarial_risk_rho2(mlp, ds, ce, pgd_spec(0.0, 0.01, 3)) == doctest::Approx(clean / 5).epsilon(1e-14));

    // Affine sample at L-infinity distance |w.x+b| / ||w||_1 from the boundary.
    const std::vector<double> w{1.0, -1.0};
    const std::vector<double> x{0.55, 0.5};
    const ToyClassifier m = affine_binary(w, -0.0);
    const double linf = std::abs(dot(w, x)) / 2.0;
    const auto sample = one_sample(x, 0);
    const double eps = 1.1 * linf;
    CHECK(adversarial_risk_rho2(m, sample, cc, pgd_spec(eps, eps, 1)) == 1.0);
    CHECK(adversarial_risk_rho2(m, sample, cc, pgd_spec(0.9 * linf, 0.9 * linf, 1)) == 0.0);

    const std::vector<double> budgets{0.0, 0.02, 0.05, 0.1, 0.2};
    auto spec = pgd_spec(0.1, 0.02, 5);
    spec.random_start = true;
    const auto nested = adversarial_risk_rho2_nested(mlp, ds, ce, spec, budgets);
    REQUIRE(nested.size() == budgets.size());
    for (std::size_t i = 1; i < nested.size(); ++i) CHECK(nested[i] >= nested[i - 1]);
}

TEST_CASE("attack spec json round trip") {
    AttackMethod m{};
    REQUIRE(parse_attack_method("pgd", m));
    const auto spec = AttackSpec::from_json(m, {{"epsilon", 0.1}, {"step", 0.02}, {"iterations", 7}, {"random_start", true}});
    CHECK(spec.iterations == 7);
    CHECK(spec.random_start);
    const auto again = AttackSpec::from_json(m, spec.params_json());
    CHECK(again.params_json() == spec.params_json());
    CHECK_THROWS_AS((void)AttackSpec::from_json(m, {{"epsilon", 0.1}}), ConfigError);
}
