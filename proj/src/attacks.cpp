// SPDX-License-Identifier: Apache-2.0
#include "krisk/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json_util.hpp"
#include "krisk/error.hpp"
#include "krisk/rng.hpp"

namespace krisk {

namespace {

using nlohmann::json;

// An iterate is on the decision boundary when its linearized distance is
// below this fraction of the accumulated perturbation.
constexpr double kBoundaryTolerance = 1e-10;
constexpr double kBracketWidth = 1e-3;

double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double l2_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void check_input(const Classifier& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) {
        throw DataError("attack: input has length " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(model.input_dim()));
    }
    require_unit_range(x, "attack input");
}

std::vector<double> along(std::span<const double> x, std::span<const double> dir, double scale) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + scale * dir[i];
    return out;
}

struct NearestBoundary {
    std::size_t target = 0;
    double distance = std::numeric_limits<double>::infinity();  // |f_k - f_c| / ‖w_k‖
    double gap = 0.0;                                           // f_k - f_c
    std::vector<double> normal;                                 // w_k = ∇(f_k - f_c)
};

// Linearized nearest boundary from class c among the other classes; targets
// with a zero gradient are skipped. Returns nullopt when none remain.
std::optional<NearestBoundary> nearest_boundary(const Classifier& model, std::span<const double> x,
                                                const Logits& logits, std::size_t c) {
    std::optional<NearestBoundary> best;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (k == c) continue;
        auto w = model.logit_diff_gradient(x, k, c);
        const double norm = l2_norm(w);
        if (!(norm > 0.0)) continue;
        const double gap = logits[k] - logits[c];
        const double dist = std::abs(gap) / norm;
        if (!best || dist < best->distance) best = NearestBoundary{k, dist, gap, std::move(w)};
    }
    return best;
}

}  // namespace

std::string_view to_string(AttackMethod method) noexcept {
    switch (method) {
        case AttackMethod::fgsm: return "fgsm";
        case AttackMethod::pgd: return "pgd";
        case AttackMethod::deepfool: return "deepfool";
    }
    return "unknown";
}

bool parse_attack_method(std::string_view name, AttackMethod& out) noexcept {
    for (auto m : {AttackMethod::fgsm, AttackMethod::pgd, AttackMethod::deepfool}) {
        if (to_string(m) == name) {
            out = m;
            return true;
        }
    }
    return false;
}

void AttackSpec::validate() const {
    const std::string what = std::string(to_string(method)) + " attack";
    auto finite = [](double v) { return std::isfinite(v); };
    switch (method) {
        case AttackMethod::fgsm:
            if (!finite(epsilon) || epsilon < 0.0) throw ConfigError(what + ": epsilon must be >= 0");
            break;
        case AttackMethod::pgd:
            if (!finite(epsilon) || epsilon < 0.0) throw ConfigError(what + ": epsilon must be >= 0");
            if (!finite(step) || step <= 0.0) throw ConfigError(what + ": step must be > 0");
            if (iterations < 1) throw ConfigError(what + ": iterations must be >= 1");
            break;
        case AttackMethod::deepfool:
            if (max_iter < 1) throw ConfigError(what + ": max_iter must be >= 1");
            if (!finite(overshoot) || overshoot < 0.0) throw ConfigError(what + ": overshoot must be >= 0");
            break;
    }
}

AttackSpec AttackSpec::from_json(AttackMethod method, const json& j) {
    const std::string what = std::string(to_string(method)) + " params";
    AttackSpec spec;
    spec.method = method;
    switch (method) {
        case AttackMethod::fgsm:
            detail::check_keys(j, {"epsilon"}, what);
            spec.epsilon = detail::get_number(j, "epsilon", what);
            break;
        case AttackMethod::pgd:
            detail::check_keys(j, {"epsilon", "step", "iterations", "random_start"}, what);
            spec.epsilon = detail::get_number(j, "epsilon", what);
            spec.step = detail::get_number(j, "step", what);
            spec.iterations = static_cast<std::uint32_t>(
                detail::as_uint(detail::require_key(j, "iterations", what), what + ".iterations"));
            if (auto it = j.find("random_start"); it != j.end()) {
                if (!it->is_boolean()) throw ConfigError(what + ".random_start: expected a boolean");
                spec.random_start = it->get<bool>();
            }
            break;
        case AttackMethod::deepfool:
            detail::check_keys(j, {"max_iter", "overshoot"}, what);
            if (auto it = j.find("max_iter"); it != j.end()) {
                spec.max_iter = static_cast<std::uint32_t>(detail::as_uint(*it, what + ".max_iter"));
            }
            spec.overshoot = detail::get_number_or(j, "overshoot", spec.overshoot, what);
            break;
    }
    spec.validate();
    return spec;
}

json AttackSpec::params_json() const {
    switch (method) {
        case AttackMethod::fgsm: return {{"epsilon", epsilon}};
        case AttackMethod::pgd:
            return {{"epsilon", epsilon}, {"step", step}, {"iterations", iterations},
                    {"random_start", random_start}};
        case AttackMethod::deepfool: return {{"max_iter", max_iter}, {"overshoot", overshoot}};
    }
    return json::object();
}

void require_gradients(const Classifier& model) {
    if (!model.supports_gradients()) {
        throw BlackBoxModelError("white-box attack requested on a model without gradients");
    }
}

std::vector<double> fgsm(const Classifier& model, std::span<const double> x, std::size_t label,
                         double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("fgsm: epsilon must be >= 0");
    require_gradients(model);
    check_input(model, x);
    const auto lg = model.loss_and_input_gradient(x, label);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::clamp(x[i] + epsilon * sign(lg.gradient[i]), 0.0, 1.0);
    }
    return out;
}

std::vector<double> pgd(const Classifier& model, std::span<const double> x, std::size_t label,
                        const AttackSpec& spec, std::uint64_t seed,
                        std::optional<std::span<const double>> start) {
    spec.validate();
    require_gradients(model);
    check_input(model, x);
    const double eps = spec.epsilon;
    auto project = [&](std::size_t i, double v) {
        return std::clamp(std::clamp(v, x[i] - eps, x[i] + eps), 0.0, 1.0);
    };

    std::vector<double> current(x.begin(), x.end());
    if (start) {
        if (start->size() != x.size()) throw DataError("pgd: start point has wrong length");
        for (std::size_t i = 0; i < x.size(); ++i) current[i] = project(i, (*start)[i]);
    } else if (spec.random_start) {
        SplitMix64 rng(seed);
        for (std::size_t i = 0; i < x.size(); ++i) current[i] = project(i, x[i] + rng.uniform(-eps, eps));
    }

    std::vector<double> best;
    double best_loss = -std::numeric_limits<double>::infinity();
    for (std::uint32_t t = 0; t <= spec.iterations; ++t) {
        const auto lg = model.loss_and_input_gradient(current, label);
        if (!std::isfinite(lg.loss)) throw NumericError("pgd: non-finite loss");
        if (t > 0 && lg.loss > best_loss) {
            best_loss = lg.loss;
            best = current;
        }
        if (t == spec.iterations) break;
        for (std::size_t i = 0; i < x.size(); ++i) {
            current[i] = project(i, current[i] + spec.step * sign(lg.gradient[i]));
        }
    }
    return best;
}

DeepFoolResult deepfool(const Classifier& model, std::span<const double> x, const AttackSpec& spec) {
    spec.validate();
    require_gradients(model);
    check_input(model, x);
    const Logits clean = model.predict(x);
    const std::size_t c = argmax(clean);

    DeepFoolResult result;
    std::vector<double> total(x.size(), 0.0);
    std::vector<double> point(x.begin(), x.end());
    Logits logits = clean;
    for (std::size_t iter = 0;; ++iter) {
        if (argmax(logits) != c) {
            result.converged = true;
            break;
        }
        const auto nearest = nearest_boundary(model, point, logits, c);
        if (!nearest) break;  // locally constant: no boundary in sight
        if (iter > 0 && nearest->distance <= kBoundaryTolerance * l2_norm(total)) {
            result.converged = true;
            break;
        }
        if (iter == spec.max_iter) break;
        const double norm2 = std::inner_product(nearest->normal.begin(), nearest->normal.end(),
                                                nearest->normal.begin(), 0.0);
        const double scale = std::abs(nearest->gap) / norm2;
        for (std::size_t i = 0; i < x.size(); ++i) {
            total[i] += scale * nearest->normal[i];
            point[i] = x[i] + total[i];
        }
        logits = model.predict(point);
        for (double v : logits) {
            if (!std::isfinite(v)) throw NumericError("deepfool: non-finite logits");
        }
        result.iterations = iter + 1;
    }

    result.perturbation.resize(x.size());
    result.adversarial.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        result.perturbation[i] = (1.0 + spec.overshoot) * total[i];
        result.adversarial[i] = std::clamp(x[i] + result.perturbation[i], 0.0, 1.0);
    }
    return result;
}

double estimate_min_perturbation(const Classifier& model, std::span<const double> x,
                                 const AttackSpec& spec) {
    if (spec.method != AttackMethod::deepfool) {
        throw ConfigError("estimate_min_perturbation needs a deepfool spec");
    }
    const DeepFoolResult df = deepfool(model, x, spec);
    if (!df.converged) throw NonConvergenceError("deepfool did not reach a decision boundary");
    const std::size_t c = predict_class(model, x);

    std::vector<double> direction = df.perturbation;
    double length = l2_norm(direction);
    if (!(length > 0.0)) {
        // x sits on the boundary already; step along the nearest boundary normal.
        const auto nearest = nearest_boundary(model, x, model.predict(x), c);
        if (!nearest) throw NonConvergenceError("no decision boundary reachable from input");
        direction = nearest->normal;
        length = 0.0;
    }
    const double dir_norm = l2_norm(direction);
    for (auto& v : direction) v /= dir_norm;

    auto changes_class = [&](double s) { return predict_class(model, along(x, direction, s)) != c; };

    double lo = 0.0;
    double hi = length > 0.0 ? length : std::numeric_limits<double>::min();
    int growth = 0;
    while (!changes_class(hi)) {
        lo = hi;
        hi *= 2.0;
        if (++growth > 2100 || !std::isfinite(hi)) {
            throw NonConvergenceError("class never changes along the deepfool direction");
        }
    }
    // Width relative to the lower end bounds the relative error of `hi`.
    for (int i = 0; i < 2000 && (lo == 0.0 || hi - lo > kBracketWidth * lo); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (changes_class(mid) ? hi : lo) = mid;
    }
    return hi;
}

Rho1Result rho1(const Classifier& model, const LabeledDataset& dataset, const AttackSpec& spec) {
    Rho1Result out;
    double sum = 0.0;
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        try {
            sum += estimate_min_perturbation(model, dataset.image(j), spec);
            ++out.converged;
        } catch (const NonConvergenceError&) {
            ++out.excluded;
        }
    }
    if (out.converged == 0) throw NonConvergenceError("rho1: no sample converged");
    out.mean = sum / static_cast<double>(out.converged);
    return out;
}

double adversarial_risk_rho2(const Classifier& model, const LabeledDataset& dataset,
                             const LossSpec& loss, const AttackSpec& spec) {
    if (spec.method != AttackMethod::pgd) throw ConfigError("rho2 needs a pgd spec");
    if (dataset.size() == 0) throw ConfigError("rho2: empty dataset");
    double sum = 0.0;
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        const auto x = dataset.image(j);
        const LossReferences refs{predict_class(model, x), dataset.labels[j]};
        const auto adv = pgd(model, x, refs.true_label, spec, derive_seed(spec.master_seed, 0, 0, j));
        sum += evaluate(loss, model.predict(adv), refs);
    }
    return sum / static_cast<double>(dataset.size());
}

std::vector<double> adversarial_risk_rho2_nested(const Classifier& model,
                                                 const LabeledDataset& dataset, const LossSpec& loss,
                                                 const AttackSpec& spec,
                                                 const std::vector<double>& budgets) {
    if (spec.method != AttackMethod::pgd) throw ConfigError("rho2 needs a pgd spec");
    if (dataset.size() == 0) throw ConfigError("rho2: empty dataset");
    if (!std::is_sorted(budgets.begin(), budgets.end())) {
        throw ConfigError("rho2: budgets must be ascending");
    }
    std::vector<double> sums(budgets.size(), 0.0);
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        const auto x = dataset.image(j);
        const LossReferences refs{predict_class(model, x), dataset.labels[j]};
        std::vector<double> point;
        double value = 0.0;
        for (std::size_t b = 0; b < budgets.size(); ++b) {
            AttackSpec at = spec;
            at.epsilon = budgets[b];
            std::vector<double> candidate =
                b == 0 ? pgd(model, x, refs.true_label, at, derive_seed(spec.master_seed, 0, 0, j))
                       : pgd(model, x, refs.true_label, at, 0, std::span<const double>(point));
            const double v = evaluate(loss, model.predict(candidate), refs);
            if (b == 0 || v >= value) {
                value = v;
                point = std::move(candidate);
            }
            sums[b] += value;
        }
    }
    for (auto& s : sums) s /= static_cast<double>(dataset.size());
    return sums;
}

}  // namespace krisk
