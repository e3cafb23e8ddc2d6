// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "krisk/dataset.hpp"
#include "krisk/losses.hpp"
#include "krisk/models.hpp"

namespace krisk {

enum class AttackMethod { fgsm, pgd, deepfool };

[[nodiscard]] std::string_view to_string(AttackMethod method) noexcept;
[[nodiscard]] bool parse_attack_method(std::string_view name, AttackMethod& out) noexcept;

/// White-box attack configuration. `epsilon` bounds the L-infinity ball for
/// fgsm/pgd; deepfool is unbounded and uses max_iter/overshoot.
struct AttackSpec {
    AttackMethod method = AttackMethod::fgsm;
    double epsilon = 0.0;
    double step = 0.0;              // pgd step size α
    std::uint32_t iterations = 1;   // pgd
    bool random_start = false;      // pgd
    std::uint32_t max_iter = 50;    // deepfool
    double overshoot = 0.02;        // deepfool η
    std::uint64_t master_seed = 0;

    /// Throws ConfigError when a field violates its domain.
    void validate() const;
    [[nodiscard]] static AttackSpec from_json(AttackMethod method, const nlohmann::json& params);
    /// Parameter record only (method and seed live in the distribution descriptor).
    [[nodiscard]] nlohmann::json params_json() const;
    /// True when the attack output does not depend on a seed.
    [[nodiscard]] bool deterministic() const noexcept {
        return method != AttackMethod::pgd || !random_start;
    }
};

/// Throws BlackBoxModelError unless the model exposes input gradients.
void require_gradients(const Classifier& model);

/// clip(x + ε·sign(∇ CE(model(x), label))), with sign(0) = 0.
[[nodiscard]] std::vector<double> fgsm(const Classifier& model, std::span<const double> x,
                                       std::size_t label, double epsilon);

/// Projected gradient ascent on cross-entropy inside B∞(x, ε) ∩ [0, 1]^n.
/// Returns the iterate x_1..x_n with the highest loss (earliest on ties), so
/// one step with α = ε reproduces fgsm bit for bit. `start` overrides the
/// initial point (used for nested budgets); otherwise x_0 = x, or a uniform
/// draw from the ball seeded by `seed` when random_start is set.
[[nodiscard]] std::vector<double> pgd(const Classifier& model, std::span<const double> x,
                                      std::size_t label, const AttackSpec& spec,
                                      std::uint64_t seed = 0,
                                      std::optional<std::span<const double>> start = std::nullopt);

struct DeepFoolResult {
    std::vector<double> adversarial;   // clip(x + perturbation)
    std::vector<double> perturbation;  // (1 + η) · accumulated steps
    std::size_t iterations = 0;
    bool converged = false;
};

/// Iterative linearization towards the nearest decision boundary. Converged
/// means the class changed or the iterate sits on the boundary to working
/// precision.
[[nodiscard]] DeepFoolResult deepfool(const Classifier& model, std::span<const double> x,
                                      const AttackSpec& spec);

/// Upper-bound estimate of the minimal L2 perturbation that changes the
/// predicted class: DeepFool direction, then bisection on its length until
/// the bracket is within relative width 1e-3. The returned length applied
/// along that direction (unclipped) always changes the class.
/// Throws NonConvergenceError when no boundary is found.
[[nodiscard]] double estimate_min_perturbation(const Classifier& model, std::span<const double> x,
                                               const AttackSpec& spec = {.method = AttackMethod::deepfool,
                                                                         .overshoot = 0.0});

struct Rho1Result {
    double mean = 0.0;
    std::size_t converged = 0;
    std::size_t excluded = 0;
};

/// Mean minimal perturbation over the dataset; non-converged samples are
/// excluded and counted. Throws NonConvergenceError when none converge.
[[nodiscard]] Rho1Result rho1(const Classifier& model, const LabeledDataset& dataset,
                              const AttackSpec& spec = {.method = AttackMethod::deepfool,
                                                        .overshoot = 0.0});

/// PGD-ρ2: mean loss at the PGD point, a lower bound on the inner maximum.
/// Sample j's random start uses derive_seed(spec.master_seed, 0, 0, j).
[[nodiscard]] double adversarial_risk_rho2(const Classifier& model, const LabeledDataset& dataset,
                                           const LossSpec& loss, const AttackSpec& spec);

/// PGD-ρ2 for ascending budgets with nested seeding: the attack at each budget
/// starts from the previous budget's point and keeps it when it scores
/// higher, so the result is non-decreasing in ε. `spec.epsilon` is ignored.
[[nodiscard]] std::vector<double> adversarial_risk_rho2_nested(const Classifier& model,
                                                               const LabeledDataset& dataset,
                                                               const LossSpec& loss,
                                                               const AttackSpec& spec,
                                                               const std::vector<double>& budgets);

}  // namespace krisk
