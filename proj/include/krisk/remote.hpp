// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "krisk/models.hpp"

namespace krisk {

// Client side of the model-serving protocol:
//   POST /v1/predict  {"inputs":[[...],...]}                 -> {"logits":[[...],...]}
//   POST /v1/gradient {"inputs":[[...]],"labels":[...],
//                      "loss":"cross_entropy"}              -> {"gradients":[[...]],"losses":[...]}
// A 501 from /v1/gradient marks a black-box model.

/// One round trip. Empty batches are rejected before any transport.
[[nodiscard]] std::vector<Logits> remote_predict(const std::string& endpoint,
                                                 const std::vector<std::vector<double>>& inputs);
/// Throws BlackBoxModelError on HTTP 501.
[[nodiscard]] std::vector<LossGradient> remote_gradient(
    const std::string& endpoint, const std::vector<std::vector<double>>& inputs,
    const std::vector<std::size_t>& labels);

/// Classifier served over HTTP. The class count is discovered with one probe
/// request at construction.
class RemoteClassifier final : public Classifier {
public:
    RemoteClassifier(std::string endpoint, std::size_t input_dim);

    [[nodiscard]] std::size_t input_dim() const override { return input_dim_; }
    [[nodiscard]] std::size_t num_classes() const override { return num_classes_; }
    [[nodiscard]] const std::string& endpoint() const noexcept { return endpoint_; }

    [[nodiscard]] Logits predict(std::span<const double> x) const override;
    [[nodiscard]] std::vector<Logits> predict_batch(
        const std::vector<std::vector<double>>& inputs) const override;

    /// Probes /v1/gradient once and caches the answer.
    [[nodiscard]] bool supports_gradients() const override;
    [[nodiscard]] LossGradient loss_and_input_gradient(std::span<const double> x,
                                                       std::size_t label) const override;
    /// Not part of the protocol; always throws BlackBoxModelError.
    [[nodiscard]] std::vector<double> logit_diff_gradient(std::span<const double> x,
                                                          std::size_t a,
                                                          std::size_t b) const override;

private:
    std::string endpoint_;
    std::size_t input_dim_;
    std::size_t num_classes_ = 0;
    mutable std::once_flag probe_once_;
    mutable bool gradients_ = false;
};

struct HttpReply {
    int status = 200;
    std::string body;
};

/// Request handlers of the reference server, usable without a socket.
[[nodiscard]] HttpReply handle_predict(const Classifier& model, std::string_view body);
[[nodiscard]] HttpReply handle_gradient(const Classifier& model, std::string_view body,
                                        bool gradients_enabled);

struct ServerOptions {
    bool gradients = true;  // false: /v1/gradient answers 501
};

/// Reference model server. Handlers are stateless; concurrent requests are fine.
class ModelServer {
public:
    ModelServer(std::shared_ptr<const Classifier> model, ServerOptions options = {});
    ~ModelServer();
    ModelServer(const ModelServer&) = delete;
    ModelServer& operator=(const ModelServer&) = delete;

    /// Binds to `port` (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); requires a prior bind().
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace krisk
