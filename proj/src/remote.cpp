// SPDX-License-Identifier: Apache-2.0
#include "krisk/remote.hpp"

#include <cmath>

#include "httplib.h"
#include "json.hpp"
#include "krisk/error.hpp"

namespace krisk {

namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

json inputs_json(const std::vector<std::vector<double>>& inputs) {
    json arr = json::array();
    for (const auto& x : inputs) arr.push_back(x);
    return arr;
}

httplib::Result post(const std::string& endpoint, const std::string& path, const json& body) {
    httplib::Client client(endpoint);
    if (!client.is_valid()) throw ConfigError("invalid model endpoint '" + endpoint + "'");
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(120));
    auto res = client.Post(path, body.dump(), kJson);
    if (!res) {
        throw TransportError("request to " + endpoint + path + " failed: " +
                             httplib::to_string(res.error()));
    }
    return res;
}

json parse_response(const httplib::Result& res, const std::string& what) {
    if (res->status != 200) {
        throw TransportError(what + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw TransportError(what + ": malformed response: " + e.what());
    }
}

std::vector<double> number_row(const json& row, std::size_t expected, const std::string& what) {
    if (!row.is_array() || (expected != 0 && row.size() != expected)) {
        throw TransportError(what + ": malformed response row");
    }
    std::vector<double> out;
    out.reserve(row.size());
    for (const auto& v : row) {
        if (!v.is_number()) throw TransportError(what + ": non-numeric value in response");
        out.push_back(v.get<double>());
    }
    return out;
}

void require_batch(const std::vector<std::vector<double>>& inputs, const std::string& what) {
    if (inputs.empty()) throw ConfigError(what + ": empty batch");
}

// Parses {"inputs":[[...],...]} into rows; throws ConfigError on malformed bodies.
std::vector<std::vector<double>> request_inputs(const json& body) {
    const auto it = body.find("inputs");
    if (it == body.end() || !it->is_array() || it->empty()) {
        throw ConfigError("'inputs' must be a nonempty array");
    }
    std::vector<std::vector<double>> inputs;
    for (const auto& row : *it) {
        if (!row.is_array()) throw ConfigError("each input must be an array");
        std::vector<double> x;
        for (const auto& v : row) {
            if (!v.is_number()) throw ConfigError("inputs must be numeric");
            x.push_back(v.get<double>());
        }
        inputs.push_back(std::move(x));
    }
    return inputs;
}

HttpReply bad_request(const std::string& message) {
    return {400, json{{"error", message}}.dump()};
}

}  // namespace

std::vector<Logits> remote_predict(const std::string& endpoint,
                                   const std::vector<std::vector<double>>& inputs) {
    require_batch(inputs, "remote_predict");
    const auto res = post(endpoint, "/v1/predict", {{"inputs", inputs_json(inputs)}});
    const json body = parse_response(res, "remote_predict");
    const auto it = body.find("logits");
    if (it == body.end() || !it->is_array() || it->size() != inputs.size()) {
        throw TransportError("remote_predict: response has wrong number of logits rows");
    }
    std::vector<Logits> out;
    out.reserve(inputs.size());
    for (const auto& row : *it) out.push_back(number_row(row, 0, "remote_predict"));
    return out;
}

std::vector<LossGradient> remote_gradient(const std::string& endpoint,
                                          const std::vector<std::vector<double>>& inputs,
                                          const std::vector<std::size_t>& labels) {
    require_batch(inputs, "remote_gradient");
    if (labels.size() != inputs.size()) throw ConfigError("remote_gradient: one label per input");
    const auto res = post(endpoint, "/v1/gradient",
                          {{"inputs", inputs_json(inputs)}, {"labels", labels}, {"loss", "cross_entropy"}});
    if (res->status == 501) {
        throw BlackBoxModelError("model at " + endpoint + " does not provide gradients");
    }
    const json body = parse_response(res, "remote_gradient");
    const auto grads = body.find("gradients");
    const auto losses = body.find("losses");
    if (grads == body.end() || losses == body.end() || !grads->is_array() || !losses->is_array() ||
        grads->size() != inputs.size() || losses->size() != inputs.size()) {
        throw TransportError("remote_gradient: malformed response");
    }
    std::vector<LossGradient> out(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!(*losses)[i].is_number()) throw TransportError("remote_gradient: non-numeric loss");
        out[i].loss = (*losses)[i].get<double>();
        out[i].gradient = number_row((*grads)[i], inputs[i].size(), "remote_gradient");
    }
    return out;
}

RemoteClassifier::RemoteClassifier(std::string endpoint, std::size_t input_dim)
    : endpoint_(std::move(endpoint)), input_dim_(input_dim) {
    if (input_dim_ == 0) throw ConfigError("remote model: input dimension must be positive");
    const auto probe = remote_predict(endpoint_, {std::vector<double>(input_dim_, 0.0)});
    num_classes_ = probe.front().size();
    if (num_classes_ == 0) throw TransportError("remote model returned empty logits");
}

Logits RemoteClassifier::predict(std::span<const double> x) const {
    return predict_batch({std::vector<double>(x.begin(), x.end())}).front();
}

std::vector<Logits> RemoteClassifier::predict_batch(
    const std::vector<std::vector<double>>& inputs) const {
    for (const auto& x : inputs) {
        if (x.size() != input_dim_) throw DataError("remote model: input dimension mismatch");
    }
    auto out = remote_predict(endpoint_, inputs);
    for (const auto& logits : out) {
        if (logits.size() != num_classes_) throw TransportError("remote model: logits length changed");
    }
    return out;
}

bool RemoteClassifier::supports_gradients() const {
    std::call_once(probe_once_, [this] {
        try {
            (void)remote_gradient(endpoint_, {std::vector<double>(input_dim_, 0.0)}, {0});
            gradients_ = true;
        } catch (const BlackBoxModelError&) {
            gradients_ = false;
        }
    });
    return gradients_;
}

LossGradient RemoteClassifier::loss_and_input_gradient(std::span<const double> x,
                                                       std::size_t label) const {
    if (x.size() != input_dim_) throw DataError("remote model: input dimension mismatch");
    return remote_gradient(endpoint_, {std::vector<double>(x.begin(), x.end())}, {label}).front();
}

std::vector<double> RemoteClassifier::logit_diff_gradient(std::span<const double>, std::size_t,
                                                          std::size_t) const {
    throw BlackBoxModelError("remote models do not expose logit-difference gradients");
}

HttpReply handle_predict(const Classifier& model, std::string_view body) {
    try {
        const auto inputs = request_inputs(json::parse(body));
        json logits = json::array();
        for (const auto& row : model.predict_batch(inputs)) logits.push_back(row);
        return {200, json{{"logits", std::move(logits)}}.dump()};
    } catch (const json::exception& e) {
        return bad_request(e.what());
    } catch (const ConfigError& e) {
        return bad_request(e.what());
    } catch (const DataError& e) {
        return bad_request(e.what());
    }
}

HttpReply handle_gradient(const Classifier& model, std::string_view body, bool gradients_enabled) {
    if (!gradients_enabled || !model.supports_gradients()) {
        return {501, json{{"error", "gradients not supported"}}.dump()};
    }
    try {
        const json request = json::parse(body);
        const auto inputs = request_inputs(request);
        const auto labels = request.find("labels");
        if (labels == request.end() || !labels->is_array() || labels->size() != inputs.size()) {
            return bad_request("'labels' must hold one integer per input");
        }
        if (auto loss = request.find("loss");
            loss != request.end() && (!loss->is_string() || *loss != "cross_entropy")) {
            return bad_request("only loss \"cross_entropy\" is supported");
        }
        json grads = json::array();
        json losses = json::array();
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto& label = (*labels)[i];
            if (!label.is_number_integer() || label.get<std::int64_t>() < 0) {
                return bad_request("labels must be nonnegative integers");
            }
            const auto lg = model.loss_and_input_gradient(inputs[i], label.get<std::size_t>());
            grads.push_back(lg.gradient);
            losses.push_back(lg.loss);
        }
        return {200, json{{"gradients", std::move(grads)}, {"losses", std::move(losses)}}.dump()};
    } catch (const json::exception& e) {
        return bad_request(e.what());
    } catch (const ConfigError& e) {
        return bad_request(e.what());
    } catch (const DataError& e) {
        return bad_request(e.what());
    }
}

struct ModelServer::Impl {
    std::shared_ptr<const Classifier> model;
    ServerOptions options;
    httplib::Server server;
};

ModelServer::ModelServer(std::shared_ptr<const Classifier> model, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
    if (!model) throw ConfigError("model server: no model");
    impl_->model = std::move(model);
    impl_->options = options;
    auto reply = [](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        res.set_content(r.body, kJson);
    };
    Impl* impl = impl_.get();
    impl_->server.Post("/v1/predict", [impl, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle_predict(*impl->model, req.body));
    });
    impl_->server.Post("/v1/gradient", [impl, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle_gradient(*impl->model, req.body, impl->options.gradients));
    });
}

ModelServer::~ModelServer() { stop(); }

int ModelServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw TransportError("model server: cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw TransportError("model server: cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void ModelServer::listen() {
    if (!impl_->server.listen_after_bind()) throw TransportError("model server: listen failed");
}

void ModelServer::stop() { impl_->server.stop(); }

void ModelServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace krisk
