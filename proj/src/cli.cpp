// SPDX-License-Identifier: Apache-2.0
#include "krisk/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "krisk/attacks.hpp"
#include "krisk/dataset.hpp"
#include "krisk/engine.hpp"
#include "krisk/kri.hpp"
#include "krisk/remote.hpp"
#include "krisk/rng.hpp"
#include "krisk/synthetic.hpp"
#include "krisk/training.hpp"

namespace krisk {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file_bytes(path)); }

ImageGeometry parse_geometry(const std::string& text) {
    ImageGeometry g;
    char x1 = 0, x2 = 0;
    std::istringstream in(text);
    if (!(in >> g.height >> x1 >> g.width >> x2 >> g.channels) || x1 != 'x' || x2 != 'x' || !in.eof() ||
        g.pixels() == 0) {
        throw ConfigError("geometry must look like HxWxC with positive sizes, got '" + text + "'");
    }
    return g;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
    std::string kind = "blobs";
    std::size_t n = 100;
    std::size_t classes = 2;
    std::string geometry = "1x2x1";
    double sigma = 0.05;
    double separation = 6.0;
    double ring_width = 0.02;
    std::uint64_t seed = 0;
    fs::path out;
};

int gen_data(const GenDataArgs& a) {
    const ImageGeometry g = parse_geometry(a.geometry);
    LabeledDataset ds;
    if (a.kind == "blobs") {
        ds = make_blobs({.n = a.n, .classes = a.classes, .geometry = g, .sigma = a.sigma,
                         .separation = a.separation, .seed = a.seed});
    } else if (a.kind == "rings") {
        ds = make_rings({.n = a.n, .classes = a.classes, .geometry = g, .width = a.ring_width, .seed = a.seed});
    } else {
        throw ConfigError("gen-data: unknown kind '" + a.kind + "' (blobs or rings)");
    }
    save_krid(ds, a.out);
    std::cout << "wrote " << ds.size() << " samples (" << a.geometry << ", " << a.classes << " classes) to "
              << a.out.string() << "\n";
    return 0;
}

// ---- train-toy --------------------------------------------------------------

struct TrainArgs {
    fs::path dataset;
    std::vector<std::size_t> hidden;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    std::string augment = "none";
    std::uint64_t seed = 0;
    fs::path out;
};

int train(const TrainArgs& a) {
    const LabeledDataset ds = load_dataset(a.dataset);
    TrainConfig cfg;
    cfg.hidden = a.hidden;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.learning_rate;
    cfg.augmentation = Augmentation::parse(a.augment);
    cfg.seed = a.seed;
    const ToyClassifier model = train_toy(ds, cfg);
    model.save(a.out);
    std::cout << "train accuracy " << accuracy(model, ds) << "; model written to " << a.out.string() << "\n";
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    fs::path config;
    std::optional<fs::path> dataset;
    std::optional<fs::path> model;
    std::optional<std::string> model_url;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> n_draws;
    std::size_t workers = 1;
    std::size_t chunk = 64;
    fs::path out;
};

int eval(const EvalArgs& a) {
    json j = read_json_file(a.config);
    if (a.seed) j["master_seed"] = *a.seed;
    if (a.n_draws) j["n_draws"] = *a.n_draws;
    if (a.dataset) {
        const std::string path = fs::absolute(*a.dataset).string();
        if (j.contains("dataset") && j["dataset"].is_object()) j["dataset"]["path"] = path;
        else j["dataset"] = path;
    }
    const ScenarioConfig cfg = ScenarioConfig::from_json(j, a.config.parent_path());
    if (!cfg.dataset) throw ConfigError("eval: no dataset (set \"dataset\" in the config or pass --dataset)");
    const LabeledDataset ds = cfg.select_samples(load_dataset(cfg.dataset->path));

    std::unique_ptr<Classifier> model;
    if (a.model) model = std::make_unique<ToyClassifier>(ToyClassifier::load(*a.model));
    else model = std::make_unique<RemoteClassifier>(*a.model_url, ds.geometry.pixels());

    const auto start = std::chrono::steady_clock::now();
    const RiskTensor t = build_tensor(*model, ds, cfg, {.workers = a.workers, .chunk = a.chunk});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save(t, a.out);

    const auto d = t.dims();
    std::cout << "tensor " << d[0] << "x" << d[1] << "x" << d[2] << "x" << d[3] << " written to " << a.out.string()
              << " (" << seconds << " s)\n";
    for (const auto& loss : t.index().loss_names) {
        Selection sel;
        sel.losses = std::vector<std::string>{loss};
        std::cout << "  mean " << loss << " = " << rho_hat(t, sel) << "\n";
    }
    return 0;
}

// ---- kri --------------------------------------------------------------------

struct KriArgs {
    fs::path config;
    std::vector<fs::path> tensors;
    std::string format = "json";
    std::string model_id = "model";
    std::optional<std::string> timestamp;
    fs::path out;
};

int kri(const KriArgs& a) {
    const ScenarioConfig cfg = ScenarioConfig::load(a.config);
    if (cfg.kris.empty()) throw ConfigError("kri: the config defines no KRIs");
    ReportFormat format{};
    if (a.format == "json") format = ReportFormat::json;
    else if (a.format == "csv") format = ReportFormat::csv;
    else if (a.format == "plotdata") format = ReportFormat::plotdata;
    else throw ConfigError("kri: unknown format '" + a.format + "'");

    std::vector<RiskTensor> tensors;
    Provenance provenance;
    for (const auto& path : a.tensors) {
        tensors.push_back(load_tensor(path));
        provenance.tensor_sha256.push_back(file_sha256(path));
    }
    provenance.config_sha256 = file_sha256(a.config);
    provenance.model_id = a.model_id;
    provenance.generated_at = a.timestamp ? *a.timestamp : utc_now();

    const auto kris = compute_kris(tensors, cfg.kris);
    const KriReport report = make_report(kris, cfg.resolved_weights(), std::move(provenance));
    emit_report(report, format, a.out);
    for (const auto& e : report.kris) {
        std::cout << e.name << " = " << e.value << " (weight " << e.weight << ", " << e.cells << " cells)\n";
    }
    std::cout << "final risk = " << report.final_risk << "\n";
    return 0;
}

// ---- attack -----------------------------------------------------------------

struct AttackArgs {
    fs::path model;
    fs::path dataset;
    std::string sample = "0";
    std::string method = "fgsm";
    double epsilon = 0.03;
    std::optional<double> step;
    std::uint32_t iterations = 10;
    bool random_start = false;
    std::uint32_t max_iter = 50;
    double overshoot = 0.02;
    std::uint64_t seed = 0;
    std::optional<fs::path> out;
};

double linf_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

int attack(const AttackArgs& a) {
    const ToyClassifier model = ToyClassifier::load(a.model);
    const LabeledDataset ds = load_dataset(a.dataset);
    const auto id = std::find(ds.sample_ids.begin(), ds.sample_ids.end(), a.sample);
    if (id == ds.sample_ids.end()) throw ConfigError("attack: no sample with id '" + a.sample + "'");
    const std::size_t j = static_cast<std::size_t>(id - ds.sample_ids.begin());
    const auto x = ds.image(j);
    const std::size_t label = ds.labels[j];

    AttackSpec spec;
    if (!parse_attack_method(a.method, spec.method)) throw ConfigError("attack: unknown method '" + a.method + "'");
    spec.epsilon = a.epsilon;
    spec.step = a.step ? *a.step : a.epsilon / 4.0;
    spec.iterations = a.iterations;
    spec.random_start = a.random_start;
    spec.max_iter = a.max_iter;
    spec.overshoot = a.overshoot;
    spec.master_seed = a.seed;
    spec.validate();

    json result{{"sample", a.sample}, {"method", a.method}, {"label", label}};
    std::vector<double> adv;
    switch (spec.method) {
        case AttackMethod::fgsm: adv = fgsm(model, x, label, spec.epsilon); break;
        case AttackMethod::pgd: adv = pgd(model, x, label, spec, derive_seed(a.seed, 0, 0, j)); break;
        case AttackMethod::deepfool: {
            const DeepFoolResult r = deepfool(model, x, spec);
            adv = r.adversarial;
            result["iterations"] = r.iterations;
            result["converged"] = r.converged;
            break;
        }
    }
    const auto clean_logits = model.predict(x);
    const auto adv_logits = model.predict(adv);
    result["clean_class"] = argmax(clean_logits);
    result["adversarial_class"] = argmax(adv_logits);
    result["flipped"] = argmax(clean_logits) != argmax(adv_logits);
    result["linf"] = linf_distance(adv, x);
    result["l2"] = l2_distance(adv, x);
    result["loss_clean"] = softmax_cross_entropy(clean_logits, label);
    result["loss_adversarial"] = softmax_cross_entropy(adv_logits, label);
    if (spec.method == AttackMethod::deepfool) {
        try {
            result["min_perturbation_l2"] = estimate_min_perturbation(model, x);
        } catch (const NonConvergenceError&) {
            result["min_perturbation_l2"] = nullptr;
        }
    }
    std::cout << result.dump(2) << "\n";
    if (a.out) {
        std::ofstream out(*a.out);
        if (!out) throw DataError("cannot write " + a.out->string());
        out << result.dump(2) << "\n";
    }
    return 0;
}

// ---- serve-model ------------------------------------------------------------

struct ServeArgs {
    fs::path model;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool no_gradient = false;
};

int serve(const ServeArgs& a) {
    auto model = std::make_shared<const ToyClassifier>(ToyClassifier::load(a.model));
    ModelServer server(model, {.gradients = !a.no_gradient});
    const int port = server.bind(a.host, a.port);

    // Block termination signals here so the listener threads inherit the mask;
    // this thread collects them with sigwait.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread listener([&] { server.listen(); });
    server.wait_until_ready();
    std::cout << "serving " << a.model.string() << " on http://" << a.host << ":" << port
              << (a.no_gradient ? " (gradients disabled)" : "") << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    listener.join();
    pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"krisk: scenario-based risk assessment for image classifiers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "krisk 1.0.0");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic labeled dataset (KRID)");
    gen_cmd->add_option("--kind", gen.kind, "blobs or rings")->capture_default_str();
    gen_cmd->add_option("--n", gen.n, "number of samples")->capture_default_str();
    gen_cmd->add_option("--classes", gen.classes, "number of classes")->capture_default_str();
    gen_cmd->add_option("--geometry", gen.geometry, "image size HxWxC")->capture_default_str();
    gen_cmd->add_option("--sigma", gen.sigma, "blob spread per pixel")->capture_default_str();
    gen_cmd->add_option("--separation", gen.separation, "blob center distance in sigmas")->capture_default_str();
    gen_cmd->add_option("--ring-width", gen.ring_width, "radial noise of rings")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "output .krid file")->required();

    std::vector<fs::path> cifar_inputs;
    fs::path cifar_out;
    auto* cifar_cmd = app.add_subcommand("import-cifar", "Convert CIFAR-10 binary batches to KRID");
    cifar_cmd->add_option("batches", cifar_inputs, "data_batch_*.bin files")->required();
    cifar_cmd->add_option("--out", cifar_out, "output .krid file")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train-toy", "Train a toy MLP with mini-batch SGD");
    train_cmd->add_option("--dataset", tr.dataset, "training dataset")->required();
    train_cmd->add_option("--hidden", tr.hidden, "hidden layer widths, e.g. 32,16")->delimiter(',');
    train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", tr.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", tr.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--augment", tr.augment, "none, gaussian:<sigma> or fgsm:<eps>")->capture_default_str();
    train_cmd->add_option("--seed", tr.seed)->capture_default_str();
    train_cmd->add_option("--out", tr.out, "output model JSON")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Populate a risk tensor for a scenario");
    eval_cmd->add_option("--config", ev.config, "scenario JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--dataset", ev.dataset, "dataset file (overrides the config)");
    auto* model_opt = eval_cmd->add_option("--model", ev.model, "model JSON file");
    auto* url_opt = eval_cmd->add_option("--model-url", ev.model_url, "model server, e.g. http://127.0.0.1:8080");
    model_opt->excludes(url_opt);
    eval_cmd->add_option("--seed", ev.seed, "master seed (overrides the config)");
    eval_cmd->add_option("--n-draws", ev.n_draws, "draws per distribution (overrides the config)");
    eval_cmd->add_option("--workers", ev.workers, "worker threads")->capture_default_str();
    eval_cmd->add_option("--chunk", ev.chunk, "work units per inference batch")->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "output .krit file")->required();

    KriArgs kr;
    auto* kri_cmd = app.add_subcommand("kri", "Compute KRIs and the final risk from tensor files");
    kri_cmd->add_option("--config", kr.config, "scenario JSON with kris and weights")->required()->check(CLI::ExistingFile);
    kri_cmd->add_option("--tensor", kr.tensors, "tensor file; repeat for several")->required();
    kri_cmd->add_option("--format", kr.format, "json, csv or plotdata")->capture_default_str();
    kri_cmd->add_option("--model-id", kr.model_id, "model label in the report")->capture_default_str();
    kri_cmd->add_option("--timestamp", kr.timestamp, "generated_at value (default: now)");
    kri_cmd->add_option("--out", kr.out, "report file")->required();

    AttackArgs at;
    auto* attack_cmd = app.add_subcommand("attack", "Attack one sample and print perturbation statistics");
    attack_cmd->add_option("--model", at.model, "model JSON file")->required();
    attack_cmd->add_option("--dataset", at.dataset, "dataset file")->required();
    attack_cmd->add_option("--sample", at.sample, "sample id")->capture_default_str();
    attack_cmd->add_option("--method", at.method, "fgsm, pgd or deepfool")->capture_default_str();
    attack_cmd->add_option("--epsilon", at.epsilon)->capture_default_str();
    attack_cmd->add_option("--step", at.step, "pgd step (default epsilon/4)");
    attack_cmd->add_option("--iterations", at.iterations)->capture_default_str();
    attack_cmd->add_flag("--random-start", at.random_start);
    attack_cmd->add_option("--max-iter", at.max_iter)->capture_default_str();
    attack_cmd->add_option("--overshoot", at.overshoot)->capture_default_str();
    attack_cmd->add_option("--seed", at.seed)->capture_default_str();
    attack_cmd->add_option("--out", at.out, "also write the JSON result here");

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve-model", "Serve a model over HTTP (/v1/predict, /v1/gradient)");
    serve_cmd->add_option("--model", sv.model, "model JSON file")->required();
    serve_cmd->add_option("--host", sv.host)->capture_default_str();
    serve_cmd->add_option("--port", sv.port, "0 picks a free port")->capture_default_str();
    serve_cmd->add_flag("--no-gradient", sv.no_gradient, "answer /v1/gradient with 501");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code(ErrorKind::config);
    }

    try {
        if (*gen_cmd) return gen_data(gen);
        if (*cifar_cmd) {
            const LabeledDataset ds = import_cifar(cifar_inputs);
            save_krid(ds, cifar_out);
            std::cout << "imported " << ds.size() << " samples to " << cifar_out.string() << "\n";
            return 0;
        }
        if (*train_cmd) return train(tr);
        if (*eval_cmd) {
            if (!ev.model && !ev.model_url) throw ConfigError("eval: pass --model or --model-url");
            return eval(ev);
        }
        if (*kri_cmd) return kri(kr);
        if (*attack_cmd) return attack(at);
        if (*serve_cmd) return serve(sv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(ErrorKind::runtime);
    }
    return exit_code(ErrorKind::config);
}

}  // namespace krisk
