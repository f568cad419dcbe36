#pragma once
// Declarative run specification. Parsed from JSON with strict unknown-key
// rejection; every validation failure is reported before any work starts.
// Defaults reproduce the tabular protocol: 2x50 ReLU MLP, 5 folds, 100
// samples per fold, K=50, M=10, MCD p=0.1 and MCDC p=0.3.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xuq/dataset.hpp"
#include "xuq/explainers.hpp"
#include "xuq/network.hpp"
#include "xuq/train.hpp"

namespace xuq::pipeline {

using nlohmann::json;

struct DatasetConfig {
    std::string path;
    std::string delimiter = ";";
    std::string target_column = "quality";
    std::string task = "regression";
};

struct NetworkConfig {
    std::vector<std::size_t> hidden_layers{50, 50};
};

struct TrainingConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string loss = "auto";  // mse | cross_entropy | auto (by task)
};

struct UqConfig {
    std::string kind;  // mcd | mcdc
    double p = 0.1;
};

struct ExplainerConfig {
    std::string method;
    int steps = 64;            // integrated_gradients
    double epsilon = 1e-6;     // lrp_epsilon
    int samples = 200;         // sampled_shapley
    std::vector<double> baseline;  // empty = zeros

    ExplainerConfig() = default;
    ExplainerConfig(std::string method_name, int ig_steps = 64, double lrp_eps = 1e-6,
                    int shapley_samples = 200, std::vector<double> baseline_vec = {})
        : method(std::move(method_name)),
          steps(ig_steps),
          epsilon(lrp_eps),
          samples(shapley_samples),
          baseline(std::move(baseline_vec)) {}

    attrib::ExplainerSpec to_spec() const {
        attrib::ExplainerSpec spec;
        spec.method = attrib::parse_method(method);
        spec.ig_steps = steps;
        spec.lrp_epsilon = epsilon;
        spec.shapley_samples = samples;
        spec.baseline = baseline;
        return spec;
    }
};

struct MetricConfig {
    double tau = 0.05;
    int n_pert = 50;
    double rri_k = 4.0;
    double norm_order = 2.0;
    int knn_neighbours = 10;
    double ris_noise_scale = 0.05;
    std::string stochastic_ucs = "frozen_seed";   // frozen_seed | undefined
    std::string ucs_jacobian_layer = "last_hidden";  // last_hidden | layer index
};

struct EvaluationConfig {
    DatasetConfig dataset;
    NetworkConfig network;
    TrainingConfig training;
    std::vector<UqConfig> uq{{"mcd", 0.1}, {"mcdc", 0.3}};
    std::vector<ExplainerConfig> explainers{{"lrp_epsilon"},
                                            {"integrated_gradients"},
                                            {"input_times_gradient"},
                                            {"sampled_shapley"}};
    int ensemble_size = 50;             // K
    int repeatability_repetitions = 10; // M
    MetricConfig metrics;
    int folds = 5;
    int samples_per_fold = 100;
    std::uint64_t master_seed = 42;
    std::string output_dir = "out";
    int threads = 0;  // 0 = hardware concurrency
    std::string dropout_scaling = "none";  // none | inverted

    void validate() const;
    json to_json() const;
    static EvaluationConfig from_json(const json& j);
    static EvaluationConfig from_file(const std::string& path);
};

namespace detail {

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw std::invalid_argument("config: " + context + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "' in " + context);
    }
}

template <typename T>
inline void read_into(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline void EvaluationConfig::validate() const {
    if (dataset.path.empty()) throw std::invalid_argument("config: dataset.path is required");
    if (dataset.delimiter.size() != 1)
        throw std::invalid_argument("config: dataset.delimiter must be one character");
    if (dataset.target_column.empty())
        throw std::invalid_argument("config: dataset.target_column is required");
    data::parse_task(dataset.task);
    if (network.hidden_layers.empty())
        throw std::invalid_argument("config: network.hidden_layers must not be empty");
    for (std::size_t w : network.hidden_layers)
        if (w == 0) throw std::invalid_argument("config: hidden layer width must be positive");
    if (training.epochs < 1) throw std::invalid_argument("config: training.epochs must be >= 1");
    if (training.batch_size < 1)
        throw std::invalid_argument("config: training.batch_size must be >= 1");
    if (!(training.learning_rate > 0.0))
        throw std::invalid_argument("config: training.learning_rate must be > 0");
    if (training.loss != "auto") net::parse_loss(training.loss);
    if (uq.empty()) throw std::invalid_argument("config: at least one uq entry is required");
    for (const auto& u : uq) {
        net::parse_mask_kind(u.kind);
        if (!(u.p >= 0.0 && u.p < 1.0))
            throw std::invalid_argument("config: uq probability must be in [0,1)");
    }
    if (explainers.empty())
        throw std::invalid_argument("config: at least one explainer is required");
    for (const auto& e : explainers) e.to_spec().validate();
    if (ensemble_size < 2) throw std::invalid_argument("config: ensemble_size must be >= 2");
    if (repeatability_repetitions < 1)
        throw std::invalid_argument("config: repeatability_repetitions must be >= 1");
    if (!(metrics.tau > 0.0)) throw std::invalid_argument("config: metrics.tau must be > 0");
    if (metrics.n_pert < 1) throw std::invalid_argument("config: metrics.n_pert must be >= 1");
    if (!(metrics.norm_order >= 1.0))
        throw std::invalid_argument("config: metrics.norm_order must be >= 1");
    if (metrics.knn_neighbours < 1)
        throw std::invalid_argument("config: metrics.knn_neighbours must be >= 1");
    if (!(metrics.ris_noise_scale > 0.0))
        throw std::invalid_argument("config: metrics.ris_noise_scale must be > 0");
    if (metrics.stochastic_ucs != "frozen_seed" && metrics.stochastic_ucs != "undefined")
        throw std::invalid_argument("config: metrics.stochastic_ucs must be frozen_seed|undefined");
    if (metrics.ucs_jacobian_layer != "last_hidden") {
        std::size_t pos = 0;
        const long idx = std::stol(metrics.ucs_jacobian_layer, &pos);
        if (pos != metrics.ucs_jacobian_layer.size() || idx < 0 ||
            static_cast<std::size_t>(idx) >= network.hidden_layers.size())
            throw std::invalid_argument(
                "config: metrics.ucs_jacobian_layer must be last_hidden or a hidden layer index");
    }
    if (folds < 2) throw std::invalid_argument("config: folds must be >= 2");
    if (samples_per_fold < 1)
        throw std::invalid_argument("config: samples_per_fold must be >= 1");
    if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
    if (dropout_scaling != "none" && dropout_scaling != "inverted")
        throw std::invalid_argument("config: dropout_scaling must be none|inverted");
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
}

inline json EvaluationConfig::to_json() const {
    json j;
    j["dataset"] = {{"path", dataset.path},
                    {"delimiter", dataset.delimiter},
                    {"target_column", dataset.target_column},
                    {"task", dataset.task}};
    j["network"] = {{"hidden_layers", network.hidden_layers}};
    j["training"] = {{"epochs", training.epochs},
                     {"batch_size", training.batch_size},
                     {"learning_rate", training.learning_rate},
                     {"loss", training.loss}};
    j["uq"] = json::array();
    for (const auto& u : uq) j["uq"].push_back({{"kind", u.kind}, {"p", u.p}});
    j["explainers"] = json::array();
    for (const auto& e : explainers) {
        json je{{"method", e.method}};
        if (e.method == "integrated_gradients") je["steps"] = e.steps;
        if (e.method == "lrp_epsilon") je["epsilon"] = e.epsilon;
        if (e.method == "sampled_shapley") je["samples"] = e.samples;
        if (!e.baseline.empty()) je["baseline"] = e.baseline;
        j["explainers"].push_back(je);
    }
    j["ensemble_size"] = ensemble_size;
    j["repeatability_repetitions"] = repeatability_repetitions;
    j["metrics"] = {{"tau", metrics.tau},
                    {"n_pert", metrics.n_pert},
                    {"rri_k", metrics.rri_k},
                    {"norm_order", metrics.norm_order},
                    {"knn_neighbours", metrics.knn_neighbours},
                    {"ris_noise_scale", metrics.ris_noise_scale},
                    {"stochastic_ucs", metrics.stochastic_ucs},
                    {"ucs_jacobian_layer", metrics.ucs_jacobian_layer}};
    j["folds"] = folds;
    j["samples_per_fold"] = samples_per_fold;
    j["master_seed"] = master_seed;
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    j["dropout_scaling"] = dropout_scaling;
    return j;
}

inline EvaluationConfig EvaluationConfig::from_json(const json& j) {
    EvaluationConfig cfg;
    detail::require_keys(j,
                         {"dataset", "network", "training", "uq", "explainers", "ensemble_size",
                          "repeatability_repetitions", "metrics", "folds", "samples_per_fold",
                          "master_seed", "output_dir", "threads", "dropout_scaling"},
                         "top level");
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::require_keys(d, {"path", "delimiter", "target_column", "task"}, "dataset");
        detail::read_into(d, "path", cfg.dataset.path);
        detail::read_into(d, "delimiter", cfg.dataset.delimiter);
        detail::read_into(d, "target_column", cfg.dataset.target_column);
        detail::read_into(d, "task", cfg.dataset.task);
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        detail::require_keys(n, {"hidden_layers"}, "network");
        detail::read_into(n, "hidden_layers", cfg.network.hidden_layers);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::require_keys(t, {"epochs", "batch_size", "learning_rate", "loss"}, "training");
        detail::read_into(t, "epochs", cfg.training.epochs);
        detail::read_into(t, "batch_size", cfg.training.batch_size);
        detail::read_into(t, "learning_rate", cfg.training.learning_rate);
        detail::read_into(t, "loss", cfg.training.loss);
    }
    if (j.contains("uq")) {
        cfg.uq.clear();
        for (const auto& u : j.at("uq")) {
            detail::require_keys(u, {"kind", "p"}, "uq entry");
            UqConfig uc;
            detail::read_into(u, "kind", uc.kind);
            detail::read_into(u, "p", uc.p);
            cfg.uq.push_back(uc);
        }
    }
    if (j.contains("explainers")) {
        cfg.explainers.clear();
        for (const auto& e : j.at("explainers")) {
            detail::require_keys(e, {"method", "steps", "epsilon", "samples", "baseline"},
                                 "explainer entry");
            ExplainerConfig ec;
            detail::read_into(e, "method", ec.method);
            detail::read_into(e, "steps", ec.steps);
            detail::read_into(e, "epsilon", ec.epsilon);
            detail::read_into(e, "samples", ec.samples);
            detail::read_into(e, "baseline", ec.baseline);
            cfg.explainers.push_back(ec);
        }
    }
    detail::read_into(j, "ensemble_size", cfg.ensemble_size);
    detail::read_into(j, "repeatability_repetitions", cfg.repeatability_repetitions);
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        detail::require_keys(m,
                             {"tau", "n_pert", "rri_k", "norm_order", "knn_neighbours",
                              "ris_noise_scale", "stochastic_ucs", "ucs_jacobian_layer"},
                             "metrics");
        detail::read_into(m, "tau", cfg.metrics.tau);
        detail::read_into(m, "n_pert", cfg.metrics.n_pert);
        detail::read_into(m, "rri_k", cfg.metrics.rri_k);
        detail::read_into(m, "norm_order", cfg.metrics.norm_order);
        detail::read_into(m, "knn_neighbours", cfg.metrics.knn_neighbours);
        detail::read_into(m, "ris_noise_scale", cfg.metrics.ris_noise_scale);
        detail::read_into(m, "stochastic_ucs", cfg.metrics.stochastic_ucs);
        detail::read_into(m, "ucs_jacobian_layer", cfg.metrics.ucs_jacobian_layer);
    }
    detail::read_into(j, "folds", cfg.folds);
    detail::read_into(j, "samples_per_fold", cfg.samples_per_fold);
    detail::read_into(j, "master_seed", cfg.master_seed);
    detail::read_into(j, "output_dir", cfg.output_dir);
    detail::read_into(j, "threads", cfg.threads);
    detail::read_into(j, "dropout_scaling", cfg.dropout_scaling);
    cfg.validate();
    return cfg;
}

inline EvaluationConfig EvaluationConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    json j;
    f >> j;
    return from_json(j);
}

}  // namespace xuq::pipeline
