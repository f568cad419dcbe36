#pragma once
// End-to-end evaluation: k-fold training, per-sample metric computation for
// every (uq, explainer) combination, sanity checks and report assembly.
//
// Determinism: every random decision derives its seed from (master seed,
// fold, uq kind, explainer, sample id, metric name) via rng::derive, and
// parallel workers write into preassigned slots, so the report body is
// byte-identical across runs and thread counts.

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "xuq/attribution.hpp"
#include "xuq/config.hpp"
#include "xuq/dataset.hpp"
#include "xuq/metrics.hpp"
#include "xuq/report.hpp"
#include "xuq/sanity.hpp"
#include "xuq/train.hpp"

namespace xuq::pipeline {

struct FoldModels {
    int fold = 0;
    data::FoldSplit split;
    data::FeatureStats stats;                    // raw-feature stats, training split only
    std::vector<std::int64_t> sample_ids;        // dataset rows evaluated in this fold
    std::vector<std::vector<double>> train_std;  // standardized training rows (resample pool)
    metrics::PerturbationPolicy policy;          // stats of the standardized representation
    std::map<std::string, net::DenseNetwork> models;  // uq kind -> trained model
};

namespace detail {

inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline net::Loss resolve_loss(const EvaluationConfig& cfg) {
    if (cfg.training.loss == "auto")
        return data::parse_task(cfg.dataset.task) == data::Task::Classification
                   ? net::Loss::CrossEntropy
                   : net::Loss::Mse;
    return net::parse_loss(cfg.training.loss);
}

inline std::size_t output_dim(const data::TabularDataset& ds) {
    if (ds.task == data::Task::Regression) return 1;
    double max_class = 0.0;
    for (double t : ds.targets) max_class = std::max(max_class, t);
    return static_cast<std::size_t>(max_class) + 1;
}

inline std::size_t resolve_ucs_layer(const EvaluationConfig& cfg) {
    if (cfg.metrics.ucs_jacobian_layer == "last_hidden")
        return cfg.network.hidden_layers.size() - 1;
    return static_cast<std::size_t>(std::stol(cfg.metrics.ucs_jacobian_layer));
}

}  // namespace detail

// Trains one model per uq kind on the standardized training split of one
// fold and assembles the fold's perturbation policy. `preloaded` entries
// keyed "fold<F>:<kind>" substitute persisted checkpoints for training;
// since training is deterministic this is a speed path, not a semantic one.
inline FoldModels prepare_fold(const data::TabularDataset& ds, const EvaluationConfig& cfg,
                               const std::vector<data::FoldSplit>& splits, int fold,
                               int verbosity = 0,
                               const std::map<std::string, net::DenseNetwork>* preloaded
                               = nullptr) {
    FoldModels fm;
    fm.fold = fold;
    fm.split = splits[fold];
    fm.stats = data::compute_feature_stats(ds, fm.split.train);

    fm.train_std.reserve(fm.split.train.size());
    std::vector<double> train_targets;
    train_targets.reserve(fm.split.train.size());
    for (std::size_t i : fm.split.train) {
        fm.train_std.push_back(data::standardize_row(ds.features[i], fm.stats));
        train_targets.push_back(ds.targets[i]);
    }

    // Metric perturbations operate in the model's (standardized) input
    // space; the policy stats are computed there, from the training split.
    fm.policy.mu.assign(ds.dim(), 0.0);
    fm.policy.sigma.assign(ds.dim(), 0.0);
    for (const auto& row : fm.train_std)
        for (std::size_t j = 0; j < row.size(); ++j) fm.policy.mu[j] += row[j];
    for (auto& m : fm.policy.mu) m /= static_cast<double>(fm.train_std.size());
    for (const auto& row : fm.train_std)
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double d = row[j] - fm.policy.mu[j];
            fm.policy.sigma[j] += d * d;
        }
    for (auto& s : fm.policy.sigma)
        s = std::sqrt(s / static_cast<double>(fm.train_std.size() - 1));
    fm.policy.raw_offset = fm.stats.mean;
    fm.policy.raw_scale = fm.stats.stddev;
    fm.policy.k_sigma = cfg.metrics.rri_k;
    fm.policy.noise_scale = cfg.metrics.ris_noise_scale;
    fm.policy.knn_k = cfg.metrics.knn_neighbours;
    fm.policy.train_rows = nullptr;  // bound to fm.train_std by the caller after copy/move

    const bool classifier = data::parse_task(cfg.dataset.task) == data::Task::Classification;
    net::TrainConfig tc;
    tc.epochs = cfg.training.epochs;
    tc.batch_size = cfg.training.batch_size;
    tc.learning_rate = cfg.training.learning_rate;
    tc.loss = detail::resolve_loss(cfg);
    for (const auto& u : cfg.uq) {
        if (preloaded) {
            const auto it = preloaded->find("fold" + std::to_string(fold) + ":" + u.kind);
            if (it != preloaded->end()) {
                fm.models.emplace(u.kind, it->second);
                continue;
            }
        }
        const auto kind = net::parse_mask_kind(u.kind);
        const double p_drop = kind == net::MaskKind::Dropout ? u.p : 0.0;
        const double p_conn = kind == net::MaskKind::Dropconnect ? u.p : 0.0;
        auto arch = net::make_mlp(ds.dim(), cfg.network.hidden_layers, detail::output_dim(ds),
                                  classifier, p_drop, p_conn);
        tc.seed = rng::derive(cfg.master_seed, {"train", fold, u.kind});
        if (verbosity > 0)
            std::cerr << "[fold " << fold << "] training " << u.kind << " model\n";
        fm.models.emplace(u.kind, net::train(arch, fm.train_std, train_targets, tc));
    }

    // deterministic test-sample selection
    std::vector<std::size_t> test = fm.split.test;
    rng::Rng pick(rng::derive(cfg.master_seed, {"samples", fold}));
    pick.shuffle(test);
    const std::size_t take = std::min<std::size_t>(cfg.samples_per_fold, test.size());
    fm.sample_ids.assign(test.begin(), test.begin() + take);
    std::sort(fm.sample_ids.begin(), fm.sample_ids.end());
    return fm;
}

// All six metric families for one (fold, uq, explainer, sample) cell.
inline std::vector<ScoreRecord> evaluate_sample(const EvaluationConfig& cfg, const FoldModels& fm,
                                                const UqConfig& uq_cfg,
                                                const ExplainerConfig& explainer_cfg,
                                                std::int64_t sample_id,
                                                std::span<const double> x_std) {
    const auto kind = net::parse_mask_kind(uq_cfg.kind);
    const net::DenseNetwork& model = fm.models.at(uq_cfg.kind);
    const std::string method = uq_cfg.kind + ":" + explainer_cfg.method;
    attrib::ExplainerSpec spec = explainer_cfg.to_spec();
    const int K = cfg.ensemble_size;

    const std::uint64_t base = rng::derive(
        cfg.master_seed, {"metric", fm.fold, uq_cfg.kind, explainer_cfg.method, sample_id});
    const auto scaling = cfg.dropout_scaling == "inverted" ? net::DropoutScaling::Inverted
                                                           : net::DropoutScaling::None;
    const auto ua_fn = metrics::make_ua_fn(model, spec, kind, K, scaling);
    const auto s2_fn = metrics::make_s2_fn(model, kind, K, scaling);

    std::vector<ScoreRecord> out;
    auto push_scalar = [&](const std::string& family, const metrics::MetricScore& score) {
        ScoreRecord r;
        r.fold = fm.fold;
        r.method = method;
        r.metric = family;
        r.sample = sample_id;
        r.value = score.value;
        r.reason = score.reason;
        r.curve_x = score.curve_x;
        r.curve_y = score.curve_y;
        r.survivors = score.survivor_count;
        out.push_back(std::move(r));
    };
    auto push_pair = [&](const std::string& family, const metrics::SimilarityPair& pair) {
        ScoreRecord r;
        r.fold = fm.fold;
        r.method = method;
        r.metric = family;
        r.sample = sample_id;
        r.cosine = pair.cosine;
        r.spearman = pair.spearman;
        r.reason = pair.reason;
        out.push_back(std::move(r));
    };

    // complexity
    {
        const auto u = ua_fn(x_std, rng::derive(base, {"complexity"})).u;
        push_scalar("complexity", metrics::complexity(u));
    }
    // repeatability
    push_pair("repeatability",
              metrics::repeatability(ua_fn, x_std, cfg.repeatability_repetitions,
                                     rng::derive(base, {"repeatability"})));
    // feature flipping
    {
        const auto u = ua_fn(x_std, rng::derive(base, {"flipping", "u"})).u;
        push_scalar("feature_flipping", metrics::feature_flipping_auc(
                                            s2_fn, x_std, u, fm.policy,
                                            rng::derive(base, {"flipping"})));
    }
    // RIS
    {
        metrics::RisParams params;
        params.n_pert = cfg.metrics.n_pert;
        params.tau = cfg.metrics.tau;
        params.p_norm = cfg.metrics.norm_order;
        push_scalar("ris", metrics::relative_input_stability(ua_fn, s2_fn, x_std, fm.policy,
                                                             params, rng::derive(base, {"ris"})));
    }
    // RRI
    push_scalar("rri",
                metrics::relative_rank_improvement(ua_fn, x_std, fm.policy,
                                                   rng::derive(base, {"rri"})));
    // UCS
    {
        const bool stochastic = attrib::is_stochastic(spec.method);
        if (stochastic && cfg.metrics.stochastic_ucs == "undefined") {
            metrics::SimilarityPair pair;
            pair.reason = "stochastic-explainer";
            push_pair("ucs", pair);
        } else {
            const auto res = attrib::uncertainty_attribution(model, x_std, spec, kind, K,
                                                             rng::derive(base, {"ucs"}), scaling);
            const std::optional<int> target =
                model.is_classifier() ? std::optional<int>(res.predictive.predicted_class)
                                      : std::nullopt;
            attrib::ExplainerSpec lin_spec = spec;
            if (stochastic) lin_spec.seed = rng::derive(base, {"ucs-frozen"});
            const double p = kind == net::MaskKind::Dropout ? model.dropout_probability()
                                                            : model.dropconnect_probability();
            const auto u_lin = attrib::analytic_uncertainty_attribution(
                model, x_std, lin_spec, kind, p, detail::resolve_ucs_layer(cfg), stochastic,
                target);
            push_pair("ucs", metrics::uncertainty_conveyance_similarity(res.u, u_lin));
        }
    }
    return out;
}

// Fills the report's sanity and internal-consistency sections from its
// per-sample records. Needs at least two (uq, explainer) methods; with
// fewer the sections stay empty.
inline void compute_sanity_sections(EvaluationReport& report) {
    report.sanity.clear();
    report.internal_consistency.clear();
    std::set<std::string> method_names;
    for (const auto& r : report.records) method_names.insert(r.method);
    if (method_names.size() < 2) return;

    const auto table = build_score_table(report.records);
    const bool enough_samples = table.samples().size() >= 2;
    for (const auto& metric : expanded_metrics()) {
        SanityEntry imr{metric, "inter_method_reliability", {}, std::nullopt};
        SanityEntry rc{metric, "ranking_consistency", {}, std::nullopt};
        SanityEntry acov{metric, "average_coefficient_of_variation", {}, std::nullopt};
        for (std::size_t f = 0; f < table.folds().size(); ++f) {
            imr.per_fold.push_back(sanity::inter_method_reliability_slice(table, metric, f));
            rc.per_fold.push_back(
                enough_samples ? sanity::ranking_consistency_slice(table, metric, f)
                               : std::nullopt);
            acov.per_fold.push_back(
                sanity::average_coefficient_of_variation_slice(table, metric, f).value);
        }
        imr.fold_mean = sanity::detail::mean_of_defined(imr.per_fold);
        rc.fold_mean = sanity::detail::mean_of_defined(rc.per_fold);
        acov.fold_mean = sanity::detail::mean_of_defined(acov.per_fold);
        report.sanity.push_back(std::move(imr));
        report.sanity.push_back(std::move(rc));
        report.sanity.push_back(std::move(acov));
    }
    for (const std::string ucs_metric : {"ucs_spearman", "ucs_cosine"}) {
        std::vector<std::vector<std::optional<double>>> per_fold;
        for (std::size_t f = 0; f < table.folds().size(); ++f)
            per_fold.push_back(sanity::internal_consistency_reliability_slice(
                table, "rri", table, ucs_metric, f));
        for (std::size_t m = 0; m < table.methods().size(); ++m) {
            InternalConsistencyEntry entry;
            entry.method = table.methods()[m];
            entry.metric_pair = "rri~" + ucs_metric;
            for (const auto& fold_values : per_fold) entry.per_fold.push_back(fold_values[m]);
            entry.fold_mean = sanity::detail::mean_of_defined(entry.per_fold);
            report.internal_consistency.push_back(std::move(entry));
        }
    }
}

// Full evaluation over all folds (optionally a subset), methods and samples.
inline EvaluationReport run_evaluation(const EvaluationConfig& cfg,
                                       std::optional<std::vector<int>> fold_subset = std::nullopt,
                                       int verbosity = 0,
                                       const std::map<std::string, net::DenseNetwork>*
                                           preloaded_models = nullptr) {
    cfg.validate();
    data::CsvOptions csv;
    csv.delimiter = cfg.dataset.delimiter[0];
    csv.target_column = cfg.dataset.target_column;
    const auto ds = data::load_csv_dataset(cfg.dataset.path, csv,
                                           data::parse_task(cfg.dataset.task));

    const auto splits = data::kfold_split(ds.rows(), cfg.folds,
                                          rng::derive(cfg.master_seed, {"kfold"}));
    std::vector<int> folds_to_run;
    for (int f = 0; f < cfg.folds; ++f) {
        if (!fold_subset ||
            std::find(fold_subset->begin(), fold_subset->end(), f) != fold_subset->end())
            folds_to_run.push_back(f);
    }
    if (folds_to_run.empty()) throw std::invalid_argument("run_evaluation: empty fold subset");

    std::vector<FoldModels> folds;
    folds.reserve(folds_to_run.size());
    for (int f : folds_to_run) {
        folds.push_back(prepare_fold(ds, cfg, splits, f, verbosity, preloaded_models));
        folds.back().policy.train_rows = &folds.back().train_std;
    }

    // task grid in canonical order: fold, uq, explainer, sample
    struct Task {
        std::size_t fold_index;
        std::size_t uq_index;
        std::size_t explainer_index;
        std::size_t sample_index;
    };
    std::vector<Task> tasks;
    for (std::size_t fi = 0; fi < folds.size(); ++fi)
        for (std::size_t ui = 0; ui < cfg.uq.size(); ++ui)
            for (std::size_t ei = 0; ei < cfg.explainers.size(); ++ei)
                for (std::size_t si = 0; si < folds[fi].sample_ids.size(); ++si)
                    tasks.push_back({fi, ui, ei, si});

    std::vector<std::vector<ScoreRecord>> slots(tasks.size());
    std::atomic<std::size_t> done{0};
    detail::parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
        const Task& t = tasks[i];
        const FoldModels& fm = folds[t.fold_index];
        const std::int64_t sample_id = fm.sample_ids[t.sample_index];
        const auto x_std = data::standardize_row(
            ds.features[static_cast<std::size_t>(sample_id)], fm.stats);
        slots[i] = evaluate_sample(cfg, fm, cfg.uq[t.uq_index], cfg.explainers[t.explainer_index],
                                   sample_id, x_std);
        const std::size_t d = done.fetch_add(1) + 1;
        if (verbosity > 0 && (d % 64 == 0 || d == tasks.size()))
            std::cerr << "[evaluate] " << d << "/" << tasks.size() << " sample tasks done\n";
    });

    EvaluationReport report;
    json config_echo = cfg.to_json();
    // execution details; must not affect the report body
    config_echo.erase("threads");
    config_echo.erase("output_dir");
    report.config_echo = std::move(config_echo);
    for (const auto& fm : folds) {
        FoldInfo info;
        info.fold = fm.fold;
        info.train_rows = static_cast<int>(fm.split.train.size());
        info.test_rows = static_cast<int>(fm.split.test.size());
        info.sample_ids = fm.sample_ids;
        report.folds.push_back(std::move(info));
    }
    for (auto& slot : slots)
        for (auto& record : slot) report.records.push_back(std::move(record));
    report.aggregates = compute_aggregates(report.records);

    compute_sanity_sections(report);

    report.notes = json{{"ensemble_size", cfg.ensemble_size},
                        {"repeatability_repetitions", cfg.repeatability_repetitions},
                        {"ucs_jacobian_layer", detail::resolve_ucs_layer(cfg)},
                        {"stochastic_ucs", cfg.metrics.stochastic_ucs},
                        {"ulin_caveat",
                         "dropout u_lin linearises a single hidden layer; for multi-layer "
                         "dropout it is a single-layer approximation"}};
    return report;
}

}  // namespace xuq::pipeline
