#pragma once
// Persisted intermediates that make the CLI stages independently runnable:
// a fold manifest (folds.json), per-fold model checkpoints, and the
// line-delimited attribution dump.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xuq/checkpoint.hpp"
#include "xuq/config.hpp"
#include "xuq/pipeline.hpp"

namespace xuq::pipeline {

namespace fs = std::filesystem;

inline std::string config_hash(const EvaluationConfig& cfg) {
    json j = cfg.to_json();
    j.erase("threads");
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(rng::fnv1a(j.dump())));
    return buf;
}

inline std::string model_filename(int fold, const std::string& kind) {
    return "fold" + std::to_string(fold) + "_" + kind + ".xnet";
}

// folds.json: config hash + per-fold splits, stats and sampled test ids.
inline void save_fold_manifest(const EvaluationConfig& cfg, const std::vector<FoldModels>& folds,
                               const std::string& directory) {
    json j;
    j["config_hash"] = config_hash(cfg);
    j["folds"] = json::array();
    for (const auto& fm : folds) {
        json f;
        f["fold"] = fm.fold;
        f["train"] = fm.split.train;
        f["test"] = fm.split.test;
        f["sample_ids"] = fm.sample_ids;
        f["feature_mean"] = fm.stats.mean;
        f["feature_stddev"] = fm.stats.stddev;
        j["folds"].push_back(std::move(f));
    }
    fs::create_directories(directory);
    write_text_file(fs::path(directory) / "folds.json", j.dump(2) + "\n");
}

inline void save_fold_models(const std::vector<FoldModels>& folds, const std::string& directory) {
    const fs::path models_dir = fs::path(directory) / "models";
    fs::create_directories(models_dir);
    for (const auto& fm : folds)
        for (const auto& [kind, model] : fm.models)
            net::save_checkpoint(model, (models_dir / model_filename(fm.fold, kind)).string());
}

// Loads checkpoints saved by `train` when the stored config hash matches;
// returns an empty map (and leaves a note in `why`) otherwise.
inline std::map<std::string, net::DenseNetwork> load_fold_models(const EvaluationConfig& cfg,
                                                                 const std::string& directory,
                                                                 std::string* why = nullptr) {
    std::map<std::string, net::DenseNetwork> models;
    const fs::path manifest_path = fs::path(directory) / "folds.json";
    std::ifstream f(manifest_path);
    if (!f) {
        if (why) *why = "no fold manifest at " + manifest_path.string();
        return models;
    }
    json j;
    f >> j;
    if (j.value("config_hash", "") != config_hash(cfg)) {
        if (why) *why = "config hash mismatch; retraining";
        return models;
    }
    for (const auto& fold : j.at("folds")) {
        const int fold_id = fold.at("fold").get<int>();
        for (const auto& u : cfg.uq) {
            const fs::path p = fs::path(directory) / "models" / model_filename(fold_id, u.kind);
            if (fs::exists(p))
                models.emplace("fold" + std::to_string(fold_id) + ":" + u.kind,
                               net::load_checkpoint(p.string()));
        }
    }
    return models;
}

// ---- attribution dump (line-delimited JSON) ----

struct AttributionDumpRecord {
    int fold = 0;
    std::string uq;
    std::string explainer;
    std::int64_t sample = 0;
    int member = 0;
    std::uint64_t mask_seed = 0;
    double y_hat = 0.0;
    std::vector<double> attribution;

    bool operator==(const AttributionDumpRecord&) const = default;
};

inline json to_json(const AttributionDumpRecord& r) {
    return json{{"fold", r.fold},         {"uq", r.uq},
                {"explainer", r.explainer}, {"sample", r.sample},
                {"member", r.member},     {"mask_seed", r.mask_seed},
                {"y_hat", r.y_hat},       {"attribution", r.attribution}};
}

inline AttributionDumpRecord dump_record_from_json(const json& j) {
    AttributionDumpRecord r;
    r.fold = j.at("fold").get<int>();
    r.uq = j.at("uq").get<std::string>();
    r.explainer = j.at("explainer").get<std::string>();
    r.sample = j.at("sample").get<std::int64_t>();
    r.member = j.at("member").get<int>();
    r.mask_seed = j.at("mask_seed").get<std::uint64_t>();
    r.y_hat = j.at("y_hat").get<double>();
    r.attribution = j.at("attribution").get<std::vector<double>>();
    return r;
}

// One line per (sample, method, member): attribution vector, the mask seed
// that produced the member, and the shared ensemble prediction.
inline std::vector<AttributionDumpRecord> compute_attribution_dump(
    const EvaluationConfig& cfg, const data::TabularDataset& ds, const FoldModels& fm) {
    std::vector<AttributionDumpRecord> records;
    for (const auto& u : cfg.uq) {
        const auto kind = net::parse_mask_kind(u.kind);
        const net::DenseNetwork& model = fm.models.at(u.kind);
        for (const auto& e : cfg.explainers) {
            const attrib::ExplainerSpec spec = e.to_spec();
            for (std::int64_t sample_id : fm.sample_ids) {
                const auto x = data::standardize_row(
                    ds.features[static_cast<std::size_t>(sample_id)], fm.stats);
                const auto res = attrib::uncertainty_attribution(
                    model, x, spec, kind, cfg.ensemble_size,
                    rng::derive(cfg.master_seed,
                                {"attribute", fm.fold, u.kind, e.method, sample_id}));
                const double y_hat = model.is_classifier()
                                         ? static_cast<double>(res.predictive.predicted_class)
                                         : res.predictive.mean_output[0];
                for (std::size_t k = 0; k < res.ensemble.members.size(); ++k) {
                    AttributionDumpRecord r;
                    r.fold = fm.fold;
                    r.uq = u.kind;
                    r.explainer = e.method;
                    r.sample = sample_id;
                    r.member = static_cast<int>(k);
                    r.mask_seed = res.ensemble.masks[k].seed;
                    r.y_hat = y_hat;
                    r.attribution = res.ensemble.members[k];
                    records.push_back(std::move(r));
                }
            }
        }
    }
    return records;
}

inline void write_attribution_dump(const std::vector<AttributionDumpRecord>& records,
                                   const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_attribution_dump: cannot open " + path);
    for (const auto& r : records) f << to_json(r).dump() << "\n";
    if (!f) throw std::runtime_error("write_attribution_dump: write failed: " + path);
}

inline std::vector<AttributionDumpRecord> read_attribution_dump(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_attribution_dump: cannot open " + path);
    std::vector<AttributionDumpRecord> records;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        records.push_back(dump_record_from_json(json::parse(line)));
    }
    return records;
}

}  // namespace xuq::pipeline
