#pragma once
// Evaluation report: per-sample score records, pooled aggregates with 95%
// confidence intervals, the sanity-check section, and serialisation. The
// JSON body contains no timestamps and round-trips losslessly, so two runs
// with the same config and seed produce byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xuq/score_table.hpp"

namespace xuq::pipeline {

using nlohmann::json;

inline constexpr const char* kReportSchemaVersion = "1";
inline constexpr const char* kToolVersion = "0.1.0";

// The six metric families; similarity families carry a (cosine, spearman)
// pair and expand to two columns in flat exports and sanity tables.
inline const std::vector<std::string>& metric_families() {
    static const std::vector<std::string> families{"complexity",        "repeatability",
                                                   "feature_flipping",  "ris",
                                                   "rri",               "ucs"};
    return families;
}

inline const std::vector<std::string>& expanded_metrics() {
    static const std::vector<std::string> names{
        "complexity",        "repeatability_cosine", "repeatability_spearman",
        "feature_flipping",  "ris",                  "rri",
        "ucs_cosine",        "ucs_spearman"};
    return names;
}

inline bool is_similarity_family(const std::string& family) {
    return family == "repeatability" || family == "ucs";
}

struct ScoreRecord {
    int fold = 0;
    std::string method;  // "<uq>:<explainer>"
    std::string metric;  // family name
    std::int64_t sample = 0;
    std::optional<double> value;            // scalar families
    std::optional<double> cosine, spearman; // similarity families
    std::string reason;                     // set when undefined
    std::vector<double> curve_x, curve_y;   // feature_flipping payload
    int survivors = -1;                     // ris payload

    bool operator==(const ScoreRecord&) const = default;
};

struct AggregateRow {
    std::string method;
    std::string metric;  // expanded name
    int defined_count = 0;
    int undefined_count = 0;
    double mean = 0.0, median = 0.0, max = 0.0, ci_low = 0.0, ci_high = 0.0;

    bool operator==(const AggregateRow&) const = default;
};

struct SanityEntry {
    std::string metric;  // expanded name
    std::string check;   // inter_method_reliability | ranking_consistency | acov
    std::vector<std::optional<double>> per_fold;
    std::optional<double> fold_mean;

    bool operator==(const SanityEntry&) const = default;
};

struct InternalConsistencyEntry {
    std::string method;
    std::string metric_pair;  // e.g. "rri~ucs_spearman"
    std::vector<std::optional<double>> per_fold;
    std::optional<double> fold_mean;

    bool operator==(const InternalConsistencyEntry&) const = default;
};

struct FoldInfo {
    int fold = 0;
    int train_rows = 0;
    int test_rows = 0;
    std::vector<std::int64_t> sample_ids;

    bool operator==(const FoldInfo&) const = default;
};

struct EvaluationReport {
    std::string schema_version = kReportSchemaVersion;
    std::string tool_version = kToolVersion;
    json config_echo;
    json notes;
    std::vector<FoldInfo> folds;
    std::vector<ScoreRecord> records;
    std::vector<AggregateRow> aggregates;
    std::vector<SanityEntry> sanity;
    std::vector<InternalConsistencyEntry> internal_consistency;

    bool operator==(const EvaluationReport&) const = default;
};

// ---- json round-trip helpers ----

namespace detail {

inline json opt_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

inline std::optional<double> opt_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline json opt_vec_to_json(const std::vector<std::optional<double>>& v) {
    json arr = json::array();
    for (const auto& x : v) arr.push_back(opt_to_json(x));
    return arr;
}

inline std::vector<std::optional<double>> opt_vec_from_json(const json& j) {
    std::vector<std::optional<double>> out;
    for (const auto& x : j) out.push_back(opt_from_json(x));
    return out;
}

}  // namespace detail

inline json to_json(const ScoreRecord& r) {
    json j{{"fold", r.fold},   {"method", r.method},   {"metric", r.metric},
           {"sample", r.sample}, {"reason", r.reason}};
    j["value"] = detail::opt_to_json(r.value);
    j["cosine"] = detail::opt_to_json(r.cosine);
    j["spearman"] = detail::opt_to_json(r.spearman);
    if (!r.curve_x.empty()) {
        j["curve_x"] = r.curve_x;
        j["curve_y"] = r.curve_y;
    }
    if (r.survivors >= 0) j["survivors"] = r.survivors;
    return j;
}

inline ScoreRecord score_record_from_json(const json& j) {
    ScoreRecord r;
    r.fold = j.at("fold").get<int>();
    r.method = j.at("method").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.sample = j.at("sample").get<std::int64_t>();
    r.reason = j.at("reason").get<std::string>();
    r.value = detail::opt_from_json(j.at("value"));
    r.cosine = detail::opt_from_json(j.at("cosine"));
    r.spearman = detail::opt_from_json(j.at("spearman"));
    if (j.contains("curve_x")) {
        r.curve_x = j.at("curve_x").get<std::vector<double>>();
        r.curve_y = j.at("curve_y").get<std::vector<double>>();
    }
    if (j.contains("survivors")) r.survivors = j.at("survivors").get<int>();
    return r;
}

inline json to_json(const EvaluationReport& report) {
    json j;
    j["schema_version"] = report.schema_version;
    j["tool_version"] = report.tool_version;
    j["config"] = report.config_echo;
    j["notes"] = report.notes;
    j["folds"] = json::array();
    for (const auto& f : report.folds)
        j["folds"].push_back({{"fold", f.fold},
                              {"train_rows", f.train_rows},
                              {"test_rows", f.test_rows},
                              {"sample_ids", f.sample_ids}});
    j["records"] = json::array();
    for (const auto& r : report.records) j["records"].push_back(to_json(r));
    j["aggregates"] = json::array();
    for (const auto& a : report.aggregates)
        j["aggregates"].push_back({{"method", a.method},
                                   {"metric", a.metric},
                                   {"defined_count", a.defined_count},
                                   {"undefined_count", a.undefined_count},
                                   {"mean", a.mean},
                                   {"median", a.median},
                                   {"max", a.max},
                                   {"ci_low", a.ci_low},
                                   {"ci_high", a.ci_high}});
    j["sanity"] = json::array();
    for (const auto& s : report.sanity)
        j["sanity"].push_back({{"metric", s.metric},
                               {"check", s.check},
                               {"per_fold", detail::opt_vec_to_json(s.per_fold)},
                               {"fold_mean", detail::opt_to_json(s.fold_mean)}});
    j["internal_consistency"] = json::array();
    for (const auto& e : report.internal_consistency)
        j["internal_consistency"].push_back({{"method", e.method},
                                             {"metric_pair", e.metric_pair},
                                             {"per_fold", detail::opt_vec_to_json(e.per_fold)},
                                             {"fold_mean", detail::opt_to_json(e.fold_mean)}});
    return j;
}

inline EvaluationReport report_from_json(const json& j) {
    EvaluationReport report;
    report.schema_version = j.at("schema_version").get<std::string>();
    report.tool_version = j.at("tool_version").get<std::string>();
    report.config_echo = j.at("config");
    report.notes = j.at("notes");
    for (const auto& f : j.at("folds")) {
        FoldInfo info;
        info.fold = f.at("fold").get<int>();
        info.train_rows = f.at("train_rows").get<int>();
        info.test_rows = f.at("test_rows").get<int>();
        info.sample_ids = f.at("sample_ids").get<std::vector<std::int64_t>>();
        report.folds.push_back(std::move(info));
    }
    for (const auto& r : j.at("records")) report.records.push_back(score_record_from_json(r));
    for (const auto& a : j.at("aggregates")) {
        AggregateRow row;
        row.method = a.at("method").get<std::string>();
        row.metric = a.at("metric").get<std::string>();
        row.defined_count = a.at("defined_count").get<int>();
        row.undefined_count = a.at("undefined_count").get<int>();
        row.mean = a.at("mean").get<double>();
        row.median = a.at("median").get<double>();
        row.max = a.at("max").get<double>();
        row.ci_low = a.at("ci_low").get<double>();
        row.ci_high = a.at("ci_high").get<double>();
        report.aggregates.push_back(std::move(row));
    }
    for (const auto& s : j.at("sanity")) {
        SanityEntry entry;
        entry.metric = s.at("metric").get<std::string>();
        entry.check = s.at("check").get<std::string>();
        entry.per_fold = detail::opt_vec_from_json(s.at("per_fold"));
        entry.fold_mean = detail::opt_from_json(s.at("fold_mean"));
        report.sanity.push_back(std::move(entry));
    }
    for (const auto& e : j.at("internal_consistency")) {
        InternalConsistencyEntry entry;
        entry.method = e.at("method").get<std::string>();
        entry.metric_pair = e.at("metric_pair").get<std::string>();
        entry.per_fold = detail::opt_vec_from_json(e.at("per_fold"));
        entry.fold_mean = detail::opt_from_json(e.at("fold_mean"));
        report.internal_consistency.push_back(std::move(entry));
    }
    return report;
}

// ---- expansion of records into (expanded metric, value) flat rows ----

struct FlatRow {
    int fold;
    std::string method;
    std::string metric;  // expanded name
    std::int64_t sample;
    std::optional<double> value;
    std::string reason;
};

inline std::vector<FlatRow> flatten_records(const std::vector<ScoreRecord>& records) {
    std::vector<FlatRow> rows;
    for (const auto& r : records) {
        if (is_similarity_family(r.metric)) {
            rows.push_back({r.fold, r.method, r.metric + "_cosine", r.sample, r.cosine, r.reason});
            rows.push_back(
                {r.fold, r.method, r.metric + "_spearman", r.sample, r.spearman, r.reason});
        } else {
            rows.push_back({r.fold, r.method, r.metric, r.sample, r.value, r.reason});
        }
    }
    return rows;
}

// Pooled per-(method, expanded metric) aggregates; CI is mean +- 1.96*SE.
inline std::vector<AggregateRow> compute_aggregates(const std::vector<ScoreRecord>& records) {
    std::map<std::pair<std::string, std::string>, std::vector<std::optional<double>>> buckets;
    for (const auto& row : flatten_records(records))
        buckets[{row.method, row.metric}].push_back(row.value);

    std::vector<AggregateRow> out;
    for (const auto& [key, values] : buckets) {
        AggregateRow row;
        row.method = key.first;
        row.metric = key.second;
        std::vector<double> defined;
        for (const auto& v : values) {
            if (v)
                defined.push_back(*v);
            else
                ++row.undefined_count;
        }
        row.defined_count = static_cast<int>(defined.size());
        if (!defined.empty()) {
            double mean = 0.0;
            for (double v : defined) mean += v;
            mean /= static_cast<double>(defined.size());
            double var = 0.0;
            for (double v : defined) var += (v - mean) * (v - mean);
            const double se = defined.size() > 1
                                  ? std::sqrt(var / static_cast<double>(defined.size() - 1)) /
                                        std::sqrt(static_cast<double>(defined.size()))
                                  : 0.0;
            std::sort(defined.begin(), defined.end());
            const std::size_t n = defined.size();
            row.mean = mean;
            row.median = n % 2 == 1 ? defined[n / 2]
                                    : 0.5 * (defined[n / 2 - 1] + defined[n / 2]);
            row.max = defined.back();
            row.ci_low = mean - 1.96 * se;
            row.ci_high = mean + 1.96 * se;
        }
        out.push_back(std::move(row));
    }
    return out;
}

// Expanded per-fold score table for the sanity checks.
inline sanity::MetricScoreTable build_score_table(const std::vector<ScoreRecord>& records) {
    std::vector<int> folds;
    std::vector<std::string> methods;
    std::vector<std::int64_t> samples;
    for (const auto& r : records) {
        if (std::find(folds.begin(), folds.end(), r.fold) == folds.end()) folds.push_back(r.fold);
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
        if (std::find(samples.begin(), samples.end(), r.sample) == samples.end())
            samples.push_back(r.sample);
    }
    std::sort(folds.begin(), folds.end());
    std::sort(methods.begin(), methods.end());
    std::sort(samples.begin(), samples.end());
    sanity::MetricScoreTable table(folds, methods, expanded_metrics(), samples);
    for (const auto& row : flatten_records(records))
        table.set(row.fold, row.method, row.metric, row.sample, row.value);
    return table;
}

// ---- file emission ----

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_report: cannot open " + path.string());
    f << body;
    if (!f) throw std::runtime_error("emit_report: write failed: " + path.string());
}

inline std::string format_double(double v) {
    json j = v;
    return j.dump();
}

inline std::string flat_csv_body(const std::vector<ScoreRecord>& records) {
    std::string out = "fold,method,metric,sample,value,reason\n";
    for (const auto& row : flatten_records(records)) {
        out += std::to_string(row.fold) + "," + row.method + "," + row.metric + "," +
               std::to_string(row.sample) + ",";
        out += row.value ? format_double(*row.value) : std::string("UNDEFINED");
        out += "," + row.reason + "\n";
    }
    return out;
}

inline std::string metric_summary_body(const std::vector<AggregateRow>& aggregates) {
    std::string out = "metric,method,defined,undefined,mean,median,max,ci_low,ci_high\n";
    for (const auto& a : aggregates) {
        out += a.metric + "," + a.method + "," + std::to_string(a.defined_count) + "," +
               std::to_string(a.undefined_count) + ",";
        if (a.defined_count > 0) {
            out += format_double(a.mean) + "," + format_double(a.median) + "," +
                   format_double(a.max) + "," + format_double(a.ci_low) + "," +
                   format_double(a.ci_high);
        } else {
            out += "UNDEFINED,UNDEFINED,UNDEFINED,UNDEFINED,UNDEFINED";
        }
        out += "\n";
    }
    return out;
}

// Mean flipping curve per method over all samples carrying a curve.
inline std::string flipping_curves_body(const std::vector<ScoreRecord>& records) {
    std::map<std::string, std::pair<std::vector<double>, int>> sums;  // method -> (sum_y, count)
    std::vector<double> xs;
    for (const auto& r : records) {
        if (r.metric != "feature_flipping" || r.curve_y.empty()) continue;
        auto& [sum, count] = sums[r.method];
        if (sum.empty()) sum.assign(r.curve_y.size(), 0.0);
        if (sum.size() != r.curve_y.size()) continue;  // curves must share the grid
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.curve_y[i];
        ++count;
        if (xs.empty()) xs = r.curve_x;
    }
    std::string out = "method,flipped_fraction,mean_variance_ratio\n";
    for (const auto& [method, data] : sums) {
        const auto& [sum, count] = data;
        for (std::size_t i = 0; i < sum.size(); ++i)
            out += method + "," + format_double(xs[i]) + "," +
                   format_double(sum[i] / count) + "\n";
    }
    return out;
}

struct EmitFormats {
    bool report_json = true;
    bool flat_csv = true;
    bool plot_data = true;
};

// Writes report.json (full fidelity), flat_scores.csv (one row per expanded
// score record) and the plot-data files. Returns the paths written.
inline std::vector<std::string> emit_report(const EvaluationReport& report,
                                            const std::string& directory,
                                            const EmitFormats& formats = {}) {
    if (report.records.empty()) throw std::invalid_argument("emit_report: empty report");
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    std::vector<std::string> written;
    if (formats.report_json) {
        const fs::path p = fs::path(directory) / "report.json";
        write_text_file(p, to_json(report).dump(2) + "\n");
        written.push_back(p.string());
    }
    if (formats.flat_csv) {
        const fs::path p = fs::path(directory) / "flat_scores.csv";
        write_text_file(p, flat_csv_body(report.records));
        written.push_back(p.string());
    }
    if (formats.plot_data) {
        const fs::path p1 = fs::path(directory) / "plot_metric_summary.csv";
        write_text_file(p1, metric_summary_body(report.aggregates));
        written.push_back(p1.string());
        const fs::path p2 = fs::path(directory) / "plot_flipping_curves.csv";
        write_text_file(p2, flipping_curves_body(report.records));
        written.push_back(p2.string());
    }
    return written;
}

inline EvaluationReport parse_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("parse_report: cannot open " + path);
    json j;
    f >> j;
    return report_from_json(j);
}

}  // namespace xuq::pipeline
