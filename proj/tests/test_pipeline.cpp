#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "xuq/artifacts.hpp"
#include "xuq/config.hpp"
#include "xuq/pipeline.hpp"
#include "xuq/report.hpp"
#include "xuq/synth.hpp"

using namespace xuq;
using namespace xuq::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_winelike_csv(const fs::path& dir, std::size_t rows, std::uint64_t seed) {
    const auto ds = synth::make_winelike(rows, seed);
    const std::string path = (dir / "data.csv").string();
    synth::write_csv(ds, path);
    return path;
}

EvaluationConfig small_config(const std::string& csv_path, const std::string& out_dir) {
    EvaluationConfig cfg;
    cfg.dataset.path = csv_path;
    cfg.network.hidden_layers = {8, 8};
    cfg.training.epochs = 5;
    cfg.uq = {{"mcd", 0.2}};
    cfg.explainers = {{"input_times_gradient"}, {"lrp_epsilon"}};
    cfg.ensemble_size = 8;
    cfg.repeatability_repetitions = 2;
    cfg.metrics.n_pert = 5;
    cfg.folds = 2;
    cfg.samples_per_fold = 3;
    cfg.master_seed = 7;
    cfg.output_dir = out_dir;
    cfg.threads = 1;
    return cfg;
}

}  // namespace

TEST_CASE("load_csv_dataset: winelike file has 11 features and the named target") {
    TempDir tmp("xuq_csv_test");
    const auto path = write_winelike_csv(tmp.path, 40, 1);
    data::CsvOptions opts;
    opts.delimiter = ';';
    opts.target_column = "quality";
    const auto ds = data::load_csv_dataset(path, opts);
    CHECK(ds.dim() == 11);
    CHECK(ds.rows() == 40);
    CHECK(ds.target_name == "quality");
    CHECK(ds.feature_names.front() == "f01");
}

TEST_CASE("load_csv_dataset: error paths carry diagnostics") {
    data::CsvOptions opts;
    opts.delimiter = ';';
    opts.target_column = "quality";
    CHECK_THROWS_WITH_AS(data::load_csv_dataset("/nonexistent/file.csv", opts),
                         doctest::Contains("/nonexistent/file.csv"), std::runtime_error);

    TempDir tmp("xuq_csv_bad");
    {
        std::ofstream f(tmp.path / "bad.csv");
        f << "a;b;quality\n1;2;3\n1;oops;3\n";
    }
    try {
        data::load_csv_dataset((tmp.path / "bad.csv").string(), opts);
        FAIL("expected parse failure");
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        CHECK(what.find("row 2") != std::string::npos);
        CHECK(what.find("'b'") != std::string::npos);
    }
    {
        std::ofstream f(tmp.path / "nocol.csv");
        f << "a;b;c\n1;2;3\n";
    }
    CHECK_THROWS_WITH_AS(data::load_csv_dataset((tmp.path / "nocol.csv").string(), opts),
                         doctest::Contains("quality"), std::runtime_error);
}

TEST_CASE("kfold_split: disjoint, exhaustive, deterministic") {
    const auto folds = data::kfold_split(100, 5, 42);
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> seen;
    for (const auto& f : folds) {
        CHECK(f.test.size() == 20);
        CHECK(f.train.size() == 80);
        for (std::size_t i : f.test) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 100);

    const auto again = data::kfold_split(100, 5, 42);
    for (int f = 0; f < 5; ++f) CHECK(folds[f].test == again[f].test);
    const auto different = data::kfold_split(100, 5, 43);
    CHECK(folds[0].test != different[0].test);

    CHECK_THROWS_AS(data::kfold_split(100, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(data::kfold_split(3, 5, 1), std::invalid_argument);
}

TEST_CASE("config: validation and strict keys") {
    TempDir tmp("xuq_cfg");
    auto cfg = small_config("x.csv", (tmp.path / "out").string());
    CHECK_NOTHROW(cfg.validate());

    auto bad = cfg;
    bad.uq[0].p = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    json j = cfg.to_json();
    j["surprise"] = 1;
    CHECK_THROWS_WITH_AS(EvaluationConfig::from_json(j), doctest::Contains("surprise"),
                         std::invalid_argument);
    json j2 = cfg.to_json();
    j2["metrics"]["typo"] = 1;
    CHECK_THROWS_WITH_AS(EvaluationConfig::from_json(j2), doctest::Contains("typo"),
                         std::invalid_argument);

    // round-trip through json preserves the config
    const auto back = EvaluationConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("run_evaluation: record bookkeeping on a small config") {
    TempDir tmp("xuq_run_small");
    const auto csv = write_winelike_csv(tmp.path, 60, 3);
    auto cfg = small_config(csv, (tmp.path / "out").string());

    // 2 methods x 6 metric families x 3 samples on a single fold
    const auto report = run_evaluation(cfg, std::vector<int>{0});
    CHECK(report.records.size() == 2 * 6 * 3);
    CHECK_FALSE(report.sanity.empty());
    CHECK(report.folds.size() == 1);
    CHECK(report.folds[0].sample_ids.size() == 3);

    // every record belongs to a known method and family
    for (const auto& r : report.records) {
        CHECK((r.method == "mcd:input_times_gradient" || r.method == "mcd:lrp_epsilon"));
        CHECK(std::find(metric_families().begin(), metric_families().end(), r.metric) !=
              metric_families().end());
    }
}

TEST_CASE("run_evaluation: byte-identical reports across runs and thread counts") {
    TempDir tmp("xuq_run_det");
    const auto csv = write_winelike_csv(tmp.path, 60, 4);
    auto cfg = small_config(csv, (tmp.path / "out").string());

    auto r1 = run_evaluation(cfg, std::vector<int>{0, 1});
    cfg.threads = 2;
    auto r2 = run_evaluation(cfg, std::vector<int>{0, 1});
    CHECK(to_json(r1).dump() == to_json(r2).dump());
    CHECK(r1 == r2);
}

TEST_CASE("run_evaluation: no leakage from the test split into fold statistics") {
    TempDir tmp("xuq_leak");
    auto ds = synth::make_winelike(50, 9);
    const auto splits = data::kfold_split(ds.rows(), 2, 11);
    const auto stats = data::compute_feature_stats(ds, splits[0].train);

    // shifting the test rows must not change training statistics
    auto shifted = ds;
    for (std::size_t i : splits[0].test)
        for (auto& v : shifted.features[i]) v += 100.0;
    const auto stats_shifted = data::compute_feature_stats(shifted, splits[0].train);
    CHECK(stats.mean == stats_shifted.mean);
    CHECK(stats.stddev == stats_shifted.stddev);
}

TEST_CASE("emit_report: files, flat rows and round-trip") {
    TempDir tmp("xuq_emit");
    const auto csv = write_winelike_csv(tmp.path, 60, 5);
    auto cfg = small_config(csv, (tmp.path / "out").string());
    const auto report = run_evaluation(cfg, std::vector<int>{0});

    const auto written = emit_report(report, cfg.output_dir);
    CHECK(written.size() == 4);
    for (const auto& path : written) CHECK(fs::exists(path));

    // flat export rows = defined + undefined expanded score records
    std::ifstream flat(fs::path(cfg.output_dir) / "flat_scores.csv");
    std::string line;
    int rows = -1;  // header
    while (std::getline(flat, line))
        if (!line.empty()) ++rows;
    CHECK(rows == static_cast<int>(flatten_records(report.records).size()));

    // lossless round-trip
    const auto back = parse_report((fs::path(cfg.output_dir) / "report.json").string());
    CHECK(back == report);

    CHECK_THROWS_AS(emit_report(EvaluationReport{}, cfg.output_dir), std::invalid_argument);
}

TEST_CASE("aggregates equal independent recomputation from the flat export") {
    TempDir tmp("xuq_agg");
    const auto csv = write_winelike_csv(tmp.path, 60, 6);
    auto cfg = small_config(csv, (tmp.path / "out").string());
    const auto report = run_evaluation(cfg, std::vector<int>{0});

    for (const auto& agg : report.aggregates) {
        std::vector<double> values;
        int undefined = 0;
        for (const auto& row : flatten_records(report.records)) {
            if (row.method != agg.method || row.metric != agg.metric) continue;
            if (row.value)
                values.push_back(*row.value);
            else
                ++undefined;
        }
        CHECK(static_cast<int>(values.size()) == agg.defined_count);
        CHECK(undefined == agg.undefined_count);
        if (!values.empty()) {
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            CHECK(agg.mean == doctest::Approx(mean).epsilon(1e-12));
            std::sort(values.begin(), values.end());
            const std::size_t n = values.size();
            const double median =
                n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
            CHECK(agg.median == doctest::Approx(median).epsilon(1e-12));
            CHECK(agg.max == doctest::Approx(values.back()).epsilon(1e-12));
        }
    }
}

TEST_CASE("classification task: end-to-end smoke") {
    TempDir tmp("xuq_cls");
    auto ds = synth::make_winelike(60, 12);
    // binarise the target into classes 0/1
    double median = 0.0;
    {
        auto sorted = ds.targets;
        std::sort(sorted.begin(), sorted.end());
        median = sorted[sorted.size() / 2];
    }
    for (auto& t : ds.targets) t = t > median ? 1.0 : 0.0;
    ds.task = data::Task::Classification;
    const std::string csv = (tmp.path / "cls.csv").string();
    synth::write_csv(ds, csv);

    auto cfg = small_config(csv, (tmp.path / "out").string());
    cfg.dataset.task = "classification";
    cfg.explainers = {{"input_times_gradient"}};
    cfg.samples_per_fold = 2;
    const auto report = run_evaluation(cfg, std::vector<int>{0});
    CHECK(report.records.size() == 1 * 6 * 2);
    for (const auto& r : report.records) {
        if (r.metric == "complexity" && r.value) CHECK(*r.value >= 0.0);
    }
}

TEST_CASE("attribution dump: write/read round-trip with expected cardinality") {
    TempDir tmp("xuq_dump");
    const auto csv = write_winelike_csv(tmp.path, 60, 13);
    auto cfg = small_config(csv, (tmp.path / "out").string());
    cfg.samples_per_fold = 2;

    data::CsvOptions opts;
    opts.delimiter = ';';
    opts.target_column = "quality";
    const auto ds = data::load_csv_dataset(csv, opts);
    const auto splits = data::kfold_split(ds.rows(), cfg.folds,
                                          rng::derive(cfg.master_seed, {"kfold"}));
    auto fm = prepare_fold(ds, cfg, splits, 0);
    fm.policy.train_rows = &fm.train_std;

    const auto records = compute_attribution_dump(cfg, ds, fm);
    // methods x samples x members
    CHECK(records.size() == 2 * 2 * static_cast<std::size_t>(cfg.ensemble_size));
    for (const auto& r : records) CHECK(r.attribution.size() == ds.dim());

    const std::string path = (tmp.path / "attributions.jsonl").string();
    write_attribution_dump(records, path);
    const auto back = read_attribution_dump(path);
    CHECK(back == records);
}

TEST_CASE("fold manifest and checkpoints: persisted models are reused") {
    TempDir tmp("xuq_persist");
    const auto csv = write_winelike_csv(tmp.path, 60, 14);
    auto cfg = small_config(csv, (tmp.path / "out").string());

    data::CsvOptions opts;
    opts.delimiter = ';';
    opts.target_column = "quality";
    const auto ds = data::load_csv_dataset(csv, opts);
    const auto splits = data::kfold_split(ds.rows(), cfg.folds,
                                          rng::derive(cfg.master_seed, {"kfold"}));
    std::vector<FoldModels> folds;
    folds.push_back(prepare_fold(ds, cfg, splits, 0));
    save_fold_manifest(cfg, folds, cfg.output_dir);
    save_fold_models(folds, cfg.output_dir);

    std::string why;
    const auto loaded = load_fold_models(cfg, cfg.output_dir, &why);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded.at("fold0:mcd") == folds[0].models.at("mcd"));

    // a different config invalidates the cache
    auto other = cfg;
    other.master_seed = 99;
    CHECK(load_fold_models(other, cfg.output_dir, &why).empty());
    CHECK(why.find("hash mismatch") != std::string::npos);
}
