// xuq: batch CLI for uncertainty-attribution evaluation.
//
// Subcommands mirror the pipeline stages so expensive steps are resumable
// off persisted intermediates:
//   train      train per-fold models, save checkpoints + folds.json
//   attribute  compute member attributions, write attributions.jsonl
//   evaluate   full evaluation run, write report.json + derived files
//   sanity     recompute sanity checks from a persisted report
//   report     re-emit flat/plot files from a persisted report

#include <CLI11.hpp>

#include <iostream>
#include <set>

#include "xuq/artifacts.hpp"
#include "xuq/config.hpp"
#include "xuq/pipeline.hpp"
#include "xuq/report.hpp"

namespace {

using namespace xuq;
using namespace xuq::pipeline;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::vector<int> fold_subset;
    std::vector<std::string> uq_subset;
    std::vector<std::string> explainer_subset;
    std::string out_override;
    int verbosity = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "evaluation config (json)")->required();
    cmd->add_option("--seed", args.seed_override, "override master_seed");
    cmd->add_option("--folds", args.fold_subset, "restrict to these fold indices")->delimiter(',');
    cmd->add_option("--uq", args.uq_subset, "restrict to these uq kinds (mcd, mcdc)")->delimiter(',');
    cmd->add_option("--methods", args.explainer_subset,
                    "restrict to these explainer methods (e.g. integrated_gradients)")->delimiter(',');
    cmd->add_option("-o,--out", args.out_override, "override output_dir");
    cmd->add_flag_function(
        "-v,--verbose", [&args](std::int64_t n) { args.verbosity = static_cast<int>(n); },
        "progress output on stderr");
}

EvaluationConfig load_config(const CommonArgs& args) {
    auto cfg = EvaluationConfig::from_file(args.config_path);
    if (args.seed_override) cfg.master_seed = *args.seed_override;
    if (!args.out_override.empty()) cfg.output_dir = args.out_override;
    if (!args.uq_subset.empty()) {
        std::vector<UqConfig> kept;
        for (const auto& u : cfg.uq)
            if (std::find(args.uq_subset.begin(), args.uq_subset.end(), u.kind) !=
                args.uq_subset.end())
                kept.push_back(u);
        cfg.uq = kept;
    }
    if (!args.explainer_subset.empty()) {
        std::vector<ExplainerConfig> kept;
        for (const auto& e : cfg.explainers)
            if (std::find(args.explainer_subset.begin(), args.explainer_subset.end(), e.method) !=
                args.explainer_subset.end())
                kept.push_back(e);
        cfg.explainers = kept;
    }
    cfg.validate();
    return cfg;
}

std::optional<std::vector<int>> fold_filter(const CommonArgs& args) {
    if (args.fold_subset.empty()) return std::nullopt;
    return args.fold_subset;
}

std::vector<FoldModels> build_folds(const EvaluationConfig& cfg, const data::TabularDataset& ds,
                                    const CommonArgs& args) {
    const auto splits = data::kfold_split(ds.rows(), cfg.folds,
                                          rng::derive(cfg.master_seed, {"kfold"}));
    std::string why;
    const auto preloaded = load_fold_models(cfg, cfg.output_dir, &why);
    if (args.verbosity > 0 && preloaded.empty() && !why.empty())
        std::cerr << "[models] " << why << "\n";
    std::vector<FoldModels> folds;
    const auto subset = fold_filter(args);
    std::vector<int> to_run;
    for (int f = 0; f < cfg.folds; ++f)
        if (!subset || std::find(subset->begin(), subset->end(), f) != subset->end())
            to_run.push_back(f);
    folds.reserve(to_run.size());
    for (int f : to_run) {
        folds.push_back(prepare_fold(ds, cfg, splits, f, args.verbosity,
                                     preloaded.empty() ? nullptr : &preloaded));
        folds.back().policy.train_rows = &folds.back().train_std;
    }
    return folds;
}

data::TabularDataset load_dataset(const EvaluationConfig& cfg) {
    data::CsvOptions opts;
    opts.delimiter = cfg.dataset.delimiter[0];
    opts.target_column = cfg.dataset.target_column;
    return data::load_csv_dataset(cfg.dataset.path, opts, data::parse_task(cfg.dataset.task));
}

int cmd_train(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const auto ds = load_dataset(cfg);
    const auto folds = build_folds(cfg, ds, args);
    save_fold_manifest(cfg, folds, cfg.output_dir);
    save_fold_models(folds, cfg.output_dir);
    std::cout << "trained " << folds.size() << " fold(s) x " << cfg.uq.size()
              << " uq model(s); checkpoints in " << cfg.output_dir << "/models\n";
    return 0;
}

int cmd_attribute(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const auto ds = load_dataset(cfg);
    const auto folds = build_folds(cfg, ds, args);
    std::vector<AttributionDumpRecord> records;
    for (const auto& fm : folds) {
        auto fold_records = compute_attribution_dump(cfg, ds, fm);
        records.insert(records.end(), fold_records.begin(), fold_records.end());
    }
    std::filesystem::create_directories(cfg.output_dir);
    const std::string path = cfg.output_dir + "/attributions.jsonl";
    write_attribution_dump(records, path);
    std::cout << "wrote " << records.size() << " attribution records to " << path << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args) {
    const auto cfg = load_config(args);
    std::string why;
    const auto preloaded = load_fold_models(cfg, cfg.output_dir, &why);
    if (args.verbosity > 0 && preloaded.empty() && !why.empty())
        std::cerr << "[models] " << why << "\n";
    const auto report = run_evaluation(cfg, fold_filter(args), args.verbosity,
                                       preloaded.empty() ? nullptr : &preloaded);
    const auto written = emit_report(report, cfg.output_dir);
    for (const auto& p : written) std::cout << "wrote " << p << "\n";
    return 0;
}

int cmd_sanity(const std::string& report_path, const std::string& out_dir) {
    auto report = parse_report(report_path);
    compute_sanity_sections(report);
    json j;
    j["sanity"] = to_json(report)["sanity"];
    j["internal_consistency"] = to_json(report)["internal_consistency"];
    const std::string out = out_dir.empty()
                                ? (std::filesystem::path(report_path).parent_path() / "sanity.json")
                                      .string()
                                : out_dir + "/sanity.json";
    const auto parent = std::filesystem::path(out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    write_text_file(out, j.dump(2) + "\n");
    std::cout << "check                              metric                    fold-mean\n";
    for (const auto& s : report.sanity) {
        std::printf("%-34s %-25s %s\n", s.check.c_str(), s.metric.c_str(),
                    s.fold_mean ? std::to_string(*s.fold_mean).c_str() : "UNDEFINED");
    }
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_report(const std::string& report_path, const std::string& out_dir,
               const std::vector<std::string>& formats) {
    const auto report = parse_report(report_path);
    EmitFormats emit;
    if (!formats.empty()) {
        emit = {false, false, false};
        for (const auto& f : formats) {
            if (f == "json") emit.report_json = true;
            else if (f == "csv") emit.flat_csv = true;
            else if (f == "plots") emit.plot_data = true;
            else throw CLI::ValidationError("--formats", "unknown format: " + f);
        }
    } else {
        emit.report_json = false;  // default: derived files only
    }
    const std::string dir = out_dir.empty()
                                ? std::filesystem::path(report_path).parent_path().string()
                                : out_dir;
    for (const auto& p : emit_report(report, dir, emit)) std::cout << "wrote " << p << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-attribution evaluation toolkit"};
    app.require_subcommand(1);

    CommonArgs train_args, attribute_args, evaluate_args;
    auto* train_cmd = app.add_subcommand("train", "train per-fold models and save checkpoints");
    add_common(train_cmd, train_args);
    auto* attribute_cmd =
        app.add_subcommand("attribute", "compute member attributions, write attributions.jsonl");
    add_common(attribute_cmd, attribute_args);
    auto* evaluate_cmd =
        app.add_subcommand("evaluate", "run the full evaluation and write the report");
    add_common(evaluate_cmd, evaluate_args);

    std::string sanity_report, sanity_out;
    auto* sanity_cmd = app.add_subcommand("sanity", "recompute sanity checks from a report");
    sanity_cmd->add_option("--report", sanity_report, "path to report.json")->required();
    sanity_cmd->add_option("-o,--out", sanity_out, "output directory");

    std::string report_report, report_out;
    std::vector<std::string> report_formats;
    auto* report_cmd = app.add_subcommand("report", "re-emit derived files from a report");
    report_cmd->add_option("--report", report_report, "path to report.json")->required();
    report_cmd->add_option("-o,--out", report_out, "output directory");
    report_cmd->add_option("--formats", report_formats, "subset of: json, csv, plots")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (attribute_cmd->parsed()) return cmd_attribute(attribute_args);
        if (evaluate_cmd->parsed()) return cmd_evaluate(evaluate_args);
        if (sanity_cmd->parsed()) return cmd_sanity(sanity_report, sanity_out);
        if (report_cmd->parsed()) return cmd_report(report_report, report_out, report_formats);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
