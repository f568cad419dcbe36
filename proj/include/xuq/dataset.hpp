#pragma once
// Tabular ingestion and cross-validation splitting. CSV parsing is strict:
// every cell must be numeric and every row rectangular, with diagnostics
// naming the offending (row, column). Fold statistics are always computed
// from training indices only.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/rng.hpp"

namespace xuq::data {

enum class Task { Regression, Classification };

inline std::string task_name(Task t) { return t == Task::Regression ? "regression" : "classification"; }
inline Task parse_task(const std::string& s) {
    if (s == "regression") return Task::Regression;
    if (s == "classification") return Task::Classification;
    throw std::invalid_argument("unknown task: " + s);
}

struct CsvOptions {
    char delimiter = ',';
    std::string target_column;
};

struct TabularDataset {
    std::vector<std::vector<double>> features;  // rows x n
    std::vector<double> targets;
    std::vector<std::string> feature_names;
    std::string target_name;
    Task task = Task::Regression;

    std::size_t rows() const noexcept { return features.size(); }
    std::size_t dim() const noexcept { return feature_names.size(); }
};

namespace detail {

inline std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    auto is_junk = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '"'; };
    while (b < e && is_junk(s[b])) ++b;
    while (e > b && is_junk(s[e - 1])) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == delimiter) {
            cells.push_back(strip(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(strip(cell));
    return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || cell.empty())
        throw std::runtime_error("csv: non-numeric cell at row " + std::to_string(row) +
                                 ", column '" + column + "': '" + cell + "'");
    if (!std::isfinite(value))
        throw std::runtime_error("csv: non-finite cell at row " + std::to_string(row) +
                                 ", column '" + column + "'");
    return value;
}

}  // namespace detail

// Parses a delimited file with a header row. The named target column becomes
// the label; all other columns become features in file order. Data rows are
// 1-based in diagnostics (row 0 is the header).
inline TabularDataset load_csv_dataset(const std::string& path, const CsvOptions& options,
                                       Task task = Task::Regression) {
    if (options.target_column.empty())
        throw std::invalid_argument("load_csv_dataset: target column not named");
    std::ifstream file(path);
    if (!file) throw std::runtime_error("load_csv_dataset: cannot open file: " + path);

    std::string line;
    if (!std::getline(file, line))
        throw std::runtime_error("load_csv_dataset: empty file: " + path);
    const auto header = detail::split_line(line, options.delimiter);

    std::size_t target_index = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == options.target_column) target_index = i;
    if (target_index == header.size())
        throw std::runtime_error("load_csv_dataset: unknown target column '" +
                                 options.target_column + "' in " + path);

    TabularDataset ds;
    ds.task = task;
    ds.target_name = options.target_column;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (i != target_index) ds.feature_names.push_back(header[i]);

    std::size_t row = 0;
    while (std::getline(file, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = detail::split_line(line, options.delimiter);
        if (cells.size() != header.size())
            throw std::runtime_error("load_csv_dataset: row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        std::vector<double> features;
        features.reserve(header.size() - 1);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const double v = detail::parse_cell(cells[i], row, header[i]);
            if (i == target_index)
                ds.targets.push_back(v);
            else
                features.push_back(v);
        }
        ds.features.push_back(std::move(features));
    }
    if (ds.features.empty()) throw std::runtime_error("load_csv_dataset: no data rows in " + path);
    if (task == Task::Classification) {
        for (double t : ds.targets)
            if (t != std::floor(t) || t < 0.0)
                throw std::runtime_error(
                    "load_csv_dataset: classification targets must be non-negative integers");
    }
    return ds;
}

struct FoldSplit {
    std::vector<std::size_t> train, test;
};

// Shuffled, disjoint, exhaustive folds; deterministic given seed.
inline std::vector<FoldSplit> kfold_split(std::size_t rows, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
    if (static_cast<std::size_t>(k) > rows)
        throw std::invalid_argument("kfold_split: k exceeds row count");
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Rng r(seed);
    r.shuffle(order);

    std::vector<FoldSplit> folds(k);
    const std::size_t base = rows / k, extra = rows % k;
    std::size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) folds[f].test.push_back(order[cursor + i]);
        cursor += size;
    }
    for (int f = 0; f < k; ++f) {
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(),
                                  folds[g].test.end());
        }
    }
    return folds;
}

struct FeatureStats {
    std::vector<double> mean, stddev;
};

// Sample mean and (N-1) standard deviation over the given rows. Zero-spread
// features are rejected: they cannot be standardised.
inline FeatureStats compute_feature_stats(const TabularDataset& ds,
                                          const std::vector<std::size_t>& indices) {
    if (indices.size() < 2)
        throw std::invalid_argument("compute_feature_stats: need at least 2 rows");
    FeatureStats stats;
    stats.mean.assign(ds.dim(), 0.0);
    stats.stddev.assign(ds.dim(), 0.0);
    for (std::size_t i : indices)
        for (std::size_t j = 0; j < ds.dim(); ++j) stats.mean[j] += ds.features[i][j];
    for (auto& m : stats.mean) m /= static_cast<double>(indices.size());
    for (std::size_t i : indices)
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            const double d = ds.features[i][j] - stats.mean[j];
            stats.stddev[j] += d * d;
        }
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(indices.size() - 1));
        if (!(stats.stddev[j] > 0.0))
            throw std::runtime_error("compute_feature_stats: zero-variance feature '" +
                                     ds.feature_names[j] + "' in training split");
    }
    return stats;
}

inline std::vector<double> standardize_row(const std::vector<double>& row,
                                           const FeatureStats& stats) {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
        out[j] = (row[j] - stats.mean[j]) / stats.stddev[j];
    return out;
}

}  // namespace xuq::data
