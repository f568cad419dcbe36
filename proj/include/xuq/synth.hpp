#pragma once
// Deterministic synthetic tabular regression data with the shape of an
// 11-feature quality-score dataset: correlated continuous features on
// heterogeneous scales and a smooth nonlinear target with mild noise. Used
// by tests and as a stand-in corpus when no CSV is available.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/dataset.hpp"
#include "xuq/rng.hpp"

namespace xuq::synth {

inline data::TabularDataset make_winelike(std::size_t rows, std::uint64_t seed,
                                          const std::string& target_name = "quality") {
    data::TabularDataset ds;
    ds.task = data::Task::Regression;
    ds.target_name = target_name;
    for (int j = 1; j <= 11; ++j)
        ds.feature_names.push_back("f" + std::string(j < 10 ? "0" : "") + std::to_string(j));

    // per-feature affine ranges, loosely spread like physico-chemical scales
    const double offset[11] = {6.8, 0.28, 0.33, 6.4, 0.045, 35.0, 138.0, 0.994, 3.19, 0.49, 10.5};
    const double spread[11] = {0.85, 0.10, 0.12, 5.0, 0.022, 17.0, 42.0, 0.003, 0.15, 0.11, 1.2};

    rng::Rng r(seed);
    ds.features.reserve(rows);
    ds.targets.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        // four latent factors drive correlated feature blocks
        const double z0 = r.normal(), z1 = r.normal(), z2 = r.normal(), z3 = r.normal();
        double raw[11];
        raw[0] = 0.8 * z0 + 0.3 * z1 + 0.5 * r.normal();
        raw[1] = -0.6 * z1 + 0.2 * z2 + 0.7 * r.normal();
        raw[2] = 0.7 * z1 + 0.4 * z0 + 0.5 * r.normal();
        raw[3] = 0.9 * z2 + 0.4 * r.normal();
        raw[4] = 0.5 * z2 - 0.4 * z3 + 0.6 * r.normal();
        raw[5] = 0.8 * z3 + 0.5 * r.normal();
        raw[6] = 0.7 * z3 + 0.5 * z2 + 0.4 * r.normal();
        raw[7] = 0.6 * z2 - 0.5 * z0 + 0.4 * r.normal();
        raw[8] = -0.7 * z0 + 0.3 * z3 + 0.5 * r.normal();
        raw[9] = 0.4 * z1 + 0.4 * z3 + 0.7 * r.normal();
        raw[10] = -0.8 * z2 + 0.4 * z0 + 0.4 * r.normal();

        const double y = 5.9 + 0.9 * std::tanh(0.8 * raw[10] - 0.4 * raw[1]) +
                         0.45 * std::sin(1.1 * raw[0]) + 0.25 * raw[5] * raw[7] -
                         0.35 * raw[3] * raw[3] * 0.3 + 0.3 * raw[8] + 0.18 * r.normal();

        std::vector<double> row(11);
        for (int j = 0; j < 11; ++j) row[j] = offset[j] + spread[j] * raw[j];
        ds.features.push_back(std::move(row));
        ds.targets.push_back(y);
    }
    return ds;
}

inline void write_csv(const data::TabularDataset& ds, const std::string& path,
                      char delimiter = ';') {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open " + path);
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
        f << '"' << ds.feature_names[j] << '"' << delimiter;
    f << '"' << ds.target_name << "\"\n";
    f.precision(17);
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) f << ds.features[i][j] << delimiter;
        f << ds.targets[i] << '\n';
    }
    if (!f) throw std::runtime_error("write_csv: write failed: " + path);
}

}  // namespace xuq::synth
