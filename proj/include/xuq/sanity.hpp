#pragma once
// Metric-reliability sanity checks over MetricScoreTables: inter-method
// reliability, ranking consistency, average coefficient of variation and
// internal consistency reliability.
//
// UNDEFINED cells are handled pairwise-complete: a sample is dropped only
// for the pair (or method) it is undefined for. Checks run per fold and are
// averaged by default; a pooled mode treats every (fold, sample) pair as one
// observation.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xuq/numstat.hpp"
#include "xuq/score_table.hpp"

namespace xuq::sanity {

enum class FoldAggregation { PerFoldMean, Pooled };

namespace detail {

// (fold, sample) observation slots for one fold or for the pooled table.
inline std::vector<std::pair<std::size_t, std::size_t>> observation_slots(
    const MetricScoreTable& table, std::optional<std::size_t> fold) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    const std::size_t fold_begin = fold ? *fold : 0;
    const std::size_t fold_end = fold ? *fold + 1 : table.folds().size();
    for (std::size_t f = fold_begin; f < fold_end; ++f)
        for (std::size_t s = 0; s < table.samples().size(); ++s) slots.emplace_back(f, s);
    return slots;
}

inline std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& values) {
    double total = 0.0;
    int count = 0;
    for (const auto& v : values)
        if (v) {
            total += *v;
            ++count;
        }
    if (count == 0) return std::nullopt;
    return total / count;
}

}  // namespace detail

// Mean pairwise Spearman's rho between methods' per-sample score vectors.
inline std::optional<double> inter_method_reliability_slice(const MetricScoreTable& table,
                                                            const std::string& metric,
                                                            std::optional<std::size_t> fold) {
    if (table.methods().size() < 2)
        throw std::invalid_argument("inter_method_reliability: need at least 2 methods");
    const std::size_t metric_i = table.metric_idx(metric);
    const auto slots = detail::observation_slots(table, fold);

    double total = 0.0;
    int pairs = 0;
    for (std::size_t m1 = 0; m1 < table.methods().size(); ++m1) {
        for (std::size_t m2 = m1 + 1; m2 < table.methods().size(); ++m2) {
            std::vector<double> a, b;
            for (const auto& [f, s] : slots) {
                const auto va = table.at(f, m1, metric_i, s);
                const auto vb = table.at(f, m2, metric_i, s);
                if (va && vb) {
                    a.push_back(*va);
                    b.push_back(*vb);
                }
            }
            if (a.size() < 2) continue;
            total += numstat::spearman_rho(a, b);
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;
    return total / pairs;
}

// Mean pairwise Spearman's rho between samples' method-score vectors.
inline std::optional<double> ranking_consistency_slice(const MetricScoreTable& table,
                                                       const std::string& metric,
                                                       std::optional<std::size_t> fold) {
    if (table.methods().size() < 2)
        throw std::invalid_argument("ranking_consistency: need at least 2 methods");
    const std::size_t metric_i = table.metric_idx(metric);
    const auto slots = detail::observation_slots(table, fold);
    if (slots.size() < 2)
        throw std::invalid_argument("ranking_consistency: need at least 2 samples");

    double total = 0.0;
    int pairs = 0;
    for (std::size_t s1 = 0; s1 < slots.size(); ++s1) {
        for (std::size_t s2 = s1 + 1; s2 < slots.size(); ++s2) {
            std::vector<double> a, b;
            for (std::size_t m = 0; m < table.methods().size(); ++m) {
                const auto va = table.at(slots[s1].first, m, metric_i, slots[s1].second);
                const auto vb = table.at(slots[s2].first, m, metric_i, slots[s2].second);
                if (va && vb) {
                    a.push_back(*va);
                    b.push_back(*vb);
                }
            }
            if (a.size() < 2) continue;
            total += numstat::spearman_rho(a, b);
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;
    return total / pairs;
}

struct AcovSlice {
    std::optional<double> value;
    int skipped_methods = 0;  // zero-mean or <2 defined scores
};

// Per method: sample standard deviation over |mean| across samples; averaged
// over methods. Methods with a zero mean are skipped and counted.
inline AcovSlice average_coefficient_of_variation_slice(const MetricScoreTable& table,
                                                        const std::string& metric,
                                                        std::optional<std::size_t> fold) {
    const std::size_t metric_i = table.metric_idx(metric);
    const auto slots = detail::observation_slots(table, fold);

    AcovSlice out;
    double total = 0.0;
    int used = 0;
    for (std::size_t m = 0; m < table.methods().size(); ++m) {
        std::vector<double> scores;
        for (const auto& [f, s] : slots) {
            const auto v = table.at(f, m, metric_i, s);
            if (v) scores.push_back(*v);
        }
        if (scores.size() < 2) {
            ++out.skipped_methods;
            continue;
        }
        double mean = 0.0;
        for (double v : scores) mean += v;
        mean /= static_cast<double>(scores.size());
        if (mean == 0.0) {
            ++out.skipped_methods;
            continue;
        }
        double var = 0.0;
        for (double v : scores) var += (v - mean) * (v - mean);
        var /= static_cast<double>(scores.size() - 1);
        total += std::sqrt(var) / std::abs(mean);
        ++used;
    }
    if (used > 0) out.value = total / used;
    return out;
}

// Spearman's rho between two metrics' per-sample scores, per method.
inline std::vector<std::optional<double>> internal_consistency_reliability_slice(
    const MetricScoreTable& table_a, const std::string& metric_a, const MetricScoreTable& table_b,
    const std::string& metric_b, std::optional<std::size_t> fold) {
    if (table_a.methods() != table_b.methods() || table_a.samples() != table_b.samples() ||
        table_a.folds() != table_b.folds())
        throw std::invalid_argument(
            "internal_consistency_reliability: tables must share methods, samples and folds");
    const std::size_t ai = table_a.metric_idx(metric_a);
    const std::size_t bi = table_b.metric_idx(metric_b);
    const auto slots = detail::observation_slots(table_a, fold);

    std::vector<std::optional<double>> out(table_a.methods().size());
    for (std::size_t m = 0; m < table_a.methods().size(); ++m) {
        std::vector<double> a, b;
        for (const auto& [f, s] : slots) {
            const auto va = table_a.at(f, m, ai, s);
            const auto vb = table_b.at(f, m, bi, s);
            if (va && vb) {
                a.push_back(*va);
                b.push_back(*vb);
            }
        }
        if (a.size() >= 2) out[m] = numstat::spearman_rho(a, b);
    }
    return out;
}

// ---- fold aggregation entry points ----

template <typename SliceFn>
inline std::optional<double> fold_aggregate(const MetricScoreTable& table, FoldAggregation agg,
                                            SliceFn&& slice) {
    if (agg == FoldAggregation::Pooled) return slice(std::nullopt);
    std::vector<std::optional<double>> per_fold;
    for (std::size_t f = 0; f < table.folds().size(); ++f) per_fold.push_back(slice(f));
    return detail::mean_of_defined(per_fold);
}

inline std::optional<double> inter_method_reliability(const MetricScoreTable& table,
                                                      const std::string& metric,
                                                      FoldAggregation agg = FoldAggregation::PerFoldMean) {
    return fold_aggregate(table, agg, [&](std::optional<std::size_t> f) {
        return inter_method_reliability_slice(table, metric, f);
    });
}

inline std::optional<double> ranking_consistency(const MetricScoreTable& table,
                                                 const std::string& metric,
                                                 FoldAggregation agg = FoldAggregation::PerFoldMean) {
    return fold_aggregate(table, agg, [&](std::optional<std::size_t> f) {
        return ranking_consistency_slice(table, metric, f);
    });
}

inline std::optional<double> average_coefficient_of_variation(
    const MetricScoreTable& table, const std::string& metric,
    FoldAggregation agg = FoldAggregation::PerFoldMean) {
    return fold_aggregate(table, agg, [&](std::optional<std::size_t> f) {
        return average_coefficient_of_variation_slice(table, metric, f).value;
    });
}

// Per-method fold-mean Spearman between two metrics' scores (RRI vs UCS in
// the shipped pipeline).
inline std::map<std::string, std::optional<double>> internal_consistency_reliability(
    const MetricScoreTable& table_a, const std::string& metric_a, const MetricScoreTable& table_b,
    const std::string& metric_b, FoldAggregation agg = FoldAggregation::PerFoldMean) {
    std::map<std::string, std::optional<double>> out;
    const std::size_t n_methods = table_a.methods().size();
    if (agg == FoldAggregation::Pooled) {
        const auto slice = internal_consistency_reliability_slice(table_a, metric_a, table_b,
                                                                  metric_b, std::nullopt);
        for (std::size_t m = 0; m < n_methods; ++m) out[table_a.methods()[m]] = slice[m];
        return out;
    }
    std::vector<std::vector<std::optional<double>>> per_fold;
    for (std::size_t f = 0; f < table_a.folds().size(); ++f)
        per_fold.push_back(
            internal_consistency_reliability_slice(table_a, metric_a, table_b, metric_b, f));
    for (std::size_t m = 0; m < n_methods; ++m) {
        std::vector<std::optional<double>> values;
        for (const auto& fold_values : per_fold) values.push_back(fold_values[m]);
        out[table_a.methods()[m]] = detail::mean_of_defined(values);
    }
    return out;
}

// Same-table convenience overload for single-metric tables.
inline std::map<std::string, std::optional<double>> internal_consistency_reliability(
    const MetricScoreTable& table_a, const MetricScoreTable& table_b,
    FoldAggregation agg = FoldAggregation::PerFoldMean) {
    return internal_consistency_reliability(table_a, table_a.metrics().front(), table_b,
                                            table_b.metrics().front(), agg);
}

}  // namespace xuq::sanity
