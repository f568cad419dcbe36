#pragma once
// Deterministic statistical primitives shared by every metric computation.
// All functions are pure; inputs are validated (finite entries, matching
// lengths) and violations throw std::invalid_argument.
//
// Conventions that the rest of the library relies on:
//  - cosine similarity of two zero vectors is 1, of one zero vector is 0
//  - Spearman's rho of a constant vector is 1 against an identical vector
//    and 0 otherwise; ties otherwise get average (fractional) ranks
//  - descending ranks break ties by ascending index, so rank vectors are
//    always permutations of 1..n

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace xuq::numstat {

using ScoreVector = std::vector<double>;
using RankVector = std::vector<int>;

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
}

inline void require_same_length(std::span<const double> a, std::span<const double> b,
                                const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("cosine_similarity: empty input");
    require_same_length(a, b, "cosine_similarity");
    require_finite(a, "cosine_similarity");
    require_finite(b, "cosine_similarity");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const bool a_zero = na == 0.0, b_zero = nb == 0.0;
    if (a_zero && b_zero) return 1.0;
    if (a_zero || b_zero) return 0.0;
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

// Average (fractional) ranks in ascending order, 1-based.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of 1-based positions
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
    require_same_length(a, b, "spearman_rho");
    if (a.size() < 2) throw std::invalid_argument("spearman_rho: need at least 2 entries");
    require_finite(a, "spearman_rho");
    require_finite(b, "spearman_rho");
    if (is_constant(a) || is_constant(b)) {
        return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
    }
    const auto ra = fractional_ranks(a);
    const auto rb = fractional_ranks(b);
    const double mean = 0.5 * static_cast<double>(a.size() + 1);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double xa = ra[i] - mean, xb = rb[i] - mean;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    return std::clamp(num / std::sqrt(da * db), -1.0, 1.0);
}

// Entropy of the L1-normalised absolute values, in [0, ln n].
// Returns nullopt for the all-zero vector (the score is undefined there).
inline std::optional<double> normalized_entropy_complexity(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("normalized_entropy_complexity: empty input");
    require_finite(v, "normalized_entropy_complexity");
    double total = 0.0;
    for (double x : v) total += std::abs(x);
    if (total == 0.0) return std::nullopt;
    double h = 0.0;
    for (double x : v) {
        const double p = std::abs(x) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

// Trapezoid-rule area of ys over xs, normalised by the x-span so a constant
// curve of height c scores c regardless of domain width.
inline double trapezoid_auc(std::span<const double> xs, std::span<const double> ys) {
    require_same_length(xs, ys, "trapezoid_auc");
    if (xs.size() < 2) throw std::invalid_argument("trapezoid_auc: need at least 2 points");
    require_finite(xs, "trapezoid_auc");
    require_finite(ys, "trapezoid_auc");
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (!(xs[i] > xs[i - 1]))
            throw std::invalid_argument("trapezoid_auc: xs must be strictly increasing");
    }
    double area = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    return area / (xs.back() - xs.front());
}

// Per-column unbiased sample variance of a K x n matrix, K >= 2.
inline std::vector<double> covariance_diagonal(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("covariance_diagonal: need K >= 2 rows");
    const std::size_t n = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != n) throw std::invalid_argument("covariance_diagonal: ragged rows");
        require_finite(r, "covariance_diagonal");
    }
    std::vector<double> mean(n, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < n; ++j) mean[j] += r[j];
    for (auto& m : mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(n, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = r[j] - mean[j];
            var[j] += d * d;
        }
    const double denom = static_cast<double>(rows.size() - 1);
    for (auto& v : var) v = std::max(v / denom, 0.0);
    return var;
}

// Rank 1 = largest value; ties broken by ascending index, so the result is
// always a permutation of 1..n.
inline RankVector descending_ranks(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("descending_ranks: empty input");
    require_finite(v, "descending_ranks");
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return v[i] > v[j]; });
    RankVector ranks(v.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        ranks[order[pos]] = static_cast<int>(pos + 1);
    return ranks;
}

}  // namespace xuq::numstat
