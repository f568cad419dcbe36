#pragma once
// The per-sample evaluation metrics: feature flipping AUC, repeatability,
// relative input stability (RIS), complexity, relative rank improvement
// (RRI) and uncertainty conveyance similarity (UCS).
//
// Metrics consume uncertainty attributions through small function handles
// (UaFn / S2Fn) so tests can substitute stubs; spec-shaped wrappers bind the
// real network path. A metric that fails a validity guard produces an
// UNDEFINED score with a machine-readable reason instead of a value; it is
// never coerced to 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/attribution.hpp"
#include "xuq/numstat.hpp"
#include "xuq/rng.hpp"

namespace xuq::metrics {

struct MetricScore {
    std::optional<double> value;
    std::string reason;  // set iff !value
    std::vector<double> curve_x, curve_y;  // flipping curve, when applicable
    int survivor_count = -1;               // RIS, when applicable
};

struct SimilarityPair {
    std::optional<double> cosine;
    std::optional<double> spearman;
    std::string reason;  // set iff both undefined
};

// Perturbation machinery shared by flipping / RIS / RRI. Feature means and
// standard deviations come from the training split of the current fold;
// `train_rows` is the conditional-resampling pool (raw feature rows of the
// same split).
struct PerturbationPolicy {
    std::vector<double> mu, sigma;
    double k_sigma = 4.0;      // RRI outlier strength
    double noise_scale = 0.05; // RIS gaussian scale, times sigma
    int knn_k = 10;            // flipping resample neighbourhood
    const std::vector<std::vector<double>>* train_rows = nullptr;
    // De-standardisation for RIS's input-side relative change: elementwise
    // relative differences need a ratio scale, which z-scored coordinates do
    // not have. Empty = inputs are already in natural units.
    std::vector<double> raw_offset, raw_scale;

    std::vector<double> to_raw(std::span<const double> x) const {
        std::vector<double> out(x.begin(), x.end());
        if (!raw_scale.empty())
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = out[i] * raw_scale[i] + raw_offset[i];
        return out;
    }

    void require_stats(std::size_t n, const char* what) const {
        if (mu.size() != n || sigma.size() != n)
            throw std::invalid_argument(std::string(what) + ": policy missing training statistics");
        for (double s : sigma)
            if (!(s > 0.0))
                throw std::invalid_argument(std::string(what) + ": non-positive feature sigma");
    }
};

struct RisParams {
    int n_pert = 50;
    double tau = 0.05;
    double p_norm = 2.0;
    double eps_min = 1e-6;
    double denom_clamp = 1e-6;
};

struct UaResult {
    std::vector<double> u;
    double s2 = 0.0;
};

using UaFn = std::function<UaResult(std::span<const double>, std::uint64_t)>;
using S2Fn = std::function<double(std::span<const double>, std::uint64_t)>;

inline UaFn make_ua_fn(const net::DenseNetwork& network, const attrib::ExplainerSpec& spec,
                       net::MaskKind kind, int K,
                       net::DropoutScaling scaling = net::DropoutScaling::None) {
    return [&network, spec, kind, K, scaling](std::span<const double> x, std::uint64_t seed) {
        auto res = attrib::uncertainty_attribution(network, x, spec, kind, K, seed, scaling);
        return UaResult{std::move(res.u), res.predictive.predictive_variance};
    };
}

inline S2Fn make_s2_fn(const net::DenseNetwork& network, net::MaskKind kind, int K,
                       net::DropoutScaling scaling = net::DropoutScaling::None) {
    return [&network, kind, K, scaling](std::span<const double> x, std::uint64_t seed) {
        auto [ens, masks] = net::mc_ensemble(network, x, kind, K, seed, scaling);
        return ens.predictive_variance;
    };
}

namespace detail {

inline double p_norm_of(std::span<const double> v, double p) {
    double acc = 0.0;
    for (double x : v) acc += std::pow(std::abs(x), p);
    return std::pow(acc, 1.0 / p);
}

inline double clamp_denominator(double v, double floor) {
    const double sign = v < 0.0 ? -1.0 : 1.0;
    return sign * std::max(std::abs(v), floor);
}

// k nearest training rows to x, distance over the non-flipped features in
// standardised units; ties and the degenerate all-flipped case resolve by
// row index.
inline std::vector<std::size_t> knn_rows(const PerturbationPolicy& policy,
                                         std::span<const double> x,
                                         const std::vector<bool>& flipped, int k) {
    const auto& rows = *policy.train_rows;
    std::vector<std::pair<double, std::size_t>> scored(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double d = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (flipped[i]) continue;
            const double z = (rows[r][i] - x[i]) / policy.sigma[i];
            d += z * z;
        }
        scored[r] = {d, r};
    }
    const std::size_t take = std::min<std::size_t>(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end());
    std::vector<std::size_t> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = scored[i].second;
    return out;
}

}  // namespace detail

// Deletion-style faithfulness: flip the top-t features (by descending u) to
// conditionally resampled values and track s^2_t / s^2_0 over the flipped
// fraction; the score is the normalised trapezoid AUC (lower is better).
inline MetricScore feature_flipping_auc(const S2Fn& s2_fn, std::span<const double> x,
                                        std::span<const double> u,
                                        const PerturbationPolicy& policy, std::uint64_t seed) {
    policy.require_stats(x.size(), "feature_flipping_auc");
    if (!policy.train_rows || policy.train_rows->empty())
        throw std::invalid_argument("feature_flipping_auc: policy missing training rows");
    if (u.size() != x.size())
        throw std::invalid_argument("feature_flipping_auc: u/x length mismatch");

    MetricScore score;
    const double s2_0 = s2_fn(x, rng::derive(seed, {"step", 0}));
    if (!(s2_0 > 0.0)) {
        score.reason = "zero-baseline-variance";
        return score;
    }
    const std::size_t n = x.size();
    const auto ranks = numstat::descending_ranks(u);
    std::vector<std::size_t> flip_order(n);
    for (std::size_t i = 0; i < n; ++i) flip_order[ranks[i] - 1] = i;

    score.curve_x.push_back(0.0);
    score.curve_y.push_back(1.0);
    std::vector<bool> flipped(n, false);
    std::vector<double> x_t(x.begin(), x.end());
    for (std::size_t t = 1; t <= n; ++t) {
        flipped[flip_order[t - 1]] = true;
        const auto neighbours = detail::knn_rows(policy, x, flipped, policy.knn_k);
        rng::Rng pick(rng::derive(seed, {"resample", t}));
        const auto& donor = (*policy.train_rows)[neighbours[pick.index(neighbours.size())]];
        std::copy(x.begin(), x.end(), x_t.begin());
        for (std::size_t i = 0; i < n; ++i)
            if (flipped[i]) x_t[i] = donor[i];
        const double s2_t = s2_fn(x_t, rng::derive(seed, {"step", t}));
        score.curve_x.push_back(static_cast<double>(t) / static_cast<double>(n));
        score.curve_y.push_back(s2_t / s2_0);
    }
    score.value = numstat::trapezoid_auc(score.curve_x, score.curve_y);
    return score;
}

// Recompute the attribution M times with distinct derived seeds and average
// the similarity to the reference (higher is better).
inline SimilarityPair repeatability(const UaFn& ua_fn, std::span<const double> x, int M,
                                    std::uint64_t seed) {
    if (M < 1) throw std::invalid_argument("repeatability: M must be >= 1");
    const UaResult ref = ua_fn(x, rng::derive(seed, {"ref"}));
    double cos_sum = 0.0, rho_sum = 0.0;
    for (int m = 1; m <= M; ++m) {
        const UaResult rep = ua_fn(x, rng::derive(seed, {"rep", m}));
        cos_sum += numstat::cosine_similarity(ref.u, rep.u);
        rho_sum += numstat::spearman_rho(ref.u, rep.u);
    }
    return {cos_sum / M, rho_sum / M, ""};
}

// One RIS ratio: relative attribution change over relative input change,
// element-wise denominators clamped away from zero.
inline double ris_ratio(std::span<const double> x, std::span<const double> x_pert,
                        std::span<const double> u, std::span<const double> u_pert,
                        double p_norm = 2.0, double eps_min = 1e-6, double denom_clamp = 1e-6) {
    std::vector<double> rel_u(u.size()), rel_x(x.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        rel_u[i] = (u_pert[i] - u[i]) / detail::clamp_denominator(u[i], denom_clamp);
    for (std::size_t i = 0; i < x.size(); ++i)
        rel_x[i] = (x[i] - x_pert[i]) / detail::clamp_denominator(x[i], denom_clamp);
    return detail::p_norm_of(rel_u, p_norm) / std::max(detail::p_norm_of(rel_x, p_norm), eps_min);
}

// Worst-case RIS over Gaussian neighbourhood perturbations whose predictive
// variance stays within tau of the original (lower is better). UNDEFINED if
// the filter rejects every perturbation.
inline MetricScore relative_input_stability(const UaFn& ua_fn, const S2Fn& s2_fn,
                                            std::span<const double> x,
                                            const PerturbationPolicy& policy,
                                            const RisParams& params, std::uint64_t seed) {
    policy.require_stats(x.size(), "relative_input_stability");
    if (params.n_pert < 1)
        throw std::invalid_argument("relative_input_stability: n_pert must be >= 1");
    const UaResult base = ua_fn(x, rng::derive(seed, {"base"}));

    MetricScore score;
    score.survivor_count = 0;
    double worst = 0.0;
    std::vector<double> x_pert(x.size());
    for (int j = 0; j < params.n_pert; ++j) {
        rng::Rng noise(rng::derive(seed, {"noise", j}));
        for (std::size_t i = 0; i < x.size(); ++i)
            x_pert[i] = x[i] + noise.normal() * policy.noise_scale * policy.sigma[i];
        const std::uint64_t pert_seed = rng::derive(seed, {"pert", j});
        const double s2_pert = s2_fn(x_pert, pert_seed);
        if (!(std::abs(base.s2 - s2_pert) < params.tau)) continue;
        const UaResult pert = ua_fn(x_pert, pert_seed);
        worst = std::max(worst, ris_ratio(policy.to_raw(x), policy.to_raw(x_pert), base.u,
                                          pert.u, params.p_norm, params.eps_min,
                                          params.denom_clamp));
        score.survivor_count += 1;
    }
    if (score.survivor_count == 0) {
        score.reason = "tau-filter-empty";
        return score;
    }
    score.value = worst;
    return score;
}

// Entropy of the attribution (lower is better); UNDEFINED for all-zero u.
inline MetricScore complexity(std::span<const double> u) {
    MetricScore score;
    const auto h = numstat::normalized_entropy_complexity(u);
    if (!h) {
        score.reason = "all-zero-attribution";
        return score;
    }
    score.value = *h;
    return score;
}

// Perturb each feature to mu + k*sigma individually and average the rank
// improvement of the perturbed feature (higher is better).
inline MetricScore relative_rank_improvement(const UaFn& ua_fn, std::span<const double> x,
                                             const PerturbationPolicy& policy,
                                             std::uint64_t seed) {
    policy.require_stats(x.size(), "relative_rank_improvement");
    const UaResult ref = ua_fn(x, rng::derive(seed, {"ref"}));
    const auto ranks = numstat::descending_ranks(ref.u);

    double total = 0.0;
    std::vector<double> x_pert(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::copy(x.begin(), x.end(), x_pert.begin());
        x_pert[i] = policy.mu[i] + policy.k_sigma * policy.sigma[i];
        const UaResult pert = ua_fn(x_pert, rng::derive(seed, {"pert", i}));
        const auto pert_ranks = numstat::descending_ranks(pert.u);
        total += static_cast<double>(ranks[i] - pert_ranks[i]) / static_cast<double>(ranks[i]);
    }
    MetricScore score;
    score.value = total / static_cast<double>(x.size());
    return score;
}

// Similarity between the empirical uncertainty attribution and its analytic
// first-order approximation (higher is better).
inline SimilarityPair uncertainty_conveyance_similarity(std::span<const double> u,
                                                        std::span<const double> u_lin) {
    if (u.size() != u_lin.size())
        throw std::invalid_argument("uncertainty_conveyance_similarity: length mismatch");
    return {numstat::cosine_similarity(u, u_lin), numstat::spearman_rho(u, u_lin), ""};
}

// ---- spec-shaped wrappers binding the real network path ----

inline MetricScore feature_flipping_auc(const net::DenseNetwork& network,
                                        std::span<const double> x, std::span<const double> u,
                                        const PerturbationPolicy& policy, net::MaskKind kind,
                                        int K, std::uint64_t seed) {
    return feature_flipping_auc(make_s2_fn(network, kind, K), x, u, policy, seed);
}

inline SimilarityPair repeatability(const net::DenseNetwork& network, std::span<const double> x,
                                    const attrib::ExplainerSpec& spec, net::MaskKind kind, int K,
                                    int M, std::uint64_t seed) {
    return repeatability(make_ua_fn(network, spec, kind, K), x, M, seed);
}

inline MetricScore relative_input_stability(const net::DenseNetwork& network,
                                            std::span<const double> x,
                                            const attrib::ExplainerSpec& spec, net::MaskKind kind,
                                            int K, const PerturbationPolicy& policy,
                                            const RisParams& params, std::uint64_t seed) {
    return relative_input_stability(make_ua_fn(network, spec, kind, K),
                                    make_s2_fn(network, kind, K), x, policy, params, seed);
}

inline MetricScore relative_rank_improvement(const net::DenseNetwork& network,
                                             std::span<const double> x,
                                             const attrib::ExplainerSpec& spec,
                                             net::MaskKind kind, int K,
                                             const PerturbationPolicy& policy,
                                             std::uint64_t seed) {
    return relative_rank_improvement(make_ua_fn(network, spec, kind, K), x, policy, seed);
}

}  // namespace xuq::metrics
