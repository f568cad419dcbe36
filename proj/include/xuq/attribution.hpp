#pragma once
// Ensemble uncertainty attribution (diagonal of the covariance of K member
// explanations), the explainer Jacobian with respect to hidden activations
// or final-layer weights, and the analytic first-order approximation u_lin.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "xuq/explainers.hpp"
#include "xuq/matrix.hpp"
#include "xuq/network.hpp"
#include "xuq/numstat.hpp"
#include "xuq/rng.hpp"

namespace xuq::attrib {

struct AttributionEnsemble {
    std::vector<std::vector<double>> members;  // K x n
    std::vector<net::MaskSet> masks;
};

struct UncertaintyAttributionResult {
    std::vector<double> u;  // diag of the member-attribution covariance, >= 0
    AttributionEnsemble ensemble;
    net::PredictiveEnsemble predictive;
};

// Runs an MC ensemble, explains every member under its own masks and the
// shared ensemble prediction (classification members all explain the
// averaged-softmax argmax), and returns the per-feature variance of the K
// attributions. Stochastic explainers get a distinct derived seed per
// member.
inline UncertaintyAttributionResult uncertainty_attribution(
    const net::DenseNetwork& network, std::span<const double> x, const ExplainerSpec& spec,
    net::MaskKind kind, int K, std::uint64_t seed,
    net::DropoutScaling scaling = net::DropoutScaling::None) {
    spec.validate();
    UncertaintyAttributionResult result;
    auto [ens, masks] = net::mc_ensemble(network, x, kind, K, seed, scaling);
    const std::optional<int> target =
        network.is_classifier() ? std::optional<int>(ens.predicted_class) : std::nullopt;

    result.ensemble.members.reserve(K);
    for (int k = 0; k < K; ++k) {
        net::ForwardOptions opts;
        opts.masks = &masks[k];
        opts.scaling = scaling;
        ExplainerSpec member_spec = spec;
        if (is_stochastic(spec.method))
            member_spec.seed = rng::derive(seed, {"explainer", spec.seed, k});
        result.ensemble.members.push_back(explain(network, x, member_spec, opts, target));
    }
    result.u = numstat::covariance_diagonal(result.ensemble.members);
    result.ensemble.masks = std::move(masks);
    result.predictive = std::move(ens);
    return result;
}

// Central finite differences of the explanation under activation overrides
// at hidden layer `layer`: column j perturbs a_j by +-h with
// h = 1e-3 * max(1, |a_j|). Returns an n x l matrix.
inline Matrix explainer_jacobian(const net::DenseNetwork& network, std::span<const double> x,
                                 const Explainer& explainer, const net::MaskSet* masks,
                                 std::size_t layer, std::optional<int> target = std::nullopt) {
    if (layer + 1 >= network.layer_count())
        throw std::invalid_argument("explainer_jacobian: layer must be a hidden layer");
    net::ForwardOptions base;
    base.masks = masks;
    const auto trace = net::forward(network, x, base);
    const std::vector<double>& a = trace.post[layer];

    Matrix jac(x.size(), a.size());
    net::ActivationOverride ov;
    ov.layer = layer;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double h = 1e-3 * std::max(1.0, std::abs(a[j]));
        net::ForwardOptions opts = base;
        opts.override_activations = &ov;

        ov.values = a;
        ov.values[j] = a[j] + h;
        const auto plus = explainer(network, x, opts, target);
        ov.values[j] = a[j] - h;
        const auto minus = explainer(network, x, opts, target);
        if (plus.size() != x.size() || minus.size() != x.size())
            throw std::invalid_argument("explainer_jacobian: explanation length mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) jac(i, j) = (plus[i] - minus[i]) / (2.0 * h);
    }
    return jac;
}

inline Matrix explainer_jacobian(const net::DenseNetwork& network, std::span<const double> x,
                                 const ExplainerSpec& spec, const net::MaskSet* masks,
                                 std::size_t layer, std::optional<int> target = std::nullopt) {
    if (is_stochastic(spec.method))
        throw std::invalid_argument("explainer_jacobian: stochastic explainer rejected");
    return explainer_jacobian(network, x, make_explainer(spec), masks, layer, target);
}

// Same finite-difference scheme over the final layer's weight entries
// (flattened row-major). Returns an n x (out*in) matrix.
inline Matrix explainer_weight_jacobian(const net::DenseNetwork& network,
                                        std::span<const double> x, const Explainer& explainer,
                                        std::optional<int> target = std::nullopt) {
    const Matrix& w = network.layers().back().weights;
    Matrix jac(x.size(), w.size());
    Matrix perturbed = w;
    for (std::size_t e = 0; e < w.size(); ++e) {
        const double base = w.data()[e];
        const double h = 1e-3 * std::max(1.0, std::abs(base));
        net::ForwardOptions opts;
        opts.final_weights = &perturbed;

        perturbed.data()[e] = base + h;
        const auto plus = explainer(network, x, opts, target);
        perturbed.data()[e] = base - h;
        const auto minus = explainer(network, x, opts, target);
        perturbed.data()[e] = base;
        if (plus.size() != x.size() || minus.size() != x.size())
            throw std::invalid_argument("explainer_weight_jacobian: explanation length mismatch");
        for (std::size_t i = 0; i < x.size(); ++i) jac(i, e) = (plus[i] - minus[i]) / (2.0 * h);
    }
    return jac;
}

// u_lin = diag(J * p(1-p) * diag(q^2) * J^T), with q the unmasked
// activations at `layer` for dropout, or the final-layer weights for
// dropconnect (J then taken with respect to those weights).
inline std::vector<double> analytic_uncertainty_attribution(
    const net::DenseNetwork& network, std::span<const double> x, const Explainer& explainer,
    net::MaskKind kind, double p, std::size_t layer,
    std::optional<int> target = std::nullopt) {
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("analytic_uncertainty_attribution: p must be in [0,1)");
    const double bernoulli_var = p * (1.0 - p);

    Matrix jac;
    std::vector<double> perturbed;  // activations or flattened weights
    if (kind == net::MaskKind::Dropout) {
        jac = explainer_jacobian(network, x, explainer, nullptr, layer, target);
        perturbed = net::forward(network, x).post[layer];
    } else {
        jac = explainer_weight_jacobian(network, x, explainer, target);
        perturbed = network.layers().back().weights.data();
    }

    std::vector<double> u(x.size(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < perturbed.size(); ++j) {
            const double jq = jac(i, j) * perturbed[j];
            acc += jq * jq;
        }
        u[i] = bernoulli_var * acc;
    }
    return u;
}

// Spec-based entry point. Stochastic explainers are rejected unless
// `freeze_stochastic_seed` is set, in which case the explainer's own seed is
// held fixed across the finite-difference evaluations so the differences
// are well defined.
inline std::vector<double> analytic_uncertainty_attribution(
    const net::DenseNetwork& network, std::span<const double> x, const ExplainerSpec& spec,
    net::MaskKind kind, double p, std::size_t layer, bool freeze_stochastic_seed = false,
    std::optional<int> target = std::nullopt) {
    if (is_stochastic(spec.method) && !freeze_stochastic_seed)
        throw std::invalid_argument(
            "analytic_uncertainty_attribution: stochastic explainer rejected");
    return analytic_uncertainty_attribution(network, x, make_explainer(spec), kind, p, layer,
                                            target);
}

}  // namespace xuq::attrib
