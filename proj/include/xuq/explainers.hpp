#pragma once
// Feature-attribution explainers over DenseNetwork: Input x Gradient,
// Integrated Gradients (midpoint rule), LRP epsilon rule, and sampled
// Shapley values. All of them honour ForwardOptions, so an explanation can
// be produced for any masked ensemble member or under an activation
// override.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/network.hpp"
#include "xuq/rng.hpp"

namespace xuq::attrib {

enum class ExplainerMethod {
    InputTimesGradient,
    IntegratedGradients,
    LrpEpsilon,
    SampledShapley,
};

inline std::string method_name(ExplainerMethod m) {
    switch (m) {
        case ExplainerMethod::InputTimesGradient: return "input_times_gradient";
        case ExplainerMethod::IntegratedGradients: return "integrated_gradients";
        case ExplainerMethod::LrpEpsilon: return "lrp_epsilon";
        case ExplainerMethod::SampledShapley: return "sampled_shapley";
    }
    return "?";
}

inline ExplainerMethod parse_method(const std::string& s) {
    if (s == "input_times_gradient" || s == "ixg") return ExplainerMethod::InputTimesGradient;
    if (s == "integrated_gradients" || s == "ig") return ExplainerMethod::IntegratedGradients;
    if (s == "lrp_epsilon" || s == "lrp") return ExplainerMethod::LrpEpsilon;
    if (s == "sampled_shapley" || s == "shap") return ExplainerMethod::SampledShapley;
    throw std::invalid_argument("unknown explainer method: " + s);
}

inline bool is_stochastic(ExplainerMethod m) { return m == ExplainerMethod::SampledShapley; }

struct ExplainerSpec {
    ExplainerMethod method = ExplainerMethod::InputTimesGradient;
    std::vector<double> baseline;  // empty = zero baseline
    int ig_steps = 64;
    double lrp_epsilon = 1e-6;
    int shapley_samples = 200;
    std::uint64_t seed = 0;  // stochastic explainers only

    void validate() const {
        if (ig_steps < 1) throw std::invalid_argument("ExplainerSpec: ig_steps must be >= 1");
        if (!(lrp_epsilon > 0.0)) throw std::invalid_argument("ExplainerSpec: lrp_epsilon must be > 0");
        if (shapley_samples < 1)
            throw std::invalid_argument("ExplainerSpec: shapley_samples must be >= 1");
    }
};

namespace detail {

inline double output_scalar(const net::DenseNetwork& network, std::span<const double> x,
                            const net::ForwardOptions& opts, std::optional<int> target) {
    const auto trace = net::forward(network, x, opts);
    const int t = target.value_or(0);
    if (t < 0 || static_cast<std::size_t>(t) >= trace.output.size())
        throw std::invalid_argument("explainer: target index out of range");
    return trace.output[t];
}

inline std::vector<double> resolve_baseline(const ExplainerSpec& spec, std::size_t n) {
    if (spec.baseline.empty()) return std::vector<double>(n, 0.0);
    if (spec.baseline.size() != n)
        throw std::invalid_argument("explainer: baseline dimension mismatch");
    return spec.baseline;
}

}  // namespace detail

inline std::vector<double> input_times_gradient(const net::DenseNetwork& network,
                                                std::span<const double> x,
                                                const net::ForwardOptions& opts = {},
                                                std::optional<int> target = std::nullopt) {
    auto g = net::input_gradient(network, x, opts, target);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= x[i];
    return g;
}

// Midpoint-rule Riemann approximation of the path integral from baseline to
// x. A raw activation override is resolved once at x and the resulting
// factors are held fixed along the path, matching how a mask member behaves.
inline std::vector<double> integrated_gradients(const net::DenseNetwork& network,
                                                std::span<const double> x,
                                                const ExplainerSpec& spec,
                                                const net::ForwardOptions& opts = {},
                                                std::optional<int> target = std::nullopt) {
    spec.validate();
    const std::size_t n = x.size();
    const auto baseline = detail::resolve_baseline(spec, n);

    net::ForwardOptions path_opts = opts;
    net::ActivationScale frozen;
    if (opts.override_activations) {
        frozen = net::resolve_override(network, x, *opts.override_activations, opts);
        path_opts.override_activations = nullptr;
        path_opts.scale_override = &frozen;
    }

    std::vector<double> acc(n, 0.0);
    std::vector<double> point(n);
    for (int s = 0; s < spec.ig_steps; ++s) {
        const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(spec.ig_steps);
        for (std::size_t i = 0; i < n; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        const auto g = net::input_gradient(network, point, path_opts, target);
        for (std::size_t i = 0; i < n; ++i) acc[i] += g[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        acc[i] = (x[i] - baseline[i]) * acc[i] / static_cast<double>(spec.ig_steps);
    return acc;
}

// Epsilon-rule relevance propagation from the target output down to the
// inputs. Masks and overrides are already folded into the traced
// activations and effective weights. Softmax outputs are explained at the
// target logit.
inline std::vector<double> lrp_epsilon(const net::DenseNetwork& network, std::span<const double> x,
                                       const net::ForwardOptions& opts = {},
                                       std::optional<int> target = std::nullopt,
                                       double epsilon = 1e-6) {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("lrp_epsilon: epsilon must be >= 0");
    for (std::size_t l = 0; l + 1 < network.layer_count(); ++l) {
        const auto act = network.layer(l).activation;
        if (act != net::Activation::Relu && act != net::Activation::Identity)
            throw std::invalid_argument("lrp_epsilon: unsupported hidden activation");
    }
    const auto trace = net::forward(network, x, opts);
    const std::size_t L = network.layer_count();
    const int t = target.value_or(0);
    if (t < 0 || static_cast<std::size_t>(t) >= network.output_dim())
        throw std::invalid_argument("lrp_epsilon: target index out of range");

    std::vector<double> relevance(network.output_dim(), 0.0);
    relevance[t] = network.is_classifier() ? trace.pre.back()[t] : trace.post.back()[t];

    Matrix scratch;
    for (std::size_t l = L; l-- > 0;) {
        const std::span<const double> a_in =
            l == 0 ? x : std::span<const double>(trace.post[l - 1]);
        const bool final_layer = (l + 1 == L);
        const Matrix& W = final_layer
                              ? net::detail::effective_final_weights(network, opts, scratch)
                              : network.layer(l).weights;
        std::vector<double> next(a_in.size(), 0.0);
        for (std::size_t j = 0; j < W.rows(); ++j) {
            if (relevance[j] == 0.0) continue;
            const double z = trace.pre[l][j];
            const double denom = z + epsilon * (z >= 0.0 ? 1.0 : -1.0);
            if (denom == 0.0) continue;
            const double factor = relevance[j] / denom;
            const double* w = W.data().data() + j * W.cols();
            for (std::size_t k = 0; k < a_in.size(); ++k) next[k] += a_in[k] * w[k] * factor;
        }
        relevance = std::move(next);
    }
    return relevance;
}

// Permutation-sampling Shapley estimate with a fixed-baseline value
// function; estimates vary across explainer seeds.
//
// When masks are supplied the value function queries the stochastic model:
// every coalition evaluation draws fresh masks of the same kind from the
// explainer's seed stream. A sampling-based explainer has no way to hold
// one ensemble member fixed across its model queries, which is exactly why
// ensemble uncertainty attribution breaks down for it; without masks the
// estimate is deterministic given the seed.
//
// A raw activation override is resolved once at x (like a mask, the
// perturbation is a fixed property of the model across coalition
// evaluations). Coalition walks update the first layer's pre-activation
// incrementally: each step changes exactly one input feature.
inline std::vector<double> sampled_shapley(const net::DenseNetwork& network,
                                           std::span<const double> x, const ExplainerSpec& spec,
                                           const net::ForwardOptions& opts = {},
                                           std::optional<int> target = std::nullopt) {
    spec.validate();
    const std::size_t n = x.size();
    const auto baseline = detail::resolve_baseline(spec, n);
    rng::Rng r(spec.seed);

    net::ForwardOptions eval_opts = opts;
    net::ActivationScale frozen;
    if (opts.override_activations) {
        frozen = net::resolve_override(network, x, *opts.override_activations, opts);
        eval_opts.override_activations = nullptr;
        eval_opts.scale_override = &frozen;
    }
    const bool stochastic_model = eval_opts.masks != nullptr;
    const net::MaskKind mask_kind =
        stochastic_model ? eval_opts.masks->kind : net::MaskKind::Dropout;
    rng::Rng mask_rng(rng::derive(spec.seed, {"model-noise"}));
    net::FastForward fast(network, eval_opts);

    const std::size_t width = network.layer(0).bias.size();
    std::vector<double> z0_base(width), z0(width);
    fast.first_pre(baseline, z0_base);
    const Matrix& w0 = network.layer(0).weights;

    auto evaluate = [&](std::span<const double> z_first) {
        if (stochastic_model) fast.resample_masks(mask_rng, mask_kind);
        return fast.value_from_first_pre(z_first, target);
    };

    std::vector<double> phi(n, 0.0);
    std::vector<std::size_t> perm(n);
    for (int s = 0; s < spec.shapley_samples; ++s) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        r.shuffle(perm);
        std::copy(z0_base.begin(), z0_base.end(), z0.begin());
        double previous = evaluate(z0_base);
        for (std::size_t feature : perm) {
            const double delta = x[feature] - baseline[feature];
            for (std::size_t row = 0; row < width; ++row) z0[row] += w0(row, feature) * delta;
            const double v = evaluate(z0);
            phi[feature] += v - previous;
            previous = v;
        }
    }
    for (auto& p : phi) p /= static_cast<double>(spec.shapley_samples);
    return phi;
}

inline std::vector<double> explain(const net::DenseNetwork& network, std::span<const double> x,
                                   const ExplainerSpec& spec, const net::ForwardOptions& opts = {},
                                   std::optional<int> target = std::nullopt) {
    switch (spec.method) {
        case ExplainerMethod::InputTimesGradient:
            return input_times_gradient(network, x, opts, target);
        case ExplainerMethod::IntegratedGradients:
            return integrated_gradients(network, x, spec, opts, target);
        case ExplainerMethod::LrpEpsilon:
            return lrp_epsilon(network, x, opts, target, spec.lrp_epsilon);
        case ExplainerMethod::SampledShapley:
            return sampled_shapley(network, x, spec, opts, target);
    }
    throw std::logic_error("explain: unreachable");
}

// Type-erased explainer; lets tests substitute stubs for the Jacobian and
// metric plumbing.
using Explainer = std::function<std::vector<double>(
    const net::DenseNetwork&, std::span<const double>, const net::ForwardOptions&,
    std::optional<int>)>;

inline Explainer make_explainer(const ExplainerSpec& spec) {
    spec.validate();
    return [spec](const net::DenseNetwork& network, std::span<const double> x,
                  const net::ForwardOptions& opts, std::optional<int> target) {
        return explain(network, x, spec, opts, target);
    };
}

}  // namespace xuq::attrib
