#pragma once
// Minimal trainable dense network with stochastic-mask inference.
//
// Masking semantics: dropout masks multiply post-activation vectors of the
// hidden layers, dropconnect masks multiply the final layer's weights. At
// inference time masks are applied WITHOUT 1/(1-p) rescaling by default (a
// scaled member would change the Bernoulli variance term that the analytic
// uncertainty approximation relies on); training applies inverted scaling.
//
// Activation overrides: forward() can replace one hidden layer's
// post-activation vector with a caller-supplied one before the remaining
// layers run. The replacement is realised as a per-unit multiplicative
// factor v_j / a_j (with an additive offset where a_j == 0), so gradients
// propagate through the override the same way they propagate through a
// mask. This is what makes finite-difference Jacobians of gradient-based
// explainers consistent with the mask-induced perturbations they model.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/matrix.hpp"
#include "xuq/numstat.hpp"
#include "xuq/rng.hpp"

namespace xuq::net {

enum class Activation { Identity, Relu, Softmax };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "softmax") return Activation::Softmax;
    throw std::invalid_argument("unknown activation: " + s);
}

struct Layer {
    Matrix weights;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::Identity;
};

class DenseNetwork {
  public:
    DenseNetwork() = default;
    DenseNetwork(std::vector<Layer> layers, double dropout_p, double dropconnect_p)
        : layers_(std::move(layers)), dropout_p_(dropout_p), dropconnect_p_(dropconnect_p) {
        validate();
    }

    void validate() const {
        if (layers_.empty()) throw std::invalid_argument("DenseNetwork: no layers");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            if (layer.weights.rows() != layer.bias.size())
                throw std::invalid_argument("DenseNetwork: bias/weight row mismatch");
            if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows())
                throw std::invalid_argument("DenseNetwork: layer dimensions do not chain");
            if (l + 1 < layers_.size() && layer.activation == Activation::Softmax)
                throw std::invalid_argument("DenseNetwork: softmax only allowed on the output layer");
            for (double w : layer.weights.data())
                if (!std::isfinite(w)) throw std::invalid_argument("DenseNetwork: non-finite weight");
        }
        if (!(dropout_p_ >= 0.0 && dropout_p_ < 1.0))
            throw std::invalid_argument("DenseNetwork: dropout probability must be in [0,1)");
        if (!(dropconnect_p_ >= 0.0 && dropconnect_p_ < 1.0))
            throw std::invalid_argument("DenseNetwork: dropconnect probability must be in [0,1)");
    }

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    Layer& layer(std::size_t i) { return layers_[i]; }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    std::size_t input_dim() const { return layers_.front().weights.cols(); }
    std::size_t output_dim() const { return layers_.back().weights.rows(); }
    std::size_t last_hidden_layer() const {
        if (layers_.size() < 2) throw std::logic_error("DenseNetwork: no hidden layer");
        return layers_.size() - 2;
    }
    bool is_classifier() const { return layers_.back().activation == Activation::Softmax; }
    double dropout_probability() const noexcept { return dropout_p_; }
    double dropconnect_probability() const noexcept { return dropconnect_p_; }

    bool operator==(const DenseNetwork&) const = default;
    friend bool operator==(const Layer&, const Layer&);

  private:
    std::vector<Layer> layers_;
    double dropout_p_ = 0.0;
    double dropconnect_p_ = 0.0;
};

inline bool operator==(const Layer& a, const Layer& b) {
    return a.weights == b.weights && a.bias == b.bias && a.activation == b.activation;
}

enum class MaskKind { Dropout, Dropconnect };

inline std::string mask_kind_name(MaskKind k) {
    return k == MaskKind::Dropout ? "mcd" : "mcdc";
}

inline MaskKind parse_mask_kind(const std::string& s) {
    if (s == "mcd" || s == "dropout") return MaskKind::Dropout;
    if (s == "mcdc" || s == "dropconnect") return MaskKind::Dropconnect;
    throw std::invalid_argument("unknown UQ kind: " + s);
}

struct MaskSet {
    MaskKind kind = MaskKind::Dropout;
    std::vector<std::vector<double>> activation_masks;  // one per hidden layer (dropout)
    Matrix weight_mask;                                 // final layer shape (dropconnect)
    std::uint64_t seed = 0;

    bool operator==(const MaskSet&) const = default;
};

enum class DropoutScaling { None, Inverted };

// Replace layer `layer`'s post-activation vector with `values`.
struct ActivationOverride {
    std::size_t layer = 0;
    std::vector<double> values;
};

// Resolved form of an override: post-activation a_j becomes a_j*scale_j +
// offset_j. Path-integrating explainers resolve a raw override once at the
// evaluation point and reuse the factors, exactly as a fixed mask would act.
struct ActivationScale {
    std::size_t layer = 0;
    std::vector<double> scale;
    std::vector<double> offset;
};

struct ForwardOptions {
    const MaskSet* masks = nullptr;
    const ActivationOverride* override_activations = nullptr;
    const ActivationScale* scale_override = nullptr;
    const Matrix* final_weights = nullptr;  // substitute final-layer weight matrix
    DropoutScaling scaling = DropoutScaling::None;
};

struct ForwardTrace {
    std::vector<std::vector<double>> pre;    // z_l before activation
    std::vector<std::vector<double>> post;   // what the next layer consumes
    std::vector<std::vector<double>> scale;  // multiplicative factor applied to act(z_l)
    std::vector<double> output;              // == post.back()
};

namespace detail {

inline void apply_activation(Activation act, std::span<const double> z, std::span<double> a) {
    switch (act) {
        case Activation::Identity:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i];
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
            break;
        case Activation::Softmax: {
            double zmax = z[0];
            for (double v : z) zmax = std::max(zmax, v);
            double total = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                a[i] = std::exp(z[i] - zmax);
                total += a[i];
            }
            for (std::size_t i = 0; i < z.size(); ++i) a[i] /= total;
            break;
        }
    }
}

// d act(z)/dz for identity/relu; softmax is handled at the output seed.
inline double activation_derivative(Activation act, double z) {
    if (act == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;  // subgradient at 0 is 0
    return 1.0;
}

inline const Matrix& effective_final_weights(const DenseNetwork& net, const ForwardOptions& opts,
                                             Matrix& scratch) {
    const Matrix& base = opts.final_weights ? *opts.final_weights : net.layers().back().weights;
    if (opts.masks && opts.masks->kind == MaskKind::Dropconnect &&
        !opts.masks->weight_mask.empty()) {
        const double keep_scale = opts.scaling == DropoutScaling::Inverted
                                      ? 1.0 / (1.0 - net.dropconnect_probability())
                                      : 1.0;
        scratch = base;
        for (std::size_t i = 0; i < scratch.size(); ++i)
            scratch.data()[i] *= opts.masks->weight_mask.data()[i] * keep_scale;
        return scratch;
    }
    return base;
}

}  // namespace detail

inline ForwardTrace forward(const DenseNetwork& net, std::span<const double> x,
                            const ForwardOptions& opts = {}) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    const std::size_t L = net.layer_count();
    if (opts.override_activations && opts.override_activations->layer >= L)
        throw std::invalid_argument("forward: override layer out of range");
    if (opts.masks && opts.masks->kind == MaskKind::Dropout &&
        opts.masks->activation_masks.size() + 1 != L)
        throw std::invalid_argument("forward: dropout mask count mismatch");

    ForwardTrace trace;
    trace.pre.resize(L);
    trace.post.resize(L);
    trace.scale.resize(L);

    std::vector<double> input(x.begin(), x.end());
    Matrix scratch;
    for (std::size_t l = 0; l < L; ++l) {
        const Layer& layer = net.layer(l);
        const bool final_layer = (l + 1 == L);
        const Matrix& W =
            final_layer ? detail::effective_final_weights(net, opts, scratch) : layer.weights;

        auto& z = trace.pre[l];
        z.resize(layer.bias.size());
        W.multiply(input, z);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];

        auto& a = trace.post[l];
        a.resize(z.size());
        detail::apply_activation(layer.activation, z, a);

        auto& s = trace.scale[l];
        s.assign(z.size(), 1.0);
        if (!final_layer && opts.masks && opts.masks->kind == MaskKind::Dropout) {
            const auto& m = opts.masks->activation_masks[l];
            if (m.size() != a.size())
                throw std::invalid_argument("forward: dropout mask shape mismatch");
            const double keep_scale = opts.scaling == DropoutScaling::Inverted
                                          ? 1.0 / (1.0 - net.dropout_probability())
                                          : 1.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                s[i] = m[i] * keep_scale;
                a[i] *= s[i];
            }
        }
        if (opts.override_activations && opts.override_activations->layer == l) {
            const auto& v = opts.override_activations->values;
            if (v.size() != a.size())
                throw std::invalid_argument("forward: override vector length mismatch");
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (a[i] != 0.0) s[i] *= v[i] / a[i];
                a[i] = v[i];  // value replaced exactly; zero entries keep scale as-is
            }
        }
        if (opts.scale_override && opts.scale_override->layer == l) {
            const auto& so = *opts.scale_override;
            if (so.scale.size() != a.size() || so.offset.size() != a.size())
                throw std::invalid_argument("forward: scale override length mismatch");
            for (std::size_t i = 0; i < a.size(); ++i) {
                s[i] *= so.scale[i];
                a[i] = a[i] * so.scale[i] + so.offset[i];
            }
        }
        input = a;
    }
    trace.output = trace.post.back();
    return trace;
}

// Repeated scalar evaluation of one (network, options) pair without
// per-call allocation; the workhorse behind sampling-based explainers.
// Masks, scale overrides and final-weight substitution are folded in once at
// construction. Factor application mirrors forward() operation-for-operation
// so results are bit-identical with the general path.
class FastForward {
  public:
    FastForward(const DenseNetwork& network, const ForwardOptions& opts)
        : net_(network), opts_(opts) {
        if (opts.override_activations)
            throw std::invalid_argument(
                "FastForward: raw overrides must be resolved to scale form first");
        base_final_ = opts.final_weights ? opts.final_weights : &network.layers().back().weights;
        const Matrix& eff = detail::effective_final_weights(network, opts, final_scratch_);
        final_weights_ = &eff;

        const std::size_t L = network.layer_count();
        mask_scale_.resize(L);
        if (opts.masks && opts.masks->kind == MaskKind::Dropout) {
            const double keep_scale = opts.scaling == DropoutScaling::Inverted
                                          ? 1.0 / (1.0 - network.dropout_probability())
                                          : 1.0;
            for (std::size_t l = 0; l + 1 < L; ++l) {
                mask_scale_[l] = opts.masks->activation_masks[l];
                for (auto& s : mask_scale_[l]) s *= keep_scale;
            }
        }
        std::size_t max_width = network.input_dim();
        for (const auto& layer : network.layers())
            max_width = std::max(max_width, layer.weights.rows());
        buf_a_.resize(max_width);
        buf_b_.resize(max_width);
    }

    // z = W_0 x + b_0 into out (size = first layer width). The first layer
    // is also the final one in a single-layer net, so it takes the
    // effective weights there.
    void first_pre(std::span<const double> x, std::span<double> out) const {
        const Matrix& W = net_.layer_count() == 1 ? *final_weights_ : net_.layer(0).weights;
        W.multiply(x, out);
        const auto& b = net_.layer(0).bias;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    }

    double value(std::span<const double> x, std::optional<int> target) {
        const std::size_t w0 = net_.layer(0).bias.size();
        first_pre(x, std::span<double>(buf_a_.data(), w0));
        return value_from_first_pre(std::span<const double>(buf_a_.data(), w0), target);
    }

    // Evaluate the remaining layers from the first layer's pre-activation.
    double value_from_first_pre(std::span<const double> z0, std::optional<int> target) {
        const std::size_t L = net_.layer_count();
        double* cur = buf_b_.data();
        std::size_t cur_n = z0.size();
        activate_layer(0, z0, cur);
        for (std::size_t l = 1; l < L; ++l) {
            const Layer& layer = net_.layer(l);
            const Matrix& W = (l + 1 == L) ? *final_weights_ : layer.weights;
            double* next = (cur == buf_b_.data()) ? buf_a_.data() : buf_b_.data();
            W.multiply(std::span<const double>(cur, cur_n),
                       std::span<double>(next, W.rows()));
            for (std::size_t i = 0; i < W.rows(); ++i) next[i] += layer.bias[i];
            activate_layer(l, std::span<const double>(next, W.rows()), next);
            cur = next;
            cur_n = W.rows();
        }
        const int t = target.value_or(0);
        if (t < 0 || static_cast<std::size_t>(t) >= cur_n)
            throw std::invalid_argument("FastForward: target index out of range");
        return cur[t];
    }

    // Redraw the stochastic masks in place: dropout refreshes the per-layer
    // keep scales, dropconnect refreshes the effective final weights from
    // the base matrix. Used by explainers whose model queries hit the
    // stochastic model rather than one fixed ensemble member.
    void resample_masks(rng::Rng& r, MaskKind kind) {
        if (kind == MaskKind::Dropout) {
            const double p = net_.dropout_probability();
            const double keep =
                opts_.scaling == DropoutScaling::Inverted ? 1.0 / (1.0 - p) : 1.0;
            for (std::size_t l = 0; l + 1 < net_.layer_count(); ++l) {
                auto& s = mask_scale_[l];
                s.resize(net_.layer(l).bias.size());
                for (auto& v : s) v = r.bernoulli(p) ? 0.0 : keep;
            }
        } else {
            const double p = net_.dropconnect_probability();
            const double keep =
                opts_.scaling == DropoutScaling::Inverted ? 1.0 / (1.0 - p) : 1.0;
            const Matrix& base = *base_final_;
            if (final_scratch_.rows() != base.rows() || final_scratch_.cols() != base.cols())
                final_scratch_ = base;
            for (std::size_t i = 0; i < base.size(); ++i)
                final_scratch_.data()[i] = r.bernoulli(p) ? 0.0 : base.data()[i] * keep;
            final_weights_ = &final_scratch_;
        }
    }

  private:
    void activate_layer(std::size_t l, std::span<const double> z, double* out) {
        detail::apply_activation(net_.layer(l).activation, z,
                                 std::span<double>(out, z.size()));
        if (!mask_scale_[l].empty())
            for (std::size_t i = 0; i < z.size(); ++i) out[i] *= mask_scale_[l][i];
        if (opts_.scale_override && opts_.scale_override->layer == l) {
            const auto& so = *opts_.scale_override;
            for (std::size_t i = 0; i < z.size(); ++i)
                out[i] = out[i] * so.scale[i] + so.offset[i];
        }
    }

    const DenseNetwork& net_;
    ForwardOptions opts_;
    Matrix final_scratch_;
    const Matrix* base_final_ = nullptr;
    const Matrix* final_weights_ = nullptr;
    std::vector<std::vector<double>> mask_scale_;
    std::vector<double> buf_a_, buf_b_;
};

// Turn a raw override into per-unit factors relative to the activations the
// network actually produces at x (under the same masks). Units whose base
// activation is zero get an additive offset instead of a factor.
inline ActivationScale resolve_override(const DenseNetwork& net, std::span<const double> x,
                                        const ActivationOverride& ov,
                                        const ForwardOptions& base_opts = {}) {
    ForwardOptions opts = base_opts;
    opts.override_activations = nullptr;
    opts.scale_override = nullptr;
    const ForwardTrace trace = forward(net, x, opts);
    if (ov.layer >= trace.post.size() || ov.values.size() != trace.post[ov.layer].size())
        throw std::invalid_argument("resolve_override: layer/length mismatch");
    ActivationScale out;
    out.layer = ov.layer;
    out.scale.resize(ov.values.size());
    out.offset.assign(ov.values.size(), 0.0);
    for (std::size_t i = 0; i < ov.values.size(); ++i) {
        const double base = trace.post[ov.layer][i];
        if (base != 0.0) {
            out.scale[i] = ov.values[i] / base;
        } else {
            out.scale[i] = 1.0;
            out.offset[i] = ov.values[i];
        }
    }
    return out;
}

// Gradient of one scalar output with respect to the input, under the given
// masks / override / weight substitution. For softmax outputs the scalar is
// the probability of `target`; otherwise `target` picks the output index
// (default 0).
inline std::vector<double> input_gradient(const DenseNetwork& net, std::span<const double> x,
                                          const ForwardOptions& opts = {},
                                          std::optional<int> target = std::nullopt) {
    const ForwardTrace trace = forward(net, x, opts);
    const std::size_t L = net.layer_count();
    const std::size_t out_dim = net.output_dim();
    const int t = target.value_or(0);
    if (t < 0 || static_cast<std::size_t>(t) >= out_dim)
        throw std::invalid_argument("input_gradient: target index out of range");

    // Seed gradient at the output layer's pre-activation.
    std::vector<double> g_z(out_dim, 0.0);
    const Layer& out_layer = net.layers().back();
    if (out_layer.activation == Activation::Softmax) {
        const auto& p = trace.post.back();
        for (std::size_t j = 0; j < out_dim; ++j)
            g_z[j] = p[t] * ((static_cast<std::size_t>(t) == j ? 1.0 : 0.0) - p[j]);
    } else {
        g_z[t] = detail::activation_derivative(out_layer.activation, trace.pre.back()[t]);
    }
    // No masks or overrides apply to the final post-activation in this path;
    // the final layer's scale is identity unless an override targeted it.
    for (std::size_t j = 0; j < out_dim; ++j) g_z[j] *= trace.scale.back()[j];

    Matrix scratch;
    std::vector<double> g_prev;
    for (std::size_t l = L; l-- > 0;) {
        const Layer& layer = net.layer(l);
        const bool final_layer = (l + 1 == L);
        const Matrix& W =
            final_layer ? detail::effective_final_weights(net, opts, scratch) : layer.weights;
        g_prev.assign(W.cols(), 0.0);
        W.multiply_transpose_add(g_z, g_prev);
        if (l == 0) return g_prev;
        // chain through the previous layer's post-activation scale and activation
        const Layer& prev = net.layer(l - 1);
        g_z.resize(g_prev.size());
        for (std::size_t j = 0; j < g_prev.size(); ++j) {
            g_z[j] = g_prev[j] * trace.scale[l - 1][j] *
                     detail::activation_derivative(prev.activation, trace.pre[l - 1][j]);
        }
    }
    return g_prev;  // unreachable
}

// i.i.d. Bernoulli keep/drop masks. Dropout covers every hidden layer,
// dropconnect covers only the final layer's weights. Identical seed gives a
// bit-identical MaskSet (entries drawn layer by layer, row-major).
inline MaskSet sample_masks(const DenseNetwork& net, MaskKind kind, std::uint64_t seed) {
    MaskSet ms;
    ms.kind = kind;
    ms.seed = seed;
    rng::Rng r(seed);
    if (kind == MaskKind::Dropout) {
        const double p = net.dropout_probability();
        ms.activation_masks.resize(net.layer_count() - 1);
        for (std::size_t l = 0; l + 1 < net.layer_count(); ++l) {
            auto& m = ms.activation_masks[l];
            m.resize(net.layer(l).bias.size());
            for (auto& v : m) v = r.bernoulli(p) ? 0.0 : 1.0;
        }
    } else {
        const double p = net.dropconnect_probability();
        const Layer& last = net.layers().back();
        ms.weight_mask = Matrix(last.weights.rows(), last.weights.cols());
        for (auto& v : ms.weight_mask.data()) v = r.bernoulli(p) ? 0.0 : 1.0;
    }
    return ms;
}

struct PredictiveEnsemble {
    std::vector<std::vector<double>> member_outputs;  // K x out_dim
    std::vector<double> mean_output;                  // averaged outputs / softmax probs
    int predicted_class = -1;                         // classification only
    std::vector<double> scalar_targets;               // the K scalars behind s^2
    double predictive_variance = 0.0;                 // s^2
};

// K independent masked forward passes. Returns the masks alongside the
// ensemble so explainers can reuse the exact members. Member k's mask seed
// is derive(seed, {"mask", k}).
inline std::pair<PredictiveEnsemble, std::vector<MaskSet>> mc_ensemble(
    const DenseNetwork& net, std::span<const double> x, MaskKind kind, int K, std::uint64_t seed,
    DropoutScaling scaling = DropoutScaling::None) {
    if (K < 2) throw std::invalid_argument("mc_ensemble: K must be >= 2");
    PredictiveEnsemble ens;
    std::vector<MaskSet> masks;
    masks.reserve(K);
    ens.member_outputs.reserve(K);
    ens.mean_output.assign(net.output_dim(), 0.0);
    for (int k = 0; k < K; ++k) {
        masks.push_back(sample_masks(net, kind, rng::derive(seed, {"mask", k})));
        ForwardOptions opts;
        opts.masks = &masks.back();
        opts.scaling = scaling;
        auto trace = forward(net, x, opts);
        for (std::size_t j = 0; j < trace.output.size(); ++j)
            ens.mean_output[j] += trace.output[j];
        ens.member_outputs.push_back(std::move(trace.output));
    }
    for (auto& v : ens.mean_output) v /= static_cast<double>(K);

    ens.scalar_targets.resize(K);
    if (net.is_classifier()) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < ens.mean_output.size(); ++j)
            if (ens.mean_output[j] > ens.mean_output[best]) best = j;
        ens.predicted_class = static_cast<int>(best);
        for (int k = 0; k < K; ++k) ens.scalar_targets[k] = ens.member_outputs[k][best];
    } else {
        for (int k = 0; k < K; ++k) ens.scalar_targets[k] = ens.member_outputs[k][0];
    }
    double mean = 0.0;
    for (double v : ens.scalar_targets) mean += v;
    mean /= static_cast<double>(K);
    double var = 0.0;
    for (double v : ens.scalar_targets) var += (v - mean) * (v - mean);
    ens.predictive_variance = var / static_cast<double>(K - 1);
    return {std::move(ens), std::move(masks)};
}

}  // namespace xuq::net
