#pragma once
// Adam training for DenseNetwork. Deterministic given (seed, data): weight
// init, shuffling and per-sample masks all come from seeds derived with
// rng::derive, and the loop is single-threaded.
//
// Stochastic regularisation during training uses inverted scaling (kept
// units scaled by 1/(1-p)); inference-time masking stays unscaled.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/network.hpp"
#include "xuq/rng.hpp"

namespace xuq::net {

enum class Loss { Mse, CrossEntropy };

inline std::string loss_name(Loss l) { return l == Loss::Mse ? "mse" : "cross_entropy"; }
inline Loss parse_loss(const std::string& s) {
    if (s == "mse") return Loss::Mse;
    if (s == "cross_entropy") return Loss::CrossEntropy;
    throw std::invalid_argument("unknown loss: " + s);
}

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Loss loss = Loss::Mse;
    std::uint64_t seed = 0;
};

namespace detail {

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<std::vector<double>> m_b, v_b;
    long step = 0;
};

inline void he_init(DenseNetwork& net, std::uint64_t seed) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        rng::Rng r(rng::derive(seed, {"init", l}));
        Layer& layer = net.layer(l);
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.cols()));
        for (auto& w : layer.weights.data()) w = r.uniform(-limit, limit);
        for (auto& b : layer.bias) b = 0.0;
    }
}

}  // namespace detail

// Architecture helper: ReLU hidden layers, identity (regression) or softmax
// (classification) output. Weights start at zero; train() initialises them.
inline DenseNetwork make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                             std::size_t output_dim, bool classifier, double dropout_p = 0.0,
                             double dropconnect_p = 0.0) {
    std::vector<Layer> layers;
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        layers.push_back({Matrix(width, in), std::vector<double>(width, 0.0), Activation::Relu});
        in = width;
    }
    layers.push_back({Matrix(output_dim, in), std::vector<double>(output_dim, 0.0),
                      classifier ? Activation::Softmax : Activation::Identity});
    return DenseNetwork(std::move(layers), dropout_p, dropconnect_p);
}

// Trains a copy of `arch` on (X, y). For cross-entropy, y holds class
// indices. Throws on an empty dataset, dimension mismatch, epochs < 1, or a
// non-finite loss (with the epoch in the diagnostic).
inline DenseNetwork train(const DenseNetwork& arch, const std::vector<std::vector<double>>& X,
                          const std::vector<double>& y, const TrainConfig& cfg) {
    if (X.empty()) throw std::invalid_argument("train: empty dataset");
    if (X.size() != y.size()) throw std::invalid_argument("train: feature/target size mismatch");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    for (const auto& row : X)
        if (row.size() != arch.input_dim())
            throw std::invalid_argument("train: feature dimension mismatch");
    const bool classifier = arch.is_classifier();
    if (cfg.loss == Loss::CrossEntropy && !classifier)
        throw std::invalid_argument("train: cross-entropy needs a softmax output");
    if (cfg.loss == Loss::Mse && classifier)
        throw std::invalid_argument("train: mse needs a non-softmax output");

    DenseNetwork net = arch;
    detail::he_init(net, cfg.seed);
    const std::size_t L = net.layer_count();

    detail::AdamState adam;
    adam.m_w.resize(L);
    adam.v_w.resize(L);
    adam.m_b.resize(L);
    adam.v_b.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        adam.m_w[l] = Matrix(net.layer(l).weights.rows(), net.layer(l).weights.cols());
        adam.v_w[l] = adam.m_w[l];
        adam.m_b[l].assign(net.layer(l).bias.size(), 0.0);
        adam.v_b[l] = adam.m_b[l];
    }
    std::vector<Matrix> grad_w(L);
    std::vector<std::vector<double>> grad_b(L);

    const bool use_dropout = net.dropout_probability() > 0.0;
    const bool use_dropconnect = net.dropconnect_probability() > 0.0;

    std::vector<std::size_t> order(X.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::Rng shuffle_rng(rng::derive(cfg.seed, {"shuffle", epoch}));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < L; ++l) {
                grad_w[l] = Matrix(net.layer(l).weights.rows(), net.layer(l).weights.cols());
                grad_b[l].assign(net.layer(l).bias.size(), 0.0);
            }

            for (std::size_t idx = start; idx < end; ++idx) {
                const std::size_t i = order[idx];
                MaskSet dropout_mask, dropconnect_mask;
                ForwardOptions opts;
                opts.scaling = DropoutScaling::Inverted;
                if (use_dropout) {
                    dropout_mask = sample_masks(net, MaskKind::Dropout,
                                                rng::derive(cfg.seed, {"mask", epoch, i, 0}));
                    opts.masks = &dropout_mask;
                } else if (use_dropconnect) {
                    dropconnect_mask = sample_masks(net, MaskKind::Dropconnect,
                                                    rng::derive(cfg.seed, {"mask", epoch, i, 1}));
                    opts.masks = &dropconnect_mask;
                }

                const ForwardTrace trace = forward(net, X[i], opts);

                // Loss gradient at the output pre-activation.
                std::vector<double> g_z(net.output_dim(), 0.0);
                if (cfg.loss == Loss::Mse) {
                    const double err = trace.output[0] - y[i];
                    epoch_loss += err * err;
                    g_z[0] = 2.0 * err *
                             detail::activation_derivative(net.layers().back().activation,
                                                           trace.pre.back()[0]);
                } else {
                    const int cls = static_cast<int>(y[i]);
                    if (cls < 0 || static_cast<std::size_t>(cls) >= net.output_dim())
                        throw std::invalid_argument("train: class index out of range");
                    const double p = std::max(trace.output[cls], 1e-12);
                    epoch_loss += -std::log(p);
                    for (std::size_t j = 0; j < g_z.size(); ++j)
                        g_z[j] = trace.output[j] - (static_cast<int>(j) == cls ? 1.0 : 0.0);
                }

                // Backward pass accumulating parameter gradients.
                Matrix scratch;
                std::vector<double> g_prev;
                for (std::size_t l = L; l-- > 0;) {
                    const std::span<const double> layer_in =
                        l == 0 ? std::span<const double>(X[i]) : std::span<const double>(trace.post[l - 1]);
                    const bool final_layer = (l + 1 == L);
                    // Weight gradient; dropconnect masks gate the final layer.
                    const bool masked_final = final_layer && opts.masks &&
                                              opts.masks->kind == MaskKind::Dropconnect;
                    const double keep_scale =
                        masked_final ? 1.0 / (1.0 - net.dropconnect_probability()) : 1.0;
                    Matrix& gw = grad_w[l];
                    for (std::size_t r = 0; r < gw.rows(); ++r) {
                        const double gz = g_z[r] * inv_batch;
                        double* grow = gw.data().data() + r * gw.cols();
                        if (masked_final) {
                            const double* mrow =
                                opts.masks->weight_mask.data().data() + r * gw.cols();
                            for (std::size_t c = 0; c < gw.cols(); ++c)
                                grow[c] += gz * layer_in[c] * mrow[c] * keep_scale;
                        } else {
                            for (std::size_t c = 0; c < gw.cols(); ++c)
                                grow[c] += gz * layer_in[c];
                        }
                        grad_b[l][r] += gz;
                    }
                    if (l == 0) break;
                    const Matrix& W = final_layer
                                          ? detail::effective_final_weights(net, opts, scratch)
                                          : net.layer(l).weights;
                    g_prev.assign(W.cols(), 0.0);
                    W.multiply_transpose_add(g_z, g_prev);
                    const Layer& prev = net.layer(l - 1);
                    g_z.resize(g_prev.size());
                    for (std::size_t j = 0; j < g_prev.size(); ++j)
                        g_z[j] = g_prev[j] * trace.scale[l - 1][j] *
                                 detail::activation_derivative(prev.activation, trace.pre[l - 1][j]);
                }
            }

            // Adam update.
            adam.step += 1;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
            for (std::size_t l = 0; l < L; ++l) {
                auto& W = net.layer(l).weights.data();
                auto& mw = adam.m_w[l].data();
                auto& vw = adam.v_w[l].data();
                const auto& gw = grad_w[l].data();
                for (std::size_t k = 0; k < W.size(); ++k) {
                    mw[k] = cfg.beta1 * mw[k] + (1.0 - cfg.beta1) * gw[k];
                    vw[k] = cfg.beta2 * vw[k] + (1.0 - cfg.beta2) * gw[k] * gw[k];
                    W[k] -= cfg.learning_rate * (mw[k] / bc1) /
                            (std::sqrt(vw[k] / bc2) + cfg.adam_epsilon);
                }
                auto& b = net.layer(l).bias;
                for (std::size_t k = 0; k < b.size(); ++k) {
                    adam.m_b[l][k] = cfg.beta1 * adam.m_b[l][k] + (1.0 - cfg.beta1) * grad_b[l][k];
                    adam.v_b[l][k] =
                        cfg.beta2 * adam.v_b[l][k] + (1.0 - cfg.beta2) * grad_b[l][k] * grad_b[l][k];
                    b[k] -= cfg.learning_rate * (adam.m_b[l][k] / bc1) /
                            (std::sqrt(adam.v_b[l][k] / bc2) + cfg.adam_epsilon);
                }
            }
        }

        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    return net;
}

}  // namespace xuq::net
