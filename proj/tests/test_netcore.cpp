#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "xuq/checkpoint.hpp"
#include "xuq/network.hpp"
#include "xuq/numstat.hpp"
#include "xuq/train.hpp"

using namespace xuq;
using namespace xuq::net;

namespace {

DenseNetwork single_linear(std::vector<double> w, double b) {
    Matrix W(1, w.size());
    for (std::size_t i = 0; i < w.size(); ++i) W(0, i) = w[i];
    return DenseNetwork({{W, {b}, Activation::Identity}}, 0.0, 0.0);
}

DenseNetwork random_mlp(rng::Rng& r, std::size_t in, std::vector<std::size_t> hidden,
                        std::size_t out, bool classifier, double p_drop, double p_conn) {
    DenseNetwork net = make_mlp(in, hidden, out, classifier, p_drop, p_conn);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (auto& w : net.layer(l).weights.data()) w = r.uniform(-1.0, 1.0);
        for (auto& b : net.layer(l).bias) b = r.uniform(-0.5, 0.5);
    }
    return net;
}

}  // namespace

TEST_CASE("forward: single affine layer") {
    auto net = single_linear({2.0, 3.0}, 1.0);
    auto trace = forward(net, std::vector{1.0, 1.0});
    CHECK(trace.output.size() == 1);
    CHECK(trace.output[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("forward: p=0 masks equal unmasked forward") {
    rng::Rng r(7);
    auto net = random_mlp(r, 4, {6, 5}, 1, false, 0.0, 0.0);
    const std::vector<double> x{0.3, -1.2, 0.8, 2.0};
    auto plain = forward(net, x);
    auto masks = sample_masks(net, MaskKind::Dropout, 99);
    for (const auto& m : masks.activation_masks)
        for (double v : m) CHECK(v == 1.0);
    ForwardOptions opts;
    opts.masks = &masks;
    auto masked = forward(net, x, opts);
    CHECK(masked.output[0] == plain.output[0]);
}

TEST_CASE("forward: identity override reproduces plain forward") {
    rng::Rng r(8);
    auto net = random_mlp(r, 3, {5, 4}, 1, false, 0.0, 0.0);
    const std::vector<double> x{1.0, -0.5, 0.25};
    auto plain = forward(net, x);
    ActivationOverride ov{1, plain.post[1]};
    ForwardOptions opts;
    opts.override_activations = &ov;
    auto overridden = forward(net, x, opts);
    CHECK(overridden.output[0] == doctest::Approx(plain.output[0]).epsilon(1e-12));
}

TEST_CASE("forward: dimension mismatches throw") {
    auto net = single_linear({2.0, 3.0}, 1.0);
    CHECK_THROWS_AS(forward(net, std::vector{1.0}), std::invalid_argument);
    ActivationOverride ov{0, {1.0, 2.0, 3.0}};
    ForwardOptions opts;
    opts.override_activations = &ov;
    CHECK_THROWS_AS(forward(net, std::vector{1.0, 1.0}, opts), std::invalid_argument);
}

TEST_CASE("input_gradient: affine map has constant gradient") {
    auto net = single_linear({2.0, 3.0}, 1.0);
    for (auto x : {std::vector{1.0, 4.0}, std::vector{-2.0, 0.0}}) {
        auto g = input_gradient(net, x);
        CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(g[1] == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("input_gradient: zero-weight network has zero gradient") {
    auto net = make_mlp(3, {4}, 1, false);
    auto g = input_gradient(net, std::vector{1.0, 2.0, 3.0});
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("input_gradient: matches central finite differences on random triples") {
    int accepted = 0;
    std::uint64_t attempt = 0;
    const double h = 1e-4;
    while (accepted < 100) {
        rng::Rng r(rng::derive(1234, {"fdtrial", attempt++}));
        REQUIRE(attempt < 4000);
        const std::size_t in = 2 + r.index(4);
        const bool classifier = r.index(4) == 0;
        const std::size_t out = classifier ? 2 + r.index(3) : 1;
        auto net = random_mlp(r, in, {3 + r.index(4), 3 + r.index(3)}, out, classifier,
                              0.3, 0.3);
        std::vector<double> x(in);
        for (auto& v : x) v = r.uniform(-2.0, 2.0);

        const int mask_mode = static_cast<int>(r.index(3));
        MaskSet masks;
        ForwardOptions opts;
        if (mask_mode == 1) {
            masks = sample_masks(net, MaskKind::Dropout, r.next());
            opts.masks = &masks;
        } else if (mask_mode == 2) {
            masks = sample_masks(net, MaskKind::Dropconnect, r.next());
            opts.masks = &masks;
        }
        std::optional<int> target;
        if (classifier) target = static_cast<int>(r.index(out));

        // Stay away from ReLU kinks: all pre-activations comfortably nonzero.
        auto trace = forward(net, x, opts);
        bool near_kink = false;
        for (std::size_t l = 0; l + 1 < net.layer_count(); ++l)
            for (double z : trace.pre[l])
                if (std::abs(z) < 1e-2) near_kink = true;
        if (near_kink) continue;

        const auto g = input_gradient(net, x, opts, target);
        std::vector<double> g_fd(in);
        auto value = [&](const std::vector<double>& xx) {
            auto t = forward(net, xx, opts);
            return t.output[target.value_or(0)];
        };
        for (std::size_t i = 0; i < in; ++i) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            g_fd[i] = (value(xp) - value(xm)) / (2.0 * h);
        }
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < in; ++i) {
            num += (g[i] - g_fd[i]) * (g[i] - g_fd[i]);
            den += g_fd[i] * g_fd[i];
        }
        if (den < 1e-16) continue;  // degenerate direction, redraw
        CHECK(std::sqrt(num / den) < 1e-4);
        ++accepted;
    }
}

TEST_CASE("sample_masks: determinism and p=0") {
    auto net = make_mlp(4, {8, 8}, 1, false, 0.0, 0.0);
    auto ms = sample_masks(net, MaskKind::Dropout, 5);
    for (const auto& m : ms.activation_masks)
        for (double v : m) CHECK(v == 1.0);

    auto net2 = make_mlp(4, {8, 8}, 1, false, 0.4, 0.2);
    CHECK(sample_masks(net2, MaskKind::Dropout, 17) == sample_masks(net2, MaskKind::Dropout, 17));
    CHECK(sample_masks(net2, MaskKind::Dropconnect, 17) ==
          sample_masks(net2, MaskKind::Dropconnect, 17));
    CHECK_FALSE(sample_masks(net2, MaskKind::Dropout, 17) ==
                sample_masks(net2, MaskKind::Dropout, 18));
}

TEST_CASE("sample_masks: empirical drop rate concentrates") {
    auto net = make_mlp(1, {100000}, 1, false, 0.5, 0.0);
    auto ms = sample_masks(net, MaskKind::Dropout, 31);
    double dropped = 0.0;
    for (double v : ms.activation_masks[0]) dropped += (v == 0.0) ? 1.0 : 0.0;
    const double rate = dropped / 100000.0;
    CHECK(rate == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(rate - 0.5) < 0.01);
}

TEST_CASE("sample_masks: dropconnect masks only the final layer") {
    auto net = make_mlp(3, {5, 4}, 1, false, 0.0, 0.5);
    auto ms = sample_masks(net, MaskKind::Dropconnect, 3);
    CHECK(ms.activation_masks.empty());
    CHECK(ms.weight_mask.rows() == 1);
    CHECK(ms.weight_mask.cols() == 4);
}

TEST_CASE("parse_mask_kind: unknown kind rejected") {
    CHECK_THROWS_AS(parse_mask_kind("bayes"), std::invalid_argument);
    CHECK(parse_mask_kind("mcd") == MaskKind::Dropout);
    CHECK(parse_mask_kind("mcdc") == MaskKind::Dropconnect);
}

TEST_CASE("mc_ensemble: p=0 members identical, variance zero, mean exact") {
    rng::Rng r(9);
    auto net = random_mlp(r, 3, {6, 5}, 1, false, 0.0, 0.0);
    const std::vector<double> x{0.5, -0.5, 1.5};
    auto [ens, masks] = mc_ensemble(net, x, MaskKind::Dropout, 8, 77);
    CHECK(ens.predictive_variance == 0.0);
    const double det = forward(net, x).output[0];
    CHECK(ens.mean_output[0] == det);
    for (const auto& m : ens.member_outputs) CHECK(m[0] == det);
    CHECK(masks.size() == 8);
}

TEST_CASE("mc_ensemble: determinism and K validation") {
    rng::Rng r(10);
    auto net = random_mlp(r, 3, {6}, 1, false, 0.2, 0.0);
    const std::vector<double> x{1.0, 2.0, -1.0};
    auto [e1, m1] = mc_ensemble(net, x, MaskKind::Dropout, 16, 123);
    auto [e2, m2] = mc_ensemble(net, x, MaskKind::Dropout, 16, 123);
    CHECK(e1.scalar_targets == e2.scalar_targets);
    CHECK(e1.predictive_variance == e2.predictive_variance);
    CHECK(m1.size() == m2.size());
    CHECK_THROWS_AS(mc_ensemble(net, x, MaskKind::Dropout, 1, 1), std::invalid_argument);
}

TEST_CASE("mc_ensemble: two-member hand ensemble gives mean 2 variance 2") {
    // out = 2*m + 1 for mask value m on the single hidden unit, so members
    // land on {1, 3}; find a seed where the two mask draws differ.
    Matrix W1(1, 1);
    W1(0, 0) = 2.0;
    Matrix W2(1, 1);
    W2(0, 0) = 1.0;
    DenseNetwork net({{W1, {0.0}, Activation::Relu}, {W2, {1.0}, Activation::Identity}}, 0.5, 0.0);
    const std::vector<double> x{1.0};
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        auto [ens, masks] = mc_ensemble(net, x, MaskKind::Dropout, 2, seed);
        if (ens.scalar_targets[0] != ens.scalar_targets[1]) {
            CHECK(ens.mean_output[0] == doctest::Approx(2.0).epsilon(1e-12));
            CHECK(ens.predictive_variance == doctest::Approx(2.0).epsilon(1e-12));
            return;
        }
    }
    FAIL("no seed produced two distinct members");
}

TEST_CASE("mc_ensemble: s^2 equals covariance_diagonal of the scalar column") {
    rng::Rng r(11);
    auto net = random_mlp(r, 4, {7, 6}, 1, false, 0.3, 0.0);
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
    auto [ens, masks] = mc_ensemble(net, x, MaskKind::Dropout, 12, 55);
    std::vector<std::vector<double>> column;
    for (double v : ens.scalar_targets) column.push_back({v});
    const auto var = numstat::covariance_diagonal(column);
    CHECK(ens.predictive_variance == doctest::Approx(var[0]).epsilon(1e-12));
}

TEST_CASE("mc_ensemble: classification variance tracks predicted-class probability") {
    rng::Rng r(12);
    auto net = random_mlp(r, 4, {6}, 3, true, 0.2, 0.0);
    const std::vector<double> x{1.0, -1.0, 0.5, 0.0};
    auto [ens, masks] = mc_ensemble(net, x, MaskKind::Dropout, 10, 99);
    REQUIRE(ens.predicted_class >= 0);
    for (int k = 0; k < 10; ++k)
        CHECK(ens.scalar_targets[k] == ens.member_outputs[k][ens.predicted_class]);
    double sum = 0.0;
    for (double p : ens.mean_output) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("train: recovers least-squares weight on y=2x data") {
    rng::Rng r(13);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 256; ++i) {
        const double xi = r.uniform(-2.0, 2.0);
        X.push_back({xi});
        y.push_back(2.0 * xi);
    }
    // independent closed-form oracle: w* = sum(x*y) / sum(x^2)
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        sxy += X[i][0] * y[i];
        sxx += X[i][0] * X[i][0];
    }
    const double w_star = sxy / sxx;
    CHECK(w_star == doctest::Approx(2.0).epsilon(1e-12));

    auto arch = single_linear({0.0}, 0.0);
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    cfg.seed = 21;
    auto net = train(arch, X, y, cfg);
    CHECK(net.layer(0).weights(0, 0) == doctest::Approx(w_star).epsilon(1e-2));
    CHECK(std::abs(net.layer(0).weights(0, 0) - w_star) < 1e-2);
}

TEST_CASE("train: epochs=0 and empty dataset are rejected") {
    auto arch = single_linear({0.0}, 0.0);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(arch, {{1.0}}, {1.0}, cfg), std::invalid_argument);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(arch, {}, {}, cfg), std::invalid_argument);
}

TEST_CASE("train: non-finite loss aborts with an epoch diagnostic") {
    rng::Rng r(19);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 32; ++i) {
        X.push_back({r.uniform(1.0, 2.0), r.uniform(1.0, 2.0)});
        y.push_back(X.back()[0]);
    }
    auto arch = make_mlp(2, {4}, 1, false);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 1e200;  // guaranteed overflow through two layers
    cfg.seed = 3;
    try {
        train(arch, X, y, cfg);
        FAIL("expected divergence");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("train: bit-identical weights for identical seed and data") {
    rng::Rng r(14);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 64; ++i) {
        X.push_back({r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)});
        y.push_back(X.back()[0] - 0.5 * X.back()[1]);
    }
    auto arch = make_mlp(2, {6}, 1, false, 0.2, 0.0);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 77;
    auto a = train(arch, X, y, cfg);
    auto b = train(arch, X, y, cfg);
    CHECK(a == b);
    cfg.seed = 78;
    auto c = train(arch, X, y, cfg);
    CHECK_FALSE(a == c);
}

TEST_CASE("checkpoint: bit-exact round-trip") {
    rng::Rng r(15);
    auto net = random_mlp(r, 11, {50, 50}, 1, false, 0.1, 0.3);
    const std::string blob = serialize_checkpoint(net);
    auto back = deserialize_checkpoint(blob);
    CHECK(back == net);
    CHECK(serialize_checkpoint(back) == blob);

    const auto path = (std::filesystem::temp_directory_path() / "xuq_ckpt_test.xnet").string();
    save_checkpoint(net, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded == net);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: corrupt input rejected") {
    CHECK_THROWS(deserialize_checkpoint("not a checkpoint"));
    rng::Rng r(16);
    auto net = random_mlp(r, 2, {3}, 1, false, 0.0, 0.0);
    std::string blob = serialize_checkpoint(net);
    blob.pop_back();
    CHECK_THROWS(deserialize_checkpoint(blob));
}
