#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "masolab/errors.hpp"
#include "masolab/io.hpp"
#include "masolab/train.hpp"

using namespace masolab;
using fixtures::max_abs_error;

namespace {

Dataset labelled_points(CounterRng& rng, std::size_t n, std::size_t dim, std::size_t classes) {
    Dataset d;
    d.classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        d.inputs.push_back(fixtures::random_vector(rng, dim, -2, 2));
        d.labels.push_back(i % classes);
    }
    return d;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Central differences of the batch loss with respect to every parameter entry,
// compared with backward(). Entries are skipped only if a perturbation moves
// an input across a kink (the selection codes change).
struct FdReport {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst = 0.0;
};

FdReport fd_check(Network net, const Dataset& data, const TrainConfig& cfg, double h = 1e-6,
                  double rel = 1e-4, bool track_codes = true) {
    const auto batch = iota(data.size());
    const auto grads = backward(net, data, batch, cfg).grads;
    auto params = parameters(net);
    REQUIRE(grads.tensors.size() == params.size());
    const auto codes = [&](const Network& n) {
        std::vector<std::vector<SelectionCode>> all;
        if (!track_codes) return all;
        for (const auto& x : data.inputs) all.push_back(forward(n, x).codes);
        return all;
    };
    const auto base_codes = codes(net);
    FdReport rep;
    for (std::size_t t = 0; t < params.size(); ++t) {
        REQUIRE(grads.tensors[t].size() == params[t].values.size());
        for (std::size_t i = 0; i < params[t].values.size(); ++i) {
            double& w = params[t].values[i];
            const double w0 = w;
            w = w0 + h;
            refresh_derived(net);
            const bool same_plus = codes(net) == base_codes;
            const double lp = backward(net, data, batch, cfg).loss;
            w = w0 - h;
            refresh_derived(net);
            const bool same_minus = codes(net) == base_codes;
            const double lm = backward(net, data, batch, cfg).loss;
            w = w0;
            refresh_derived(net);
            if (!same_plus || !same_minus) continue;
            const double fd = (lp - lm) / (2 * h);
            const double g = grads.tensors[t][i];
            const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
            rep.worst = std::max(rep.worst, err);
            ++rep.checked;
            if (err > rel) ++rep.failed;
        }
    }
    return rep;
}

}  // namespace

TEST_CASE("softmax") {
    CHECK(softmax(DenseVector{0, 0}) == DenseVector{0.5, 0.5});
    const auto big = softmax(DenseVector{1000, 0});
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);
    const DenseVector v{0.3, -1.2, 2.5};
    CHECK(max_abs_error(softmax(v), softmax(DenseVector{v[0] + 7, v[1] + 7, v[2] + 7})) <= 1e-15);
    CHECK(log_sum_exp(DenseVector{1000, 1000}) == doctest::Approx(1000 + std::log(2.0)));
}

TEST_CASE("cross entropy") {
    CHECK(cross_entropy(DenseVector{0, 0, 0, 0}, 2) == doctest::Approx(1.386294).epsilon(1e-6));
    CHECK(cross_entropy(DenseVector{0, 1e4, 0}, 1) == doctest::Approx(0.0));
    CounterRng rng(1);
    for (int t = 0; t < 100; ++t) {
        const auto z = fixtures::random_vector(rng, 5, -5, 5);
        const auto y = rng.below(5);
        CHECK(std::abs(cross_entropy(z, y) + std::log(softmax(z)[y])) <= 1e-12);
    }
    CHECK_THROWS_AS(cross_entropy(DenseVector{0, 0}, 2), DomainError);
}

TEST_CASE("softmax jacobian") {
    const DenseVector p{0.2, 0.3, 0.5};
    const auto J = softmax_jacobian(p);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(J(i, j) == doctest::Approx((i == j ? p[i] : 0.0) - p[i] * p[j]));
}

TEST_CASE("orthogonality penalty") {
    CHECK(ortho_penalty(DenseMatrix{{1, 0}, {0, 1}}) == 0.0);
    CHECK(ortho_penalty(DenseMatrix{{1, 0}, {1, 0}}) == 2.0);
    CHECK(max_offdiagonal_gram(DenseMatrix{{1, 0}, {1, 0}}) == 1.0);
    CounterRng rng(2);
    auto W = fixtures::random_matrix(rng, 4, 3);
    const auto G = ortho_penalty_gradient(W);
    const double h = 1e-6;
    for (std::size_t i = 0; i < W.rows(); ++i)
        for (std::size_t j = 0; j < W.cols(); ++j) {
            const double w0 = W(i, j);
            W(i, j) = w0 + h;
            const double p = ortho_penalty(W);
            W(i, j) = w0 - h;
            const double m = ortho_penalty(W);
            W(i, j) = w0;
            CHECK(std::abs((p - m) / (2 * h) - G(i, j)) <= 1e-5 * std::max(1.0, std::abs(G(i, j))));
        }
}

TEST_CASE("batch norm forward") {
    auto s = make_batchnorm_state(1);
    s.mode = BatchNormMode::Train;
    const std::vector<DenseVector> batch{{-1}, {1}};
    const auto out = batchnorm_forward(s, batch);
    CHECK(out[0][0] == doctest::Approx(-0.999995).epsilon(1e-9));
    CHECK(out[1][0] == doctest::Approx(0.999995).epsilon(1e-9));
    CHECK(s.running_var[0] == doctest::Approx(0.9 + 0.1 * 1.0));

    auto z = make_batchnorm_state(2);
    z.mode = BatchNormMode::Train;
    z.gamma = {0, 0};
    z.zeta = {3, -1};
    const auto c = batchnorm_forward(z, std::vector<DenseVector>{{1, 2}, {5, -7}, {0, 0}});
    for (const auto& v : c) CHECK(v == DenseVector{3, -1});

    auto inf = make_batchnorm_state(2);
    inf.running_mean = {1, 2};
    inf.running_var = {4, 9};
    const std::vector<DenseVector> one{{3, 5}};
    const auto a = batchnorm_forward(inf, one);
    const auto b = batchnorm_forward(inf, one);
    CHECK(a == b);
    CHECK(inf.running_mean == DenseVector{1, 2});

    auto single = make_batchnorm_state(1);
    single.mode = BatchNormMode::Train;
    CHECK_THROWS_AS(batchnorm_forward(single, std::vector<DenseVector>{{1}}), DomainError);
}

TEST_CASE("batch norm folding") {
    auto s = make_batchnorm_state(1, 1e-5);
    s.running_var = {1.0 - 1e-5};
    const auto f = fold_batchnorm(s);
    CHECK(f.scale[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.shift[0] == 0.0);

    auto net = fixtures::toy_fc_bn(3);
    CounterRng rng(3);
    for (auto& layer : net.layers) {
        if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            for (auto& v : bn->state.gamma) v = rng.uniform(0.5, 2);
            for (auto& v : bn->state.zeta) v = rng.uniform(-1, 1);
            for (auto& v : bn->state.running_mean) v = rng.uniform(-1, 1);
            for (auto& v : bn->state.running_var) v = rng.uniform(0.2, 3);
        }
    }
    const auto folded = fold_batchnorms(net);
    for (const auto& layer : folded.layers) CHECK_FALSE(std::holds_alternative<BatchNormLayer>(layer));
    for (int t = 0; t < 100; ++t) {
        const auto x = fixtures::random_vector(rng, 2, -3, 3);
        const auto a = predict_logits(net, x);
        const auto b = predict_logits(folded, x);
        CHECK(max_abs_error(a, b) <= 1e-9 * std::max(1.0, max_abs(a)));
        const auto tr = forward(folded, x);
        const auto d = decompose(folded, tr);
        CHECK(max_abs_error(tr.logits, add(gemv(d.A, x), d.b)) <= 1e-9);
        const auto tr0 = forward(net, x);
        const auto d0 = decompose(net, tr0);
        CHECK(max_abs_error(tr0.logits, add(gemv(d0.A, x), d0.b)) <= 1e-9);
    }
    auto training = net;
    set_batchnorm_mode(training, BatchNormMode::Train);
    CHECK_THROWS_AS(fold_batchnorms(training), DomainError);
}

TEST_CASE("parameter gradients match finite differences") {
    CounterRng rng(4);
    TrainConfig cfg;
    SUBCASE("2-3-2 ReLU net, cross entropy") {
        const std::vector<LayerPlan> plan{DensePlan{3}, ActivationPlan{}};
        const auto data = labelled_points(rng, 6, 2, 2);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto net = make_network({2, 1, 1}, plan, 2, seed, {1.0, 0.5, false});
            const auto r = fd_check(net, data, cfg);
            CHECK(r.failed == 0);
            CHECK(r.checked > 0);
        }
    }
    SUBCASE("mean squared error with orthogonality penalty") {
        const std::vector<LayerPlan> plan{DensePlan{4}, ActivationPlan{ActivationKind::LeakyReLU, 0.1}};
        auto data = labelled_points(rng, 5, 3, 2);
        for (std::size_t i = 0; i < data.size(); ++i) data.targets.push_back(fixtures::random_vector(rng, 2));
        cfg.loss = LossKind::MeanSquared;
        cfg.lambda_ortho = 0.7;
        const auto net = make_network({3, 1, 1}, plan, 2, 9, {1.0, 0.5, false});
        const auto r = fd_check(net, data, cfg);
        CHECK(r.failed == 0);
    }
    SUBCASE("train-mode batch norm") {
        const std::vector<LayerPlan> plan{DensePlan{3}, BatchNormPlan{}, ActivationPlan{}};
        auto net = make_network({2, 1, 1}, plan, 3, 10, {1.0, 0.5, false});
        set_batchnorm_mode(net, BatchNormMode::Train);
        auto& bn = std::get<BatchNormLayer>(net.layers[1]).state;
        bn.gamma = {1.3, 0.7, -0.4};
        bn.zeta = {0.2, -0.3, 0.1};
        const auto data = labelled_points(rng, 6, 2, 3);
        const auto r = fd_check(net, data, cfg, 1e-6, 1e-4, false);
        CHECK(r.failed == 0);
    }
    SUBCASE("conv, max pool and residual layers") {
        const std::vector<LayerPlan> cnn{ConvPlan{2, 2, Padding::Same, {1, 1}}, ActivationPlan{}, PoolPlan{},
                                         DensePlan{3}, ActivationPlan{ActivationKind::Abs}};
        const auto net = make_network({1, 4, 4}, cnn, 2, 11, {1.0, 0.3, false});
        const auto r = fd_check(net, labelled_points(rng, 4, 16, 2), cfg);
        CHECK(r.failed == 0);
        const std::vector<LayerPlan> res{ResidualPlan{ActivationKind::ReLU, 0.0, SkipKind::Dense},
                                         ResidualPlan{ActivationKind::ReLU, 0.0, SkipKind::Identity}};
        const auto rn = make_network({3, 1, 1}, res, 2, 12, {1.0, 0.3, false});
        const auto r2 = fd_check(rn, labelled_points(rng, 4, 3, 2), cfg);
        CHECK(r2.failed == 0);
    }
}

TEST_CASE("linear model with MSE has the least-squares gradient") {
    CounterRng rng(5);
    Network net;
    net.input_shape = {3, 1, 1};
    net.W_final = fixtures::random_matrix(rng, 2, 3);
    net.b_final = fixtures::random_vector(rng, 2);
    Dataset d;
    d.classes = 2;
    for (int i = 0; i < 7; ++i) {
        d.inputs.push_back(fixtures::random_vector(rng, 3));
        d.targets.push_back(fixtures::random_vector(rng, 2));
        d.labels.push_back(0);
    }
    TrainConfig cfg;
    cfg.loss = LossKind::MeanSquared;
    const auto r = backward(net, d, iota(7), cfg);
    DenseMatrix gW(2, 3);
    DenseVector gb(2, 0.0);
    double loss = 0.0;
    for (std::size_t n = 0; n < 7; ++n) {
        const auto e = subtract(add(gemv(net.W_final, d.inputs[n]), net.b_final), d.targets[n]);
        loss += norm2_squared(e) / 7.0;
        for (std::size_t i = 0; i < 2; ++i) {
            gb[i] += 2.0 * e[i] / 7.0;
            for (std::size_t j = 0; j < 3; ++j) gW(i, j) += 2.0 * e[i] * d.inputs[n][j] / 7.0;
        }
    }
    CHECK(r.loss == doctest::Approx(loss).epsilon(1e-13));
    REQUIRE(r.grads.tensors.size() == 2);
    CHECK(max_abs_error(r.grads.tensors[0], gW.data()) <= 1e-14);
    CHECK(max_abs_error(r.grads.tensors[1], gb) <= 1e-14);
}

TEST_CASE("duplicated example doubles its contribution") {
    CounterRng rng(6);
    const auto net = fixtures::toy_fc(6);
    const auto data = labelled_points(rng, 3, 2, 4);
    TrainConfig cfg;
    const std::vector<std::size_t> dup{0, 0, 1};
    const auto r = backward(net, data, dup, cfg);
    const auto a = backward(net, data, std::vector<std::size_t>{0}, cfg);
    const auto b = backward(net, data, std::vector<std::size_t>{1}, cfg);
    for (std::size_t t = 0; t < r.grads.tensors.size(); ++t)
        for (std::size_t i = 0; i < r.grads.tensors[t].size(); ++i)
            CHECK(3.0 * r.grads.tensors[t][i] ==
                  doctest::Approx(2.0 * a.grads.tensors[t][i] + b.grads.tensors[t][i]).epsilon(1e-12));
}

TEST_CASE("optimizer steps") {
    auto net = fixtures::toy_fc(7);
    auto params = parameters(net);
    const auto before = fingerprint(net);
    Gradients zero;
    for (const auto& p : params) zero.tensors.emplace_back(p.values.size(), 0.0);
    sgd_step(params, zero, 0.1);
    CHECK(fingerprint(net) == before);
    TrainConfig cfg;
    AdamState st;
    adam_step(params, zero, cfg, 0.1, st);
    CHECK(fingerprint(net) == before);

    Gradients g = zero;
    CounterRng rng(7);
    for (auto& t : g.tensors)
        for (auto& v : t) v = rng.uniform(-1, 1) * std::pow(10.0, rng.uniform(-3, 3));
    std::vector<std::vector<double>> old;
    for (const auto& p : params) old.emplace_back(p.values.begin(), p.values.end());

    auto sgd_net = net;
    auto sgd_params = parameters(sgd_net);
    sgd_step(sgd_params, g, 1.0);
    for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t i = 0; i < old[t].size(); ++i) CHECK(sgd_params[t].values[i] == old[t][i] - g.tensors[t][i]);

    AdamState fresh;
    adam_step(params, g, cfg, 0.01, fresh);
    CHECK(fresh.step == 1);
    for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t i = 0; i < old[t].size(); ++i)
            CHECK(std::abs(old[t][i] - params[t].values[i]) == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("training") {
    SUBCASE("config validation") {
        TrainConfig bad;
        bad.lr = 0.0;
        CHECK_THROWS_AS(validate(bad), DomainError);
        bad = {};
        bad.batch_size = 0;
        CHECK_THROWS_AS(validate(bad), DomainError);
        bad = {};
        bad.lambda_ortho = -1;
        CHECK_THROWS_AS(validate(bad), DomainError);
    }
    SUBCASE("full-batch gradient descent decreases the loss") {
        const auto data = gen_synthetic_2d({2, 50, Layout2D::Blobs, 1});
        const std::vector<LayerPlan> plan{DensePlan{8}, ActivationPlan{}};
        auto net = make_network({2, 1, 1}, plan, 2, 2);
        TrainConfig cfg;
        cfg.optimizer = Optimizer::Sgd;
        cfg.lr = 0.01;
        cfg.epochs = 5;
        cfg.batch_size = data.size();
        const auto h = train(net, data, cfg);
        REQUIRE(h.epochs.size() == 5);
        for (std::size_t e = 1; e < 5; ++e) CHECK(h.epochs[e].loss <= h.epochs[e - 1].loss);
    }
    SUBCASE("deterministic per seed") {
        const auto data = gen_synthetic_2d({4, 40, Layout2D::RingsAndBlobs, 3});
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.seed = 5;
        auto a = fixtures::toy_fc_bn(4);
        auto b = fixtures::toy_fc_bn(4);
        train(a, data, cfg);
        train(b, data, cfg);
        CHECK(fingerprint(a) == fingerprint(b));
        cfg.seed = 6;
        auto c = fixtures::toy_fc_bn(4);
        train(c, data, cfg);
        CHECK(fingerprint(c) != fingerprint(a));
    }
    SUBCASE("single-class data is flagged") {
        auto data = gen_synthetic_2d({2, 10, Layout2D::Blobs, 1});
        for (auto& l : data.labels) l = 0;
        auto net = fixtures::toy_fc(1);
        TrainConfig cfg;
        cfg.epochs = 1;
        CHECK(train(net, data, cfg).single_class);
    }
    SUBCASE("evaluate") {
        const auto data = gen_synthetic_2d({4, 5, Layout2D::RingsAndBlobs, 1});
        const auto ev = evaluate(fixtures::toy_fc(1), data, LossKind::CrossEntropy);
        CHECK(ev.accuracy >= 0.0);
        CHECK(ev.accuracy <= 1.0);
        CHECK(ev.loss > 0.0);
    }
}
