#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "partfuse/data.hpp"
#include "partfuse/fusion.hpp"
#include "partfuse/train.hpp"

using namespace partfuse;

namespace {

double naive_loss(const DenseNetwork& net, const Matrix& x, const std::vector<int>& y) {
    Matrix z = oracle::naive_forward(net, x);
    double s = 0.0;
    for (Index r = 0; r < z.rows(); ++r) {
        double lse = 0.0;
        for (Index c = 0; c < z.cols(); ++c) lse += std::exp(z(r, c));
        s += std::log(lse) - z(r, y[static_cast<size_t>(r)]);
    }
    return s / static_cast<double>(z.rows());
}

std::vector<int> random_labels(Index n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, k - 1);
    std::vector<int> y;
    for (Index i = 0; i < n; ++i) y.push_back(d(rng));
    return y;
}

Index nonzero_weights(const DenseNetwork& net) {
    Index c = 0;
    for (const auto& w : net.weights()) c += static_cast<Index>((w.array() != 0.0).count());
    return c;
}

}  // namespace

TEST_CASE("cross entropy against a scalar oracle") {
    Matrix w0 = Matrix::Zero(3, 2), w1 = Matrix::Zero(4, 3);
    DenseNetwork zero(Activation::RELU, {w0, w1}, {Vector::Zero(3), Vector::Zero(4)});
    CHECK(cross_entropy(zero, Matrix::Ones(5, 2), {0, 1, 2, 3, 0}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    auto rng = oracle::rng_for(1);
    DenseNetwork net = oracle::random_net({4, 6, 3}, Activation::GELU, rng);
    Matrix x = oracle::gaussian(7, 4, rng);
    auto y = random_labels(7, 3, rng);
    double loss = 0.0;
    loss_gradients(net, x, y, &loss);
    CHECK(loss == doctest::Approx(naive_loss(net, x, y)).epsilon(1e-12));
    CHECK(cross_entropy(net, x, y) == doctest::Approx(loss).epsilon(1e-14));
    CHECK_THROWS_AS(cross_entropy(net, x, {0, 1}), DimensionError);
    CHECK_THROWS_AS(cross_entropy(net, Matrix::Zero(7, 3), y), DimensionError);
}

TEST_CASE("backprop matches scalar finite differences") {
    auto rng = oracle::rng_for(2);
    DenseNetwork net = oracle::random_net({3, 5, 4, 3}, Activation::GELU, rng);
    Matrix x = oracle::gaussian(6, 3, rng);
    auto y = random_labels(6, 3, rng);
    Gradients g = loss_gradients(net, x, y);
    const double h = 1e-5;
    for (int l = 0; l <= net.hidden_layers(); ++l) {
        auto ul = static_cast<size_t>(l);
        for (Index r = 0; r < net.weight(l).rows(); ++r)
            for (Index c = 0; c < net.weight(l).cols(); ++c) {
                auto ws = net.weights();
                ws[ul](r, c) += h;
                double up = naive_loss(DenseNetwork(net.activation(), ws, net.biases()), x, y);
                ws[ul](r, c) -= 2 * h;
                double down = naive_loss(DenseNetwork(net.activation(), ws, net.biases()), x, y);
                CHECK(g.weights[ul](r, c) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1e-3));
            }
        for (Index r = 0; r < net.bias(l).size(); ++r) {
            auto bs = net.biases();
            bs[ul](r) += h;
            double up = naive_loss(DenseNetwork(net.activation(), net.weights(), bs), x, y);
            bs[ul](r) -= 2 * h;
            double down = naive_loss(DenseNetwork(net.activation(), net.weights(), bs), x, y);
            CHECK(g.biases[ul](r) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1e-3));
        }
    }
}

TEST_CASE("gradient check on linear and gelu nets") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto rng = oracle::rng_for(3, s);
        Matrix x = oracle::gaussian(8, 4, rng);
        auto y = random_labels(8, 3, rng);
        DenseNetwork lin = oracle::random_net({4, 5, 5, 3}, Activation::IDENTITY, rng);
        CHECK(gradient_check(lin, x, y, 20, s) <= 1e-8);
        DenseNetwork gelu = oracle::random_net({4, 6, 5, 3}, Activation::GELU, rng);
        CHECK(gradient_check(gelu, x, y, 20, s) <= 1e-4);
    }
}

TEST_CASE("zero inputs give finite gradients") {
    auto rng = oracle::rng_for(4);
    DenseNetwork net = oracle::random_net({4, 6, 3}, Activation::GELU, rng);
    Matrix x = Matrix::Zero(5, 4);
    std::vector<int> y{0, 1, 2, 0, 1};
    double loss = 0.0;
    Gradients g = loss_gradients(net, x, y, &loss);
    CHECK(std::isfinite(loss));
    for (const auto& w : g.weights) CHECK(w.allFinite());
    for (const auto& b : g.biases) CHECK(b.allFinite());
    CHECK(std::isfinite(gradient_check(net, x, y)));
}

TEST_CASE("initialisation") {
    DenseNetwork a = init_network({4, 10, 3}, Activation::GELU, 7);
    CHECK(a == init_network({4, 10, 3}, Activation::GELU, 7));
    CHECK_FALSE(a == init_network({4, 10, 3}, Activation::GELU, 8));
    CHECK(a.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 14.0));
    CHECK(a.weight(1).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 13.0));
    CHECK(a.bias(0).isZero(0.0));
    CHECK_THROWS_AS(init_network({4, 3}, Activation::GELU, 0), DimensionError);
}

TEST_CASE("zero epochs return the initialisation") {
    LabeledDataset d = synthetic_blobs(3, 10, 4, 1.0, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 5;
    CHECK(train_mlp({4, 8, 3}, Activation::GELU, d, cfg) == init_network({4, 8, 3}, Activation::GELU, 5));
}

TEST_CASE("training is deterministic and learns blobs") {
    LabeledDataset d = synthetic_blobs(2, 50, 5, 0.1, 2);
    TrainConfig cfg;
    cfg.seed = 3;
    DenseNetwork a = train_mlp({5, 16, 2}, Activation::GELU, d, cfg);
    DenseNetwork b = train_mlp({5, 16, 2}, Activation::GELU, d, cfg);
    CHECK(a == b);
    CHECK(evaluate_accuracy(a, d) >= 0.99);
    CHECK(cross_entropy(a, d.inputs, d.labels) < cross_entropy(init_network({5, 16, 2}, Activation::GELU, 3), d.inputs, d.labels));
    cfg.seed = 4;
    CHECK_FALSE(train_mlp({5, 16, 2}, Activation::GELU, d, cfg) == a);
}

TEST_CASE("zero learning rate leaves the network unchanged") {
    auto rng = oracle::rng_for(6);
    DenseNetwork net = oracle::random_net({4, 6, 3}, Activation::GELU, rng);
    LabeledDataset d = synthetic_blobs(3, 20, 4, 1.0, 6);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    CHECK(fine_tune(net, d, cfg) == net);
}

TEST_CASE("frozen zero blocks stay exactly zero") {
    auto rng = oracle::rng_for(7);
    DenseNetwork a = oracle::random_net({4, 8, 8, 3}, Activation::GELU, rng);
    DenseNetwork b = oracle::random_net({4, 8, 8, 3}, Activation::GELU, rng);
    FusionConfig fc;
    fc.alpha = {0.5};
    DenseNetwork f = partial_fuse(a, b, fc, Matrix());
    LabeledDataset d = synthetic_blobs(3, 30, 4, 1.0, 7);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.freeze_zero_blocks = true;
    DenseNetwork t = fine_tune(f, d, cfg);
    CHECK(nonzero_weights(t) == nonzero_weights(f));
    for (int l = 0; l <= f.hidden_layers(); ++l)
        for (Index i = 0; i < f.weight(l).size(); ++i) {
            double before = f.weight(l).data()[i], after = t.weight(l).data()[i];
            if (before == 0.0) CHECK(after == 0.0);
            else CHECK(after != before);
        }
    cfg.freeze_zero_blocks = false;
    CHECK(nonzero_weights(fine_tune(f, d, cfg)) > nonzero_weights(f));
}

TEST_CASE("bad hyperparameters and non-finite losses") {
    LabeledDataset d = synthetic_blobs(3, 10, 4, 1.0, 1);
    DenseNetwork net = init_network({4, 5, 3}, Activation::GELU, 0);
    TrainConfig cfg;
    cfg.epochs = -1;
    CHECK_THROWS_AS(fine_tune(net, d, cfg), DomainError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(fine_tune(net, d, cfg), DomainError);
    cfg = {};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(fine_tune(net, d, cfg), DomainError);
    cfg = {};
    CHECK_THROWS_AS(train_mlp({5, 5, 3}, Activation::GELU, d, cfg), DimensionError);
    CHECK_THROWS_AS(train_mlp({4, 5, 2}, Activation::GELU, d, cfg), DataError);
    LabeledDataset bad = d;
    bad.inputs(0, 0) = std::numeric_limits<double>::quiet_NaN();
    cfg.epochs = 1;
    CHECK_THROWS_AS(fine_tune(net, bad, cfg), NumericalError);
}
