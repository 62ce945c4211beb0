#include "partfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace partfuse {

namespace {

std::mt19937_64 seeded_rng(std::uint64_t a, std::uint64_t b) {
    std::seed_seq ss{a, b};
    return std::mt19937_64(ss);
}

void check_data(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels) {
    if (inputs.cols() != net.input_dim()) throw DimensionError("input width does not match network");
    if (static_cast<Index>(labels.size()) != inputs.rows()) throw DimensionError("one label per sample required");
    for (int y : labels)
        if (y < 0 || y >= net.output_dim()) throw DataError("label out of range");
}

// Row-wise log-softmax.
Matrix log_softmax(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (Index r = 0; r < z.rows(); ++r) {
        double m = z.row(r).maxCoeff();
        double s = (z.row(r).array() - m).exp().sum();
        out.row(r) = z.row(r).array() - m - std::log(s);
    }
    return out;
}

long double activate_ld(Activation kind, long double x) {
    switch (kind) {
        case Activation::GELU: {
            const long double c = std::sqrt(2.0L / 3.14159265358979323846264338327950288L);
            return 0.5L * x * (1.0L + std::tanh(c * (x + 0.044715L * x * x * x)));
        }
        case Activation::RELU:
            return x > 0.0L ? x : 0.0L;
        case Activation::IDENTITY:
            return x;
    }
    return x;
}

// Loss in extended precision with one parameter shifted by delta; keeps the
// finite-difference reference well below double rounding noise.
long double shifted_loss(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels, int layer,
                         Index flat, long double delta) {
    const int L = net.hidden_layers();
    long double total = 0.0L;
    for (Index r = 0; r < inputs.rows(); ++r) {
        std::vector<long double> h(static_cast<size_t>(inputs.cols()));
        for (Index c = 0; c < inputs.cols(); ++c) h[static_cast<size_t>(c)] = inputs(r, c);
        for (int l = 0; l <= L; ++l) {
            const Matrix& w = net.weight(l);
            const Vector& b = net.bias(l);
            std::vector<long double> z(static_cast<size_t>(w.rows()));
            for (Index i = 0; i < w.rows(); ++i) {
                long double acc = b[i];
                if (l == layer && flat == w.size() + i) acc += delta;
                for (Index j = 0; j < w.cols(); ++j) {
                    long double wij = w(i, j);
                    if (l == layer && flat == j * w.rows() + i) wij += delta;
                    acc += wij * h[static_cast<size_t>(j)];
                }
                z[static_cast<size_t>(i)] = l < L ? activate_ld(net.activation(), acc) : acc;
            }
            h = std::move(z);
        }
        long double m = *std::max_element(h.begin(), h.end()), s = 0.0L;
        for (long double v : h) s += std::exp(v - m);
        total += m + std::log(s) - h[static_cast<size_t>(labels[static_cast<size_t>(r)])];
    }
    return total / static_cast<long double>(inputs.rows());
}

}  // namespace

DenseNetwork init_network(const std::vector<Index>& dims, Activation act, std::uint64_t seed) {
    if (dims.size() < 3) throw DimensionError("need input, at least one hidden, and output width");
    std::mt19937_64 rng = seeded_rng(seed, 0x1417);
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] < 1 || dims[l + 1] < 1) throw DimensionError("widths must be positive");
        double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        std::uniform_real_distribution<double> u(-limit, limit);
        Matrix w(dims[l + 1], dims[l]);
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
        ws.push_back(std::move(w));
        bs.push_back(Vector::Zero(dims[l + 1]));
    }
    return DenseNetwork(act, std::move(ws), std::move(bs));
}

double cross_entropy(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels) {
    check_data(net, inputs, labels);
    Matrix lp = log_softmax(forward(net, inputs));
    double s = 0.0;
    for (Index r = 0; r < lp.rows(); ++r) s -= lp(r, labels[static_cast<size_t>(r)]);
    return s / static_cast<double>(lp.rows());
}

Gradients loss_gradients(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels,
                         double* loss) {
    check_data(net, inputs, labels);
    const int L = net.hidden_layers();
    const auto n = static_cast<double>(inputs.rows());
    std::vector<Matrix> h{inputs}, z;
    for (int l = 0; l <= L; ++l) {
        Matrix zl = h.back() * net.weight(l).transpose();
        zl.rowwise() += net.bias(l).transpose();
        z.push_back(zl);
        if (l < L) h.push_back(zl.unaryExpr([&](double v) { return activate(net.activation(), v); }));
    }
    Matrix lp = log_softmax(z.back());
    Matrix delta = lp.array().exp();
    double total = 0.0;
    for (Index r = 0; r < delta.rows(); ++r) {
        int y = labels[static_cast<size_t>(r)];
        total -= lp(r, y);
        delta(r, y) -= 1.0;
    }
    delta /= n;
    if (loss != nullptr) *loss = total / n;

    Gradients g;
    g.weights.resize(static_cast<size_t>(L + 1));
    g.biases.resize(static_cast<size_t>(L + 1));
    for (int l = L; l >= 0; --l) {
        auto ul = static_cast<size_t>(l);
        g.weights[ul] = delta.transpose() * h[ul];
        g.biases[ul] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix back = delta * net.weight(l);
            const Matrix& zp = z[ul - 1];
            delta = back.cwiseProduct(zp.unaryExpr([&](double v) { return activate_grad(net.activation(), v); }));
        }
    }
    return g;
}

DenseNetwork fine_tune(const DenseNetwork& net, const LabeledDataset& data, const TrainConfig& cfg) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate >= 0.0) || !(cfg.epsilon > 0.0) ||
        !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw DomainError("invalid training hyperparameters");
    validate_dataset(data, net.output_dim());
    if (data.dim() != net.input_dim()) throw DimensionError("dataset width does not match network input");
    const int L = net.hidden_layers();
    std::vector<Matrix> w = net.weights(), mw, vw, mask;
    std::vector<Vector> b = net.biases(), mb, vb;
    for (int l = 0; l <= L; ++l) {
        auto ul = static_cast<size_t>(l);
        mw.push_back(Matrix::Zero(w[ul].rows(), w[ul].cols()));
        vw.push_back(mw.back());
        mb.push_back(Vector::Zero(b[ul].size()));
        vb.push_back(mb.back());
        if (cfg.freeze_zero_blocks) mask.push_back((w[ul].array() != 0.0).cast<double>().matrix());
    }
    std::mt19937_64 rng = seeded_rng(cfg.seed, 0x7a11);
    IndexList order = iota_list(data.size());
    long long step = 0;
    DenseNetwork cur = net;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < data.size(); start += cfg.batch_size) {
            Index end = std::min<Index>(data.size(), start + cfg.batch_size);
            IndexList rows(order.begin() + start, order.begin() + end);
            Matrix x = select_rows(data.inputs, rows);
            std::vector<int> y;
            for (Index r : rows) y.push_back(data.labels[static_cast<size_t>(r)]);
            double loss = 0.0;
            Gradients g = loss_gradients(cur, x, y, &loss);
            if (!std::isfinite(loss))
                throw NumericalError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step));
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (int l = 0; l <= L; ++l) {
                auto ul = static_cast<size_t>(l);
                Matrix gw = g.weights[ul];
                if (cfg.freeze_zero_blocks) gw = gw.cwiseProduct(mask[ul]);
                mw[ul] = cfg.beta1 * mw[ul] + (1.0 - cfg.beta1) * gw;
                vw[ul] = cfg.beta2 * vw[ul] + (1.0 - cfg.beta2) * gw.cwiseAbs2();
                Matrix upd = (mw[ul] / c1).array() / ((vw[ul] / c2).array().sqrt() + cfg.epsilon);
                if (cfg.freeze_zero_blocks) upd = upd.cwiseProduct(mask[ul]);
                w[ul] -= cfg.learning_rate * upd;
                mb[ul] = cfg.beta1 * mb[ul] + (1.0 - cfg.beta1) * g.biases[ul];
                vb[ul] = cfg.beta2 * vb[ul] + (1.0 - cfg.beta2) * g.biases[ul].cwiseAbs2();
                Vector ub = (mb[ul] / c1).array() / ((vb[ul] / c2).array().sqrt() + cfg.epsilon);
                b[ul] -= cfg.learning_rate * ub;
            }
            cur = DenseNetwork(net.activation(), w, b);
        }
    }
    return cur;
}

DenseNetwork train_mlp(const std::vector<Index>& dims, Activation act, const LabeledDataset& data,
                       const TrainConfig& cfg) {
    if (dims.size() < 3) throw DimensionError("need input, at least one hidden, and output width");
    if (dims.front() != data.dim())
        throw DimensionError("input width " + std::to_string(dims.front()) + " does not match data width " +
                             std::to_string(data.dim()));
    validate_dataset(data, dims.back());
    return fine_tune(init_network(dims, act, cfg.seed), data, cfg);
}

double gradient_check(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels, int coordinates,
                      std::uint64_t seed, double h) {
    Gradients g = loss_gradients(net, inputs, labels);
    if (coordinates < 1 || !(h > 0.0)) throw DomainError("gradient check needs coordinates >= 1 and h > 0");
    const int L = net.hidden_layers();
    Index total = 0;
    for (int l = 0; l <= L; ++l) total += net.weight(l).size() + net.bias(l).size();
    std::mt19937_64 rng = seeded_rng(seed, 0x9c);
    std::uniform_int_distribution<Index> pick(0, total - 1);
    double worst = 0.0;
    for (int c = 0; c < coordinates; ++c) {
        Index flat = pick(rng);
        int layer = 0;
        while (flat >= net.weight(layer).size() + net.bias(layer).size()) {
            flat -= net.weight(layer).size() + net.bias(layer).size();
            ++layer;
        }
        double numeric = static_cast<double>((shifted_loss(net, inputs, labels, layer, flat, h) -
                                              shifted_loss(net, inputs, labels, layer, flat, -h)) /
                                             (2.0L * h));
        auto ul = static_cast<size_t>(layer);
        double analytic = flat < g.weights[ul].size() ? g.weights[ul].data()[flat] : g.biases[ul][flat - g.weights[ul].size()];
        if (!std::isfinite(analytic) || !std::isfinite(numeric)) throw NumericalError("non-finite gradient");
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-7});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
    return worst;
}

}  // namespace partfuse
