#include "partfuse/netcore.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace partfuse {

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double activate(Activation kind, double x) {
    switch (kind) {
        case Activation::GELU:
            return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x)));
        case Activation::RELU:
            return x > 0.0 ? x : 0.0;
        case Activation::IDENTITY:
            return x;
    }
    return x;
}

double activate_grad(Activation kind, double x) {
    switch (kind) {
        case Activation::GELU: {
            double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
            double t = std::tanh(u);
            double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        }
        case Activation::RELU:
            return x > 0.0 ? 1.0 : 0.0;
        case Activation::IDENTITY:
            return 1.0;
    }
    return 1.0;
}

std::string activation_name(Activation kind) {
    switch (kind) {
        case Activation::GELU: return "gelu";
        case Activation::RELU: return "relu";
        case Activation::IDENTITY: return "identity";
    }
    return "?";
}

Activation parse_activation(const std::string& name) {
    if (name == "gelu") return Activation::GELU;
    if (name == "relu") return Activation::RELU;
    if (name == "identity") return Activation::IDENTITY;
    throw DomainError("unknown activation '" + name + "'");
}

DenseNetwork::DenseNetwork(Activation act, std::vector<Matrix> weights, std::vector<Vector> biases)
    : act_(act), weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.size() < 2) throw DimensionError("network needs at least one hidden layer");
    if (biases_.size() != weights_.size()) throw DimensionError("one bias vector per weight matrix required");
    for (size_t l = 0; l < weights_.size(); ++l) {
        const Matrix& w = weights_[l];
        if (w.rows() < 1 || w.cols() < 1) throw DimensionError("empty weight matrix at layer " + std::to_string(l));
        if (l > 0 && w.cols() != weights_[l - 1].rows())
            throw DimensionError("weights[" + std::to_string(l) + "] has " + std::to_string(w.cols()) +
                                 " columns, expected " + std::to_string(weights_[l - 1].rows()));
        if (biases_[l].size() != w.rows())
            throw DimensionError("biases[" + std::to_string(l) + "] length mismatch");
        if (!w.allFinite() || !biases_[l].allFinite())
            throw NumericalError("non-finite parameter at layer " + std::to_string(l));
    }
}

Index DenseNetwork::width(int l) const {
    if (l < 0 || l > hidden_layers() + 1) throw DomainError("layer index out of range");
    return l == 0 ? input_dim() : weights_[static_cast<size_t>(l - 1)].rows();
}

std::vector<Index> DenseNetwork::dims() const {
    std::vector<Index> d;
    for (int l = 0; l <= hidden_layers() + 1; ++l) d.push_back(width(l));
    return d;
}

bool DenseNetwork::operator==(const DenseNetwork& o) const {
    if (act_ != o.act_ || weights_.size() != o.weights_.size()) return false;
    for (size_t l = 0; l < weights_.size(); ++l) {
        if (weights_[l].rows() != o.weights_[l].rows() || weights_[l].cols() != o.weights_[l].cols()) return false;
        if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
    }
    return true;
}

int LabeledDataset::num_classes() const {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    return k;
}

LabeledDataset LabeledDataset::subset(const IndexList& rows) const {
    LabeledDataset out;
    out.inputs = select_rows(inputs, rows);
    out.labels.reserve(rows.size());
    for (Index r : rows) out.labels.push_back(labels[static_cast<size_t>(r)]);
    return out;
}

void validate_dataset(const LabeledDataset& data, Index output_dim) {
    if (data.size() < 1) throw DataError("dataset is empty");
    if (static_cast<Index>(data.labels.size()) != data.size()) throw DataError("label count differs from sample count");
    for (int y : data.labels)
        if (y < 0 || y >= output_dim) throw DataError("label " + std::to_string(y) + " out of range");
}

namespace {

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
    Matrix z = x * w.transpose();
    z.rowwise() += b.transpose();
    return z;
}

void apply_activation(Activation kind, Matrix& z) {
    if (kind == Activation::IDENTITY) return;
    z = z.unaryExpr([kind](double v) { return activate(kind, v); });
}

}  // namespace

Matrix forward_from(const DenseNetwork& net, const Matrix& hidden, int layer) {
    const int L = net.hidden_layers();
    if (layer < 0 || layer > L) throw DomainError("layer index out of range");
    if (hidden.cols() != net.width(layer)) throw DimensionError("state width does not match layer");
    Matrix h = hidden;
    for (int l = layer; l <= L; ++l) {
        h = affine(h, net.weight(l), net.bias(l));
        if (l < L) apply_activation(net.activation(), h);
    }
    return h;
}

Matrix forward(const DenseNetwork& net, const Matrix& batch) {
    if (batch.cols() != net.input_dim())
        throw DimensionError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                             std::to_string(net.input_dim()));
    return forward_from(net, batch, 0);
}

Matrix activations(const DenseNetwork& net, const Matrix& batch, int layer) {
    if (layer < 1 || layer > net.hidden_layers()) throw DomainError("activations: hidden layer out of range");
    if (batch.cols() != net.input_dim()) throw DimensionError("batch width does not match network input");
    Matrix h = batch;
    for (int l = 0; l < layer; ++l) {
        h = affine(h, net.weight(l), net.bias(l));
        apply_activation(net.activation(), h);
    }
    return h;
}

DenseNetwork make_ensemble(const DenseNetwork& a, const DenseNetwork& b, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    if (a.hidden_layers() != b.hidden_layers()) throw DimensionError("ensemble parents differ in depth");
    if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim())
        throw DimensionError("ensemble parents differ in boundary dimensions");
    if (a.activation() != b.activation()) throw DomainError("ensemble parents use different activations");
    const int L = a.hidden_layers();
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (int l = 0; l <= L; ++l) {
        const Matrix& wa = a.weight(l);
        const Matrix& wb = b.weight(l);
        if (l == 0) {
            Matrix w(wa.rows() + wb.rows(), wa.cols());
            w << wa, wb;
            Vector bias(wa.rows() + wb.rows());
            bias << a.bias(l), b.bias(l);
            ws.push_back(std::move(w));
            bs.push_back(std::move(bias));
        } else if (l == L) {
            Matrix w(wa.rows(), wa.cols() + wb.cols());
            w << lambda * wa, (1.0 - lambda) * wb;
            ws.push_back(std::move(w));
            bs.push_back(lambda * a.bias(l) + (1.0 - lambda) * b.bias(l));
        } else {
            Matrix w = Matrix::Zero(wa.rows() + wb.rows(), wa.cols() + wb.cols());
            w.topLeftCorner(wa.rows(), wa.cols()) = wa;
            w.bottomRightCorner(wb.rows(), wb.cols()) = wb;
            Vector bias(wa.rows() + wb.rows());
            bias << a.bias(l), b.bias(l);
            ws.push_back(std::move(w));
            bs.push_back(std::move(bias));
        }
    }
    return DenseNetwork(a.activation(), std::move(ws), std::move(bs));
}

Provenance ensemble_provenance(const DenseNetwork& a, const DenseNetwork& b) {
    Provenance p;
    for (int l = 1; l <= a.hidden_layers(); ++l) {
        std::vector<Origin> layer(static_cast<size_t>(a.width(l)), Origin::A);
        layer.insert(layer.end(), static_cast<size_t>(b.width(l)), Origin::B);
        p.push_back(std::move(layer));
    }
    return p;
}

std::vector<int> predict(const DenseNetwork& net, const Matrix& batch) {
    Matrix logits = forward(net, batch);
    std::vector<int> out(static_cast<size_t>(logits.rows()));
    for (Index r = 0; r < logits.rows(); ++r) {
        Index best = 0;
        for (Index c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        out[static_cast<size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

double evaluate_accuracy(const DenseNetwork& net, const LabeledDataset& data) {
    validate_dataset(data, net.output_dim());
    if (data.dim() != net.input_dim()) throw DimensionError("dataset width does not match network input");
    std::vector<int> pred = predict(net, data.inputs);
    Index hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

DenseNetwork permute_hidden(const DenseNetwork& net, int layer, const IndexList& perm) {
    if (layer < 1 || layer > net.hidden_layers()) throw DomainError("permute_hidden: layer out of range");
    if (static_cast<Index>(perm.size()) != net.width(layer)) throw DimensionError("permutation length mismatch");
    std::set<Index> seen(perm.begin(), perm.end());
    if (static_cast<Index>(seen.size()) != net.width(layer) || *seen.begin() != 0 ||
        *seen.rbegin() != net.width(layer) - 1)
        throw DomainError("not a permutation");
    std::vector<Matrix> ws = net.weights();
    std::vector<Vector> bs = net.biases();
    auto l = static_cast<size_t>(layer);
    ws[l - 1] = select_rows(ws[l - 1], perm);
    bs[l - 1] = select(bs[l - 1], perm);
    ws[l] = select_cols(ws[l], perm);
    return DenseNetwork(net.activation(), std::move(ws), std::move(bs));
}

}  // namespace partfuse
