#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partfuse/error.hpp"
#include "partfuse/linalg.hpp"

namespace partfuse {

enum class Activation : std::uint8_t { GELU = 0, RELU = 1, IDENTITY = 2 };

double activate(Activation kind, double x);
double activate_grad(Activation kind, double x);
std::string activation_name(Activation kind);
Activation parse_activation(const std::string& name);

// weights[l] maps layer l (n_l wide) to layer l+1, so it is n_{l+1} x n_l.
// The activation runs after every layer except the last.
class DenseNetwork {
public:
    DenseNetwork(Activation act, std::vector<Matrix> weights, std::vector<Vector> biases);

    Activation activation() const { return act_; }
    // Number of hidden layers L.
    int hidden_layers() const { return static_cast<int>(weights_.size()) - 1; }
    Index input_dim() const { return weights_.front().cols(); }
    Index output_dim() const { return weights_.back().rows(); }
    // n_l for l in 0..L+1.
    Index width(int l) const;
    std::vector<Index> dims() const;

    const Matrix& weight(int l) const { return weights_.at(static_cast<size_t>(l)); }
    const Vector& bias(int l) const { return biases_.at(static_cast<size_t>(l)); }
    const std::vector<Matrix>& weights() const { return weights_; }
    const std::vector<Vector>& biases() const { return biases_; }

    bool operator==(const DenseNetwork& other) const;

private:
    Activation act_;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

struct LabeledDataset {
    Matrix inputs;            // N x n_0
    std::vector<int> labels;  // N

    Index size() const { return inputs.rows(); }
    Index dim() const { return inputs.cols(); }
    int num_classes() const;
    LabeledDataset subset(const IndexList& rows) const;
};

void validate_dataset(const LabeledDataset& data, Index output_dim);

// batch is N x n_0; returns N x n_{L+1} logits.
Matrix forward(const DenseNetwork& net, const Matrix& batch);

// Post-activation state of hidden layer l (1..L), N x n_l.
Matrix activations(const DenseNetwork& net, const Matrix& batch, int layer);

// Continue a forward pass from the post-activation state of hidden layer l.
Matrix forward_from(const DenseNetwork& net, const Matrix& hidden, int layer);

DenseNetwork make_ensemble(const DenseNetwork& a, const DenseNetwork& b, double lambda);

// Which parent each hidden neuron of make_ensemble(a, b, .) came from.
enum class Origin : std::uint8_t { A, B };
using Provenance = std::vector<std::vector<Origin>>;  // per hidden layer 1..L, index l-1
Provenance ensemble_provenance(const DenseNetwork& a, const DenseNetwork& b);

std::vector<int> predict(const DenseNetwork& net, const Matrix& batch);
double evaluate_accuracy(const DenseNetwork& net, const LabeledDataset& data);

void save(const DenseNetwork& net, const std::string& path);
DenseNetwork load(const std::string& path);
std::string serialize(const DenseNetwork& net);
DenseNetwork deserialize(const std::string& bytes);

// Reorder hidden layer l (1..L) so that new neuron k is old neuron perm[k].
DenseNetwork permute_hidden(const DenseNetwork& net, int layer, const IndexList& perm);

}  // namespace partfuse
