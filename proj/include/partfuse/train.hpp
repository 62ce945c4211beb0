#pragma once

#include <cstdint>
#include <vector>

#include "partfuse/netcore.hpp"

namespace partfuse {

struct TrainConfig {
    int epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 128;
    std::uint64_t seed = 0;
    // Keep entries that are exactly zero at the start at zero.
    bool freeze_zero_blocks = false;
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
DenseNetwork init_network(const std::vector<Index>& dims, Activation act, std::uint64_t seed);

// Mean softmax cross-entropy.
double cross_entropy(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels);
Gradients loss_gradients(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels,
                         double* loss = nullptr);

DenseNetwork train_mlp(const std::vector<Index>& dims, Activation act, const LabeledDataset& data,
                       const TrainConfig& cfg);
DenseNetwork fine_tune(const DenseNetwork& net, const LabeledDataset& data, const TrainConfig& cfg);

// Largest relative error between backprop and central differences over
// `coordinates` sampled parameters.
double gradient_check(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels,
                      int coordinates = 20, std::uint64_t seed = 0, double h = 1e-6);

}  // namespace partfuse
