#include <algorithm>

#include "partfuse/fusion.hpp"

namespace partfuse {

double FusionConfig::alpha_at(int hidden_layer) const {
    if (alpha.empty()) return 0.0;
    if (alpha.size() == 1) return alpha[0];
    return alpha.at(static_cast<size_t>(hidden_layer - 1));
}

void FusionConfig::validate(int hidden_layers) const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    if (alpha.size() > 1 && static_cast<int>(alpha.size()) != hidden_layers)
        throw DomainError("alpha list has " + std::to_string(alpha.size()) + " entries, network has " +
                          std::to_string(hidden_layers) + " hidden layers");
    for (double a : alpha)
        if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alpha must lie in [0,1]");
    if (outer_iterations < 1) throw DomainError("outer_iterations must be at least 1");
    if (activation_samples < 1) throw DomainError("activation_samples must be at least 1");
}

ActivationFeatures features_activation(const DenseNetwork& net, const Matrix& data, int layer, int max_samples) {
    if (data.rows() < 1) throw DomainError("activation features need a nonempty sample");
    Index n = std::min<Index>(data.rows(), max_samples);
    Matrix h = activations(net, data.topRows(n), layer);
    return {h.transpose(), DiscreteMeasure::uniform(net.width(layer))};
}

WeightFeatures features_weight(const DenseNetwork& a, const DenseNetwork& b, const Matrix& k_above_a_to_b,
                               int layer) {
    if (layer < 1 || layer > a.hidden_layers() || a.hidden_layers() != b.hidden_layers())
        throw DomainError("features_weight: layer out of range");
    const Matrix& wa = a.weight(layer);
    const Matrix& wb = b.weight(layer);
    if (k_above_a_to_b.rows() != wb.rows() || k_above_a_to_b.cols() != wa.rows())
        throw DimensionError("kernel above does not map A's next layer onto B's");
    return {(k_above_a_to_b * wa).transpose(), wb.transpose()};
}

WeightFeatures features_weight_incoming(const DenseNetwork& a, const DenseNetwork& b, const Matrix& k_below_b_to_a,
                                        int layer) {
    if (layer < 1 || layer > a.hidden_layers() || a.hidden_layers() != b.hidden_layers())
        throw DomainError("features_weight_incoming: layer out of range");
    const Matrix& wa = a.weight(layer - 1);
    const Matrix& wb = b.weight(layer - 1);
    if (k_below_b_to_a.rows() != wa.cols() || k_below_b_to_a.cols() != wb.cols())
        throw DimensionError("kernel below does not map B's previous layer onto A's");
    WeightFeatures f;
    f.a.resize(wa.rows(), wb.cols() + 1);
    f.a << wa * k_below_b_to_a, a.bias(layer - 1);
    f.b.resize(wb.rows(), wb.cols() + 1);
    f.b << wb, b.bias(layer - 1);
    return f;
}

}  // namespace partfuse
