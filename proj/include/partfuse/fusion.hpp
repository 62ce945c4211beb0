#pragma once

#include <cstdint>
#include <vector>

#include "partfuse/netcore.hpp"
#include "partfuse/transport.hpp"

namespace partfuse {

enum class FeatureKind { ACTIVATIONS, WEIGHTS };
enum class AlignKind { GREEDY, FIXED_POINT };
// Per-step cost for weight features: negative inner-product gain (monotone
// in the global objective) or scaled squared distances.
enum class CostForm { INNER_PRODUCT, SQUARED };
enum class FixedPointInit { PRODUCT, GREEDY };
// Incoming: sweep from the input using the already fixed layer below.
// Outgoing: sweep from the output using the already fixed layer above.
enum class GreedyDirection { INCOMING, OUTGOING };

struct FusionConfig {
    double lambda = 0.5;
    // One entry per hidden layer, or a single entry broadcast to all.
    std::vector<double> alpha{0.0};
    FeatureKind features = FeatureKind::WEIGHTS;
    AlignKind align = AlignKind::FIXED_POINT;
    int outer_iterations = 10;
    int activation_samples = 1000;
    CostForm cost_form = CostForm::INNER_PRODUCT;
    FixedPointInit init = FixedPointInit::PRODUCT;
    GreedyDirection greedy_direction = GreedyDirection::INCOMING;

    double alpha_at(int hidden_layer) const;  // 1-based
    void validate(int hidden_layers) const;
};

struct Alignment {
    // couplings[l-1] couples hidden layer l of A (rows) with B (columns).
    std::vector<PartialCoupling> couplings;
    // Global inner-product objective after initialisation and after every
    // layer step (fixed-point only).
    std::vector<double> objective_trace;
    int sweeps = 0;
    bool converged = false;
};

// ---- features ----

// Activation columns of hidden layer l over the first activation_samples rows.
struct ActivationFeatures {
    Matrix features;  // n_l x N
    DiscreteMeasure masses;
};
ActivationFeatures features_activation(const DenseNetwork& net, const Matrix& data, int layer,
                                       int max_samples = 1000);

struct WeightFeatures {
    Matrix a;  // n_l^A x d
    Matrix b;  // n_l^B x d
};
// Outgoing weights mapped into B's world: rows of (K_{l+1}^{A->B} W_l^A)^T and W_l^B^T.
WeightFeatures features_weight(const DenseNetwork& a, const DenseNetwork& b, const Matrix& k_above_a_to_b,
                               int layer);
// Incoming weights with A's previous layer mapped into B's world, bias appended.
WeightFeatures features_weight_incoming(const DenseNetwork& a, const DenseNetwork& b,
                                        const Matrix& k_below_b_to_a, int layer);

// ---- alignment ----

// Sub-stochastic transfer kernel pi^T diag(mu)^-1 used by the alignment objective.
Matrix transfer_kernel(const PartialCoupling& pi);

// Sum over l = 0..L of (1/n_l^A) <K_{l+1} [W_l^A K_l^T | b_l^A], [W_l^B | b_l^B]>_F.
double alignment_objective(const DenseNetwork& a, const DenseNetwork& b,
                           const std::vector<PartialCoupling>& couplings);

Alignment greedy_align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg,
                       const Matrix& data = Matrix());
Alignment fixed_point_align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg);
Alignment align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg,
                const Matrix& data = Matrix());

// ---- full fusion ----

// Fused layer weights from the given hidden kernels (K^{A->B}, K^{B->A}) and identity boundaries.
DenseNetwork fuse_with_kernels(const DenseNetwork& a, const DenseNetwork& b, const std::vector<KernelPair>& kernels,
                               double lambda);
DenseNetwork ot_fuse(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg,
                     const Matrix& data = Matrix());

// ---- partial fusion ----

struct LayerPlan {
    IndexList isolated_a, fused_a, fused_b, isolated_b;
    KernelPair kernels;  // a_to_b: |F^B| x |F^A|, b_to_a: |F^A| x |F^B|

    Index width() const { return static_cast<Index>(isolated_a.size() + fused_b.size() + isolated_b.size()); }
};

struct SplitDirective {
    char side = 'A';
    int layer = 0;
    Index neuron = 0;     // keeps the fused share
    Index new_index = 0;  // appended isolated share
    double kappa = 0.0;
    double mass = 0.0;
};

struct MatchPlan {
    std::vector<LayerPlan> layers;  // 0..L+1; boundaries fully fused with identity kernels
    std::vector<SplitDirective> splits;
};

void validate_plan(const LayerPlan& p, Index n_a, Index n_b);

// Neuron i of hidden layer l becomes two: index i keeps incoming weights and
// bias scaled by kappa/mass, a new last neuron gets (mass-kappa)/mass; both
// keep the outgoing weights.
DenseNetwork split_partial_neuron(const DenseNetwork& net, int layer, Index neuron, double kappa, double mass);

struct PreparedFusion {
    DenseNetwork a;
    DenseNetwork b;
    MatchPlan plan;
};
constexpr double kFractionalThreshold = 1e-9;
PreparedFusion prepare_partial_fusion(const DenseNetwork& a, const DenseNetwork& b, const Alignment& alignment);

struct LayerBlocks {
    Matrix weight;
    Vector bias;
};
LayerBlocks assemble_partial_layer(const Matrix& w_a, const Vector& b_a, const Matrix& w_b, const Vector& b_b,
                                   const LayerPlan& in, const LayerPlan& out, double lambda);

DenseNetwork assemble_partial_network(const PreparedFusion& prep, double lambda);

DenseNetwork partial_fuse(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg,
                          const Matrix& data = Matrix());

}  // namespace partfuse
