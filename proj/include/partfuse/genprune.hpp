#pragma once

#include <optional>
#include <vector>

#include "partfuse/clustering.hpp"
#include "partfuse/fusion.hpp"
#include "partfuse/netcore.hpp"

namespace partfuse {

enum class PruneMethod { CLUSTER, UNSTRUCTURED, UNSTRUCTURED_POSTPROCESS };
enum class ImportanceNorm { INCOMING, OUTGOING };
// Masses of the kept neurons when the original is transported onto the
// pruned network: uniform, or the share of original neurons closest to each.
enum class PostprocessMarginals { UNIFORM, NEAREST_KEPT };

struct PruneSpec {
    std::vector<Index> target_widths;  // one per hidden layer
    PruneMethod method = PruneMethod::CLUSTER;
    // When set, neurons of A count lambda and neurons of B 1-lambda.
    std::optional<double> lambda;
    ImportanceNorm importance = ImportanceNorm::INCOMING;
    StochasticWardOptions ward{};
    int activation_samples = 1000;
    FeatureKind post_features = FeatureKind::ACTIVATIONS;
    PostprocessMarginals post_marginals = PostprocessMarginals::UNIFORM;
};

// W^S_l = K_{l+1}^{E->S} W^E_l K_l^{S->E}, b^S_l = K_{l+1}^{E->S} b^E_l.
// kernels[l] for l = 0..L+1 with a_to_b = K^{E->S}, b_to_a = K^{S->E}.
DenseNetwork apply_generalized_pruning_full(const DenseNetwork& e, const std::vector<KernelPair>& kernels);
// Hidden layers only; identity at the boundaries.
DenseNetwork apply_generalized_pruning(const DenseNetwork& e, const std::vector<KernelPair>& hidden_kernels);

// Neuron weights for clustering and importance, normalised to one.
DiscreteMeasure neuron_masses(Index n, int layer, const std::optional<double>& lambda, const Provenance* provenance);

DenseNetwork cluster_prune(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data,
                           const Provenance* provenance = nullptr);

// Indices kept per hidden layer, ascending.
std::vector<IndexList> unstructured_keep(const DenseNetwork& e, const PruneSpec& spec,
                                         const Provenance* provenance = nullptr);
DenseNetwork unstructured_prune(const DenseNetwork& e, const PruneSpec& spec, const Provenance* provenance = nullptr);

DenseNetwork prune_with_postprocess(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data,
                                    const Provenance* provenance = nullptr);

DenseNetwork prune(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data,
                   const Provenance* provenance = nullptr);

// K^{E->S} (|S| x (n_A+n_B)) and K^{S->E} ((n_A+n_B) x |S|) in ensemble order
// (A's neurons, then B's), S ordered as (I^A, F^B, I^B).
KernelPair partial_fusion_as_pruning_kernels(const LayerPlan& plan, double lambda, Index n_a, Index n_b);

}  // namespace partfuse
