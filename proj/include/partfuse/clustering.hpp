#pragma once

#include <cstdint>
#include <vector>

#include "partfuse/error.hpp"
#include "partfuse/linalg.hpp"
#include "partfuse/transport.hpp"

namespace partfuse {

struct ClusterAssignment {
    IndexList assign;    // point -> cluster in [0, m)
    Matrix centers;      // m x d
    Vector center_mass;  // m

    Index num_clusters() const { return centers.rows(); }
};

// Build centers and masses for a labelling. Clusters must be nonempty and
// carry positive mass.
ClusterAssignment make_assignment(const Matrix& points, const DiscreteMeasure& masses, const IndexList& assign,
                                  Index m);

// Relabel clusters in order of their smallest member.
IndexList canonical_labels(const IndexList& assign);

double clustering_objective(const Matrix& points, const DiscreteMeasure& masses, const ClusterAssignment& a);

ClusterAssignment lloyd(const Matrix& points, const DiscreteMeasure& masses, Index m, int n_init,
                        std::uint64_t seed, int max_iter = 300);

ClusterAssignment greedy_ward(const Matrix& points, const DiscreteMeasure& masses, Index m);

struct StochasticWardOptions {
    double temperature = 0.1;
    int restarts = 1000;
    std::uint64_t seed = 0;
    // Restart 0 runs the deterministic greedy merge order.
    bool include_greedy = true;
    int threads = 1;
};

ClusterAssignment stochastic_ward(const Matrix& points, const DiscreteMeasure& masses, Index m,
                                  const StochasticWardOptions& opts = {});

// a_to_b is K^{E->S} (m x n), b_to_a is K^{S->E} (n x m).
KernelPair assignment_to_kernels(const ClusterAssignment& a, const DiscreteMeasure& masses);

struct BruteForceClustering {
    double objective = 0.0;
    IndexList assign;
};

// Exhaustive over set partitions into at most m blocks, n <= 10.
BruteForceClustering brute_force_clustering(const Matrix& points, const DiscreteMeasure& masses, Index m);

}  // namespace partfuse
