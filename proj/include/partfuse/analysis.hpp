#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "partfuse/fusion.hpp"
#include "partfuse/genprune.hpp"
#include "partfuse/netcore.hpp"

namespace partfuse {

struct LayerCount {
    Index total = 0;
    Index nonzero = 0;
};

struct ParamReport {
    std::vector<LayerCount> weights;  // one per weight matrix, l = 0..L
    LayerCount biases;
    Index total = 0;           // weights + biases
    Index total_nonzero = 0;
    double ratio_vs_single = 0.0;  // total_nonzero / reference, 0 if no reference
};

// Exact zeros only: constructed zero blocks are stored as 0.0.
ParamReport count_params(const DenseNetwork& net, Index reference_nonzero = 0);

enum class CountMethod { PRUNING, CLUSTERING, PARTIAL_FUSION };

struct CountBounds {
    double best = 0.0;
    double worst = 0.0;
};

// Closed-form nonzero counts for one hidden-to-hidden layer of two parents with n and m neurons.
CountBounds theoretical_counts(double alpha, double n, double m, CountMethod method);

enum class Stat { NN_WITHIN = 0, MEAN_WITHIN = 1, NN_CROSS = 2, MEAN_CROSS = 3 };
constexpr std::array<const char*, 4> kStatNames{"nn_within", "mean_within", "nn_cross", "mean_cross"};

struct StatSummary {
    double full = 0.0;
    double conditional80 = 0.0;
    double difference = 0.0;
};

struct NetworkSimilarity {
    std::array<Vector, 4> values;  // indexed by Stat, one entry per neuron
    std::array<StatSummary, 4> summary;
};

struct SimilarityReport {
    int layer = 0;
    NetworkSimilarity a;
    NetworkSimilarity b;
};

// Mean of the ceil(0.8 n) smallest values.
double conditional80_mean(const Vector& values);

SimilarityReport similarity_stats(const DenseNetwork& a, const DenseNetwork& b, const Matrix& data, int layer,
                                  int max_samples = 1000);

enum class SweepMethod { PARTIAL_FUSION, CLUSTER, PRUNE, PRUNE_POST };
std::string sweep_method_name(SweepMethod m);
SweepMethod parse_sweep_method(const std::string& name);

struct RunRecord {
    std::string method;
    std::vector<double> alpha;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    Index nonzero_params = 0;
    Index total_params = 0;
    std::vector<Index> widths;
    double wall_ms = 0.0;
    std::string error;  // empty on success
};

struct SeedPair {
    std::uint64_t seed = 0;
    DenseNetwork a;
    DenseNetwork b;
};

struct SweepConfig {
    std::vector<SweepMethod> methods;
    std::vector<std::vector<double>> alphas;  // each entry: scalar or per-layer list
    std::vector<double> lambdas;
    FusionConfig fusion;  // lambda and alpha overridden per cell
    PruneSpec prune;      // widths, method and lambda overridden per cell
    int jobs = 1;
    bool timing = false;
};

// Hidden widths of a pruned ensemble matching (1+alpha) times the mean parent width.
std::vector<Index> pruning_widths(const DenseNetwork& a, const DenseNetwork& b, const std::vector<double>& alpha);

// The network a sweep cell evaluates. Pruning methods act on the
// lambda-weighted ensemble with provenance.
DenseNetwork cell_network(const SeedPair& pair, SweepMethod method, const std::vector<double>& alpha, double lambda,
                          const SweepConfig& cfg, const Matrix& activation_data);
// Accuracy (nan for an empty eval set), parameter counts and widths.
void fill_record(RunRecord& rec, const DenseNetwork& out, const LabeledDataset& eval);

RunRecord run_cell(const SeedPair& pair, SweepMethod method, const std::vector<double>& alpha, double lambda,
                   const SweepConfig& cfg, const LabeledDataset& eval, const Matrix& activation_data);

// Rows ordered by method, alpha, lambda, seed (grid order).
std::vector<RunRecord> tradeoff_sweep(const std::vector<SeedPair>& pairs, const SweepConfig& cfg,
                                      const LabeledDataset& eval, const Matrix& activation_data);

std::string sweep_csv_header();
std::string to_csv_row(const RunRecord& r);
std::string format_number(double v);

}  // namespace partfuse
