#include "partfuse/genprune.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace partfuse {

DenseNetwork apply_generalized_pruning_full(const DenseNetwork& e, const std::vector<KernelPair>& kernels) {
    const int L = e.hidden_layers();
    if (static_cast<int>(kernels.size()) != L + 2) throw DimensionError("need kernels for layers 0..L+1");
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (int l = 0; l <= L; ++l) {
        const Matrix& to_s = kernels[static_cast<size_t>(l + 1)].a_to_b;
        const Matrix& to_e = kernels[static_cast<size_t>(l)].b_to_a;
        if (to_s.cols() != e.weight(l).rows() || to_e.rows() != e.weight(l).cols())
            throw DimensionError("kernel shapes do not match layer " + std::to_string(l));
        if (l > 0 && to_e.cols() != kernels[static_cast<size_t>(l)].a_to_b.rows())
            throw DimensionError("kernel pair at layer " + std::to_string(l) + " disagrees on the pruned width");
        ws.push_back(to_s * e.weight(l) * to_e);
        bs.push_back(to_s * e.bias(l));
    }
    return DenseNetwork(e.activation(), std::move(ws), std::move(bs));
}

DenseNetwork apply_generalized_pruning(const DenseNetwork& e, const std::vector<KernelPair>& hidden_kernels) {
    const int L = e.hidden_layers();
    if (static_cast<int>(hidden_kernels.size()) != L) throw DimensionError("one kernel pair per hidden layer required");
    std::vector<KernelPair> all;
    all.push_back(KernelPair::identity(e.input_dim()));
    all.insert(all.end(), hidden_kernels.begin(), hidden_kernels.end());
    all.push_back(KernelPair::identity(e.output_dim()));
    return apply_generalized_pruning_full(e, all);
}

namespace {

void check_widths(const DenseNetwork& e, const PruneSpec& spec) {
    const int L = e.hidden_layers();
    if (static_cast<int>(spec.target_widths.size()) != L)
        throw DomainError("need one target width per hidden layer (" + std::to_string(L) + ")");
    for (int l = 1; l <= L; ++l) {
        Index m = spec.target_widths[static_cast<size_t>(l - 1)];
        if (m < 1 || m > e.width(l))
            throw DomainError("target width " + std::to_string(m) + " at layer " + std::to_string(l) + " outside [1, " +
                              std::to_string(e.width(l)) + "]");
    }
    if (spec.lambda && !(*spec.lambda >= 0.0 && *spec.lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
}

DenseNetwork select_neurons(const DenseNetwork& e, const std::vector<IndexList>& keep) {
    std::vector<Matrix> ws = e.weights();
    std::vector<Vector> bs = e.biases();
    for (size_t l = 1; l <= keep.size(); ++l) {
        ws[l - 1] = select_rows(ws[l - 1], keep[l - 1]);
        bs[l - 1] = select(bs[l - 1], keep[l - 1]);
        ws[l] = select_cols(ws[l], keep[l - 1]);
    }
    return DenseNetwork(e.activation(), std::move(ws), std::move(bs));
}

}  // namespace

DiscreteMeasure neuron_masses(Index n, int layer, const std::optional<double>& lambda, const Provenance* provenance) {
    if (!lambda) return DiscreteMeasure::uniform(n);
    if (provenance == nullptr) throw DomainError("lambda-weighted pruning needs ensemble provenance");
    if (layer < 1 || layer > static_cast<int>(provenance->size())) throw DimensionError("provenance lacks this layer");
    const auto& tags = (*provenance)[static_cast<size_t>(layer - 1)];
    if (static_cast<Index>(tags.size()) != n) throw DimensionError("provenance width does not match layer");
    Vector m(n);
    for (Index i = 0; i < n; ++i) m[i] = tags[static_cast<size_t>(i)] == Origin::A ? *lambda : 1.0 - *lambda;
    double t = m.sum();
    if (!(t > 0.0)) throw DomainError("all neuron masses are zero");
    return {m / t};
}

DenseNetwork cluster_prune(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data,
                           const Provenance* provenance) {
    check_widths(e, spec);
    if (data.rows() < 1) throw DomainError("clustering needs activation data");
    std::vector<KernelPair> kernels;
    for (int l = 1; l <= e.hidden_layers(); ++l) {
        ActivationFeatures f = features_activation(e, data, l, spec.activation_samples);
        DiscreteMeasure mu = neuron_masses(e.width(l), l, spec.lambda, provenance);
        Index m = spec.target_widths[static_cast<size_t>(l - 1)];
        // Zero-mass neurons (lambda in {0,1}) do not reach the output; they are dropped.
        IndexList live;
        for (Index i = 0; i < mu.size(); ++i)
            if (mu.masses[i] > 0.0) live.push_back(i);
        if (m > static_cast<Index>(live.size()))
            throw DomainError("more clusters requested than neurons with positive mass");
        DiscreteMeasure sub{select(mu.masses, live)};
        ClusterAssignment a = stochastic_ward(select_rows(f.features, live), sub, m, spec.ward);
        KernelPair k = assignment_to_kernels(a, sub);
        KernelPair full{Matrix::Zero(m, mu.size()), Matrix::Zero(mu.size(), m)};
        for (size_t r = 0; r < live.size(); ++r) {
            full.a_to_b.col(live[r]) = k.a_to_b.col(static_cast<Index>(r));
            full.b_to_a.row(live[r]) = k.b_to_a.row(static_cast<Index>(r));
        }
        kernels.push_back(std::move(full));
    }
    return apply_generalized_pruning(e, kernels);
}

std::vector<IndexList> unstructured_keep(const DenseNetwork& e, const PruneSpec& spec, const Provenance* provenance) {
    check_widths(e, spec);
    std::vector<IndexList> keep;
    for (int l = 1; l <= e.hidden_layers(); ++l) {
        const Index n = e.width(l);
        DiscreteMeasure w = neuron_masses(n, l, spec.lambda, provenance);
        Vector score(n);
        for (Index i = 0; i < n; ++i) {
            double norm = spec.importance == ImportanceNorm::INCOMING ? e.weight(l - 1).row(i).norm()
                                                                      : e.weight(l).col(i).norm();
            // uniform masses leave the ranking untouched
            score[i] = norm * (spec.lambda ? w.masses[i] : 1.0);
        }
        IndexList order = iota_list(n);
        std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return score[x] > score[y]; });
        IndexList k(order.begin(), order.begin() + spec.target_widths[static_cast<size_t>(l - 1)]);
        std::sort(k.begin(), k.end());
        keep.push_back(std::move(k));
    }
    return keep;
}

DenseNetwork unstructured_prune(const DenseNetwork& e, const PruneSpec& spec, const Provenance* provenance) {
    return select_neurons(e, unstructured_keep(e, spec, provenance));
}

DenseNetwork prune_with_postprocess(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data,
                                    const Provenance* provenance) {
    std::vector<IndexList> keep = unstructured_keep(e, spec, provenance);
    DenseNetwork pruned = select_neurons(e, keep);
    if (spec.post_features == FeatureKind::ACTIVATIONS && data.rows() < 1)
        throw DomainError("post-processing with activation features needs data");
    std::vector<KernelPair> kernels;
    for (int l = 1; l <= e.hidden_layers(); ++l) {
        // Compare every original neuron with the kept ones in the original network's own space.
        Matrix x;
        if (spec.post_features == FeatureKind::ACTIVATIONS) {
            x = features_activation(e, data, l, spec.activation_samples).features;
        } else {
            x.resize(e.width(l), e.width(l - 1) + 1);
            x << e.weight(l - 1), e.bias(l - 1);
        }
        const IndexList& k = keep[static_cast<size_t>(l - 1)];
        Matrix cost = cost_matrix(x, select_rows(x, k));
        const Index n = e.width(l), m = static_cast<Index>(k.size());
        DiscreteMeasure mu = DiscreteMeasure::uniform(n);
        DiscreteMeasure nu = DiscreteMeasure::uniform(m);
        if (spec.post_marginals == PostprocessMarginals::NEAREST_KEPT) {
            std::vector<Index> slot(static_cast<size_t>(n), -1);
            for (Index j = 0; j < m; ++j) slot[static_cast<size_t>(k[static_cast<size_t>(j)])] = j;
            nu.masses.setZero(m);
            for (Index i = 0; i < n; ++i) {
                Index t = slot[static_cast<size_t>(i)];
                if (t < 0) {
                    t = 0;
                    for (Index j = 1; j < m; ++j)
                        if (cost(i, j) < cost(i, t)) t = j;
                }
                nu.masses[t] += mu.masses[i];
            }
        }
        Coupling pi = solve_ot(mu, nu, cost);
        kernels.push_back(coupling_to_kernels(pi));
    }
    return fuse_with_kernels(e, pruned, kernels, 1.0);
}

DenseNetwork prune(const DenseNetwork& e, const PruneSpec& spec, const Matrix& data, const Provenance* provenance) {
    switch (spec.method) {
        case PruneMethod::CLUSTER: return cluster_prune(e, spec, data, provenance);
        case PruneMethod::UNSTRUCTURED: return unstructured_prune(e, spec, provenance);
        case PruneMethod::UNSTRUCTURED_POSTPROCESS: return prune_with_postprocess(e, spec, data, provenance);
    }
    throw DomainError("unknown prune method");
}

KernelPair partial_fusion_as_pruning_kernels(const LayerPlan& plan, double lambda, Index n_a, Index n_b) {
    validate_plan(plan, n_a, n_b);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    const auto ia = static_cast<Index>(plan.isolated_a.size()), fb = static_cast<Index>(plan.fused_b.size());
    const Index s = plan.width(), e = n_a + n_b;
    KernelPair k{Matrix::Zero(s, e), Matrix::Zero(e, s)};
    for (Index r = 0; r < ia; ++r) {
        Index src = plan.isolated_a[static_cast<size_t>(r)];
        k.a_to_b(r, src) = 1.0;
        k.b_to_a(src, r) = 1.0;
    }
    for (Index j = 0; j < fb; ++j) {
        Index row = ia + j;
        for (size_t f = 0; f < plan.fused_a.size(); ++f) {
            Index src = plan.fused_a[f];
            k.a_to_b(row, src) = lambda * plan.kernels.a_to_b(j, static_cast<Index>(f));
            k.b_to_a(src, row) = plan.kernels.b_to_a(static_cast<Index>(f), j);
        }
        k.a_to_b(row, n_a + plan.fused_b[static_cast<size_t>(j)]) = 1.0 - lambda;
        k.b_to_a(n_a + plan.fused_b[static_cast<size_t>(j)], row) = 1.0;
    }
    for (size_t r = 0; r < plan.isolated_b.size(); ++r) {
        Index row = ia + fb + static_cast<Index>(r);
        k.a_to_b(row, n_a + plan.isolated_b[r]) = 1.0;
        k.b_to_a(n_a + plan.isolated_b[r], row) = 1.0;
    }
    return k;
}

}  // namespace partfuse
