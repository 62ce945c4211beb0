#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "partfuse/genprune.hpp"

using namespace partfuse;

namespace {

// Hidden layer 1 gets a copy of neuron 0 appended; outgoing weight split
// between the twins (share for the copy) so the function is unchanged.
DenseNetwork with_duplicate(const DenseNetwork& net, double share = 0.4) {
    std::vector<Matrix> ws = net.weights();
    std::vector<Vector> bs = net.biases();
    const Index n = net.width(1);
    Matrix w0(n + 1, ws[0].cols());
    w0 << ws[0], ws[0].row(0);
    Vector b0(n + 1);
    b0 << bs[0], bs[0](0);
    Matrix w1(ws[1].rows(), n + 1);
    w1 << ws[1], share * ws[1].col(0);
    w1.col(0) *= 1.0 - share;
    ws[0] = w0;
    bs[0] = b0;
    ws[1] = w1;
    return DenseNetwork(net.activation(), ws, bs);
}

PruneSpec spec_for(std::vector<Index> widths, PruneMethod m) {
    PruneSpec s;
    s.target_widths = std::move(widths);
    s.method = m;
    s.ward.restarts = 200;
    return s;
}

}  // namespace

TEST_CASE("identity kernels leave the network unchanged") {
    auto rng = oracle::rng_for(1);
    DenseNetwork e = oracle::random_net({4, 6, 5, 3}, Activation::GELU, rng);
    DenseNetwork s = apply_generalized_pruning(e, {KernelPair::identity(6), KernelPair::identity(5)});
    CHECK(s == e);
}

TEST_CASE("selection kernels are classical pruning") {
    auto rng = oracle::rng_for(2);
    DenseNetwork e = oracle::random_net({4, 6, 5, 3}, Activation::GELU, rng);
    IndexList keep1{0, 2, 5}, keep2{1, 3};
    auto selection = [](Index n, const IndexList& keep) {
        KernelPair k{Matrix::Zero(static_cast<Index>(keep.size()), n), Matrix::Zero(n, static_cast<Index>(keep.size()))};
        for (size_t r = 0; r < keep.size(); ++r) {
            k.a_to_b(static_cast<Index>(r), keep[r]) = 1.0;
            k.b_to_a(keep[r], static_cast<Index>(r)) = 1.0;
        }
        return k;
    };
    DenseNetwork s = apply_generalized_pruning(e, {selection(6, keep1), selection(5, keep2)});
    CHECK(oracle::max_abs(s.weight(0) - select_rows(e.weight(0), keep1)) == 0.0);
    CHECK(oracle::max_abs(s.weight(1) - select(e.weight(1), keep2, keep1)) == 0.0);
    CHECK(oracle::max_abs(s.weight(2) - select_cols(e.weight(2), keep2)) == 0.0);
    CHECK(s.bias(1) == select(e.bias(1), keep2));
    CHECK_THROWS_AS(apply_generalized_pruning(e, {selection(6, keep1)}), DimensionError);
}

TEST_CASE("ensemble kernels from a match plan equal block assembly") {
    auto rng = oracle::rng_for(3);
    for (int t = 0; t < 100; ++t) {
        std::uniform_int_distribution<int> width(1, 7), depth(1, 3);
        const int L = depth(rng);
        std::vector<Index> da{3}, db{3};
        for (int l = 0; l < L; ++l) {
            da.push_back(width(rng));
            db.push_back(width(rng));
        }
        da.push_back(2);
        db.push_back(2);
        DenseNetwork a = oracle::random_net(da, Activation::GELU, rng);
        DenseNetwork b = oracle::random_net(db, Activation::GELU, rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double lam = u(rng);
        PreparedFusion prep{a, b, {}};
        prep.plan.layers.push_back(oracle::identity_plan(3));
        for (int l = 1; l <= L; ++l) {
            Index na = da[static_cast<size_t>(l)], nb = db[static_cast<size_t>(l)];
            std::uniform_int_distribution<Index> k(0, std::min(na, nb));
            prep.plan.layers.push_back(oracle::random_layer_plan(na, nb, k(rng), rng));
        }
        prep.plan.layers.push_back(oracle::identity_plan(2));
        DenseNetwork assembled = assemble_partial_network(prep, lam);

        std::vector<KernelPair> ks;
        for (int l = 1; l <= L; ++l)
            ks.push_back(partial_fusion_as_pruning_kernels(prep.plan.layers[static_cast<size_t>(l)], lam, a.width(l), b.width(l)));
        DenseNetwork pruned = apply_generalized_pruning(make_ensemble(a, b, lam), ks);
        for (int l = 0; l <= L; ++l) {
            CHECK(oracle::max_abs(pruned.weight(l) - assembled.weight(l)) <= 1e-12);
            CHECK((pruned.bias(l) - assembled.bias(l)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("all-fused plan reproduces weight averaging") {
    auto rng = oracle::rng_for(4);
    LayerPlan p = oracle::random_layer_plan(4, 4, 4, rng);
    KernelPair k = partial_fusion_as_pruning_kernels(p, 0.5, 4, 4);
    CHECK(k.a_to_b.rows() == 4);
    CHECK(oracle::max_abs(k.a_to_b.rightCols(4) - 0.5 * Matrix::Identity(4, 4)) == 0.0);
    LayerPlan iso;
    iso.isolated_a = iota_list(3);
    iso.isolated_b = iota_list(2);
    iso.kernels.a_to_b = iso.kernels.b_to_a = Matrix(0, 0);
    KernelPair s = partial_fusion_as_pruning_kernels(iso, 0.3, 3, 2);
    CHECK(oracle::max_abs(s.a_to_b - Matrix::Identity(5, 5)) == 0.0);
    CHECK(oracle::max_abs(s.b_to_a - Matrix::Identity(5, 5)) == 0.0);
}

TEST_CASE("cluster pruning without compression keeps the function") {
    auto rng = oracle::rng_for(5);
    DenseNetwork e = oracle::random_net({4, 6, 5, 3}, Activation::GELU, rng);
    Matrix x = oracle::gaussian(40, 4, rng);
    DenseNetwork s = cluster_prune(e, spec_for({6, 5}, PruneMethod::CLUSTER), x);
    CHECK(oracle::max_abs(forward(s, x) - forward(e, x)) <= 1e-10);
}

TEST_CASE("cluster pruning merges duplicates of a relu net") {
    auto rng = oracle::rng_for(6);
    for (int t = 0; t < 5; ++t) {
        DenseNetwork base = oracle::random_net({4, 6, 5, 3}, Activation::RELU, rng);
        DenseNetwork e = with_duplicate(base);
        Matrix x = oracle::gaussian(50, 4, rng);
        REQUIRE(oracle::max_abs(forward(e, x) - forward(base, x)) <= 1e-12);
        DenseNetwork s = cluster_prune(e, spec_for({6, 5}, PruneMethod::CLUSTER), x);
        CHECK(s.width(1) == 6);
        CHECK(oracle::max_abs(forward(s, x) - forward(e, x)) <= 1e-9);
    }
}

TEST_CASE("unstructured pruning by incoming norm") {
    Matrix w0(3, 1), w1(1, 3);
    w0 << 5, 1, 3;
    w1 << 1, 1, 1;
    DenseNetwork e(Activation::RELU, {w0, w1}, {Vector::Zero(3), Vector::Zero(1)});
    CHECK(unstructured_keep(e, spec_for({2}, PruneMethod::UNSTRUCTURED))[0] == IndexList{0, 2});
    PruneSpec out = spec_for({1}, PruneMethod::UNSTRUCTURED);
    out.importance = ImportanceNorm::OUTGOING;
    CHECK(unstructured_keep(e, out)[0] == IndexList{0});  // ties go to the lowest index
    CHECK(unstructured_prune(e, spec_for({3}, PruneMethod::UNSTRUCTURED)) == e);
    CHECK_THROWS_AS(unstructured_prune(e, spec_for({4}, PruneMethod::UNSTRUCTURED)), DomainError);
    CHECK_THROWS_AS(unstructured_prune(e, spec_for({0}, PruneMethod::UNSTRUCTURED)), DomainError);
    CHECK_THROWS_AS(unstructured_prune(e, spec_for({1, 1}, PruneMethod::UNSTRUCTURED)), DomainError);
}

TEST_CASE("deleting a dead neuron keeps a gelu net") {
    auto rng = oracle::rng_for(7);
    DenseNetwork base = oracle::random_net({4, 6, 3}, Activation::GELU, rng);
    std::vector<Matrix> ws = base.weights();
    std::vector<Vector> bs = base.biases();
    ws[0].row(2).setZero();
    bs[0](2) = 0.0;
    ws[1].col(2).setZero();
    DenseNetwork e(Activation::GELU, ws, bs);
    Matrix x = oracle::gaussian(30, 4, rng);
    DenseNetwork s = unstructured_prune(e, spec_for({5}, PruneMethod::UNSTRUCTURED));
    CHECK(oracle::max_abs(forward(s, x) - forward(e, x)) <= 1e-15);
}

TEST_CASE("post-processing without pruning is self fusion") {
    auto rng = oracle::rng_for(8);
    DenseNetwork e = oracle::random_net({4, 6, 5, 3}, Activation::GELU, rng);
    Matrix x = oracle::gaussian(40, 4, rng);
    for (FeatureKind f : {FeatureKind::ACTIVATIONS, FeatureKind::WEIGHTS}) {
        PruneSpec s = spec_for({6, 5}, PruneMethod::UNSTRUCTURED_POSTPROCESS);
        s.post_features = f;
        CHECK(oracle::max_abs(forward(prune_with_postprocess(e, s, x), x) - forward(e, x)) <= 1e-9);
    }
}

TEST_CASE("post-processing folds a pruned twin back") {
    auto rng = oracle::rng_for(9);
    int ran = 0;
    for (int t = 0; t < 5; ++t) {
        DenseNetwork base = oracle::random_net({4, 6, 5, 3}, Activation::RELU, rng);
        // The copy gets a tiny outgoing share so outgoing-norm pruning drops it.
        DenseNetwork e = with_duplicate(base, 0.01);
        Matrix x = oracle::gaussian(50, 4, rng);
        PruneSpec s = spec_for({6, 5}, PruneMethod::UNSTRUCTURED_POSTPROCESS);
        s.importance = ImportanceNorm::OUTGOING;
        s.post_marginals = PostprocessMarginals::NEAREST_KEPT;
        IndexList keep = unstructured_keep(e, s)[0];
        if (std::find(keep.begin(), keep.end(), 6) != keep.end()) continue;
        ++ran;
        DenseNetwork post = prune_with_postprocess(e, s, x);
        CHECK(oracle::max_abs(forward(post, x) - forward(e, x)) <= 1e-9);
        DenseNetwork plain = unstructured_prune(e, s);
        CHECK(oracle::max_abs(forward(plain, x) - forward(e, x)) > 1e-6);
    }
    CHECK(ran >= 4);
}

TEST_CASE("lambda weighting needs provenance") {
    auto rng = oracle::rng_for(10);
    DenseNetwork a = oracle::random_net({4, 5, 3}, Activation::GELU, rng);
    DenseNetwork b = oracle::random_net({4, 5, 3}, Activation::GELU, rng);
    DenseNetwork e = make_ensemble(a, b, 0.5);
    Provenance prov = ensemble_provenance(a, b);
    Matrix x = oracle::gaussian(30, 4, rng);
    PruneSpec s = spec_for({5}, PruneMethod::CLUSTER);
    s.lambda = 0.3;
    CHECK_THROWS_AS(cluster_prune(e, s, x), DomainError);
    CHECK_NOTHROW(cluster_prune(e, s, x, &prov));
    DiscreteMeasure m = neuron_masses(10, 1, 0.3, &prov);
    CHECK(m.masses(0) == doctest::Approx(0.06));
    CHECK(m.masses(9) == doctest::Approx(0.14));
    s.lambda = 1.0;
    s.target_widths = {6};
    CHECK_THROWS_AS(cluster_prune(e, s, x, &prov), DomainError);
    s.target_widths = {5};
    // lambda = 1 ignores B entirely: clustering A's five neurons into five
    // clusters gives back A.
    DenseNetwork only_a = cluster_prune(make_ensemble(a, b, 1.0), s, x, &prov);
    CHECK(only_a.width(1) == 5);
    CHECK(oracle::max_abs(forward(only_a, x) - forward(a, x)) <= 1e-10);
}

TEST_CASE("singleton clusters keep their weights") {
    auto rng = oracle::rng_for(11);
    Matrix pts(5, 1);
    pts << 0, 0.01, 3, 6, 9;
    auto w = DiscreteMeasure::uniform(5);
    ClusterAssignment a = make_assignment(pts, w, {0, 0, 1, 2, 3}, 4);
    DenseNetwork e = oracle::random_net({3, 5, 2}, Activation::GELU, rng);
    DenseNetwork s = apply_generalized_pruning(e, {assignment_to_kernels(a, w)});
    for (Index k = 1; k < 4; ++k) {
        CHECK((s.weight(0).row(k) - e.weight(0).row(k + 1)).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((s.weight(1).col(k) - e.weight(1).col(k + 1)).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("pruning is deterministic") {
    auto rng = oracle::rng_for(12);
    DenseNetwork a = oracle::random_net({4, 8, 7, 3}, Activation::GELU, rng);
    DenseNetwork b = oracle::random_net({4, 8, 7, 3}, Activation::GELU, rng);
    DenseNetwork e = make_ensemble(a, b, 0.5);
    Matrix x = oracle::gaussian(30, 4, rng);
    for (PruneMethod m : {PruneMethod::CLUSTER, PruneMethod::UNSTRUCTURED, PruneMethod::UNSTRUCTURED_POSTPROCESS}) {
        PruneSpec s = spec_for({9, 8}, m);
        CHECK(prune(e, s, x) == prune(e, s, x));
    }
}
