#pragma once

// Independent reference implementations and random instance generators
// shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "partfuse/fusion.hpp"
#include "partfuse/netcore.hpp"
#include "partfuse/transport.hpp"

namespace oracle {

using partfuse::Activation;
using partfuse::DenseNetwork;
using partfuse::Index;
using partfuse::IndexList;
using partfuse::Matrix;
using partfuse::Vector;

inline std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq ss{seed, stream, std::uint64_t{0xfeed}};
    return std::mt19937_64(ss);
}

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = n(rng);
    return m;
}

inline DenseNetwork random_net(const std::vector<Index>& dims, Activation act, std::mt19937_64& rng,
                               double bias_scale = 0.1) {
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        ws.push_back(gaussian(dims[l + 1], dims[l], rng, 1.0 / std::sqrt(static_cast<double>(dims[l]))));
        bs.push_back(gaussian(dims[l + 1], 1, rng, bias_scale).col(0));
    }
    return DenseNetwork(act, ws, bs);
}

inline double act(Activation a, double x) {
    switch (a) {
        case Activation::RELU: return x > 0 ? x : 0.0;
        case Activation::IDENTITY: return x;
        case Activation::GELU: {
            const double c = std::sqrt(2.0 / M_PI);
            return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
        }
    }
    return x;
}

// Scalar-loop forward pass.
inline Matrix naive_forward(const DenseNetwork& net, const Matrix& x) {
    Matrix out(x.rows(), net.output_dim());
    const int L = net.hidden_layers();
    for (Index s = 0; s < x.rows(); ++s) {
        std::vector<double> h(static_cast<size_t>(x.cols()));
        for (Index c = 0; c < x.cols(); ++c) h[static_cast<size_t>(c)] = x(s, c);
        for (int l = 0; l <= L; ++l) {
            const Matrix& w = net.weight(l);
            std::vector<double> z(static_cast<size_t>(w.rows()));
            for (Index r = 0; r < w.rows(); ++r) {
                double acc = net.bias(l)(r);
                for (Index c = 0; c < w.cols(); ++c) acc += w(r, c) * h[static_cast<size_t>(c)];
                z[static_cast<size_t>(r)] = l < L ? act(net.activation(), acc) : acc;
            }
            h = std::move(z);
        }
        for (Index c = 0; c < out.cols(); ++c) out(s, c) = h[static_cast<size_t>(c)];
    }
    return out;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Minimum of sum_i C(i, p(i)) / n over all permutations.
inline double permutation_min(const Matrix& cost) {
    IndexList p(static_cast<size_t>(cost.rows()));
    std::iota(p.begin(), p.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (Index i = 0; i < cost.rows(); ++i) s += cost(i, p[static_cast<size_t>(i)]);
        best = std::min(best, s);
    } while (std::next_permutation(p.begin(), p.end()));
    return best / static_cast<double>(cost.rows());
}

// Minimum weighted k-means objective over all m^n labellings (empty
// clusters allowed, which covers partitions into at most m parts).
inline double labelling_min(const Matrix& pts, const Vector& w, Index m) {
    const Index n = pts.rows();
    std::vector<Index> lab(static_cast<size_t>(n), 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        double obj = 0.0;
        for (Index k = 0; k < m; ++k) {
            double mass = 0.0;
            Vector c = Vector::Zero(pts.cols());
            for (Index i = 0; i < n; ++i)
                if (lab[static_cast<size_t>(i)] == k) {
                    mass += w(i);
                    c += w(i) * pts.row(i).transpose();
                }
            if (mass == 0.0) continue;
            c /= mass;
            for (Index i = 0; i < n; ++i)
                if (lab[static_cast<size_t>(i)] == k) obj += w(i) * (pts.row(i).transpose() - c).squaredNorm();
        }
        best = std::min(best, obj);
        Index pos = 0;
        while (pos < n && ++lab[static_cast<size_t>(pos)] == m) lab[static_cast<size_t>(pos++)] = 0;
        if (pos == n) break;
    }
    return best;
}

inline IndexList random_perm(Index n, std::mt19937_64& rng) {
    IndexList p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), Index{0});
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

// Random layer plan with |F^A| = |F^B| = k and kernels from a random dense
// coupling between the fused sets.
inline partfuse::LayerPlan random_layer_plan(Index n_a, Index n_b, Index k, std::mt19937_64& rng) {
    partfuse::LayerPlan p;
    IndexList pa = random_perm(n_a, rng), pb = random_perm(n_b, rng);
    p.fused_a.assign(pa.begin(), pa.begin() + k);
    p.isolated_a.assign(pa.begin() + k, pa.end());
    p.fused_b.assign(pb.begin(), pb.begin() + k);
    p.isolated_b.assign(pb.begin() + k, pb.end());
    for (auto* v : {&p.fused_a, &p.isolated_a, &p.fused_b, &p.isolated_b}) std::sort(v->begin(), v->end());
    if (k > 0) {
        std::uniform_real_distribution<double> u(0.05, 1.0);
        partfuse::Coupling c;
        c.plan = Matrix(k, k);
        for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < k; ++j) c.plan(i, j) = u(rng);
        c.plan /= c.plan.sum();
        c.row_marginal = c.plan.rowwise().sum();
        c.col_marginal = c.plan.colwise().sum().transpose();
        p.kernels = partfuse::coupling_to_kernels(c);
    } else {
        p.kernels.a_to_b = Matrix(0, 0);
        p.kernels.b_to_a = Matrix(0, 0);
    }
    return p;
}

inline partfuse::LayerPlan identity_plan(Index n) {
    partfuse::LayerPlan p;
    p.fused_a = partfuse::iota_list(n);
    p.fused_b = partfuse::iota_list(n);
    p.kernels = partfuse::KernelPair::identity(n);
    return p;
}

}  // namespace oracle
