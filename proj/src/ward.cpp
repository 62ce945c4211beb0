#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "partfuse/clustering.hpp"

namespace partfuse {

namespace {

struct WardState {
    Matrix centroid;
    Vector weight;
    std::vector<Index> count;
    std::vector<char> active;
    IndexList owner;  // point -> slot
    Matrix delta;     // upper triangle used

    WardState(const Matrix& points, const DiscreteMeasure& masses) {
        const Index n = points.rows();
        centroid = points;
        weight = masses.masses;
        count.assign(static_cast<size_t>(n), 1);
        active.assign(static_cast<size_t>(n), 1);
        owner = iota_list(n);
        delta = Matrix::Zero(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) delta(i, j) = increment(i, j);
    }

    double increment(Index p, Index q) const {
        double w = weight[p] + weight[q];
        if (!(w > 0.0)) return 0.0;
        return weight[p] * weight[q] / w * (centroid.row(p) - centroid.row(q)).squaredNorm();
    }

    void merge(Index p, Index q) {  // q into p, p < q
        double w = weight[p] + weight[q];
        if (w > 0.0) {
            centroid.row(p) = (weight[p] * centroid.row(p) + weight[q] * centroid.row(q)) / w;
        } else {
            double cp = static_cast<double>(count[static_cast<size_t>(p)]);
            double cq = static_cast<double>(count[static_cast<size_t>(q)]);
            centroid.row(p) = (cp * centroid.row(p) + cq * centroid.row(q)) / (cp + cq);
        }
        weight[p] = w;
        count[static_cast<size_t>(p)] += count[static_cast<size_t>(q)];
        active[static_cast<size_t>(q)] = 0;
        for (auto& o : owner)
            if (o == q) o = p;
        for (Index k = 0; k < centroid.rows(); ++k) {
            if (!active[static_cast<size_t>(k)] || k == p) continue;
            if (k < p) delta(k, p) = increment(k, p);
            else delta(p, k) = increment(p, k);
        }
    }
};

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One agglomerative run down to m clusters. rng == nullptr gives the greedy run.
IndexList ward_run(const Matrix& points, const DiscreteMeasure& masses, Index m, double temperature,
                   std::mt19937_64* rng) {
    const Index n = points.rows();
    WardState st(points, masses);
    std::vector<std::pair<Index, Index>> pairs;
    std::vector<double> values, scratch, weights;
    for (Index clusters = n; clusters > m; --clusters) {
        pairs.clear();
        values.clear();
        for (Index i = 0; i < n; ++i) {
            if (!st.active[static_cast<size_t>(i)]) continue;
            for (Index j = i + 1; j < n; ++j) {
                if (!st.active[static_cast<size_t>(j)]) continue;
                pairs.emplace_back(i, j);
                values.push_back(st.delta(i, j));
            }
        }
        size_t pick = 0;
        for (size_t k = 1; k < values.size(); ++k)
            if (values[k] < values[pick]) pick = k;
        if (rng != nullptr && pairs.size() > 1) {
            const double dmin = values[pick];
            scratch = values;
            auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(scratch.size() / 2);
            std::nth_element(scratch.begin(), mid, scratch.end());
            double scale = *mid;
            if (!(scale > 0.0)) scale = *std::max_element(values.begin(), values.end());
            if (scale > 0.0) {
                scale *= temperature;
                weights.resize(values.size());
                double total = 0.0;
                for (size_t k = 0; k < values.size(); ++k) {
                    weights[k] = std::exp(-(values[k] - dmin) / scale);
                    total += weights[k];
                }
                double u = uniform01(*rng) * total;
                pick = values.size() - 1;
                for (size_t k = 0; k < values.size(); ++k) {
                    u -= weights[k];
                    if (u < 0.0) {
                        pick = k;
                        break;
                    }
                }
            }
        }
        st.merge(pairs[pick].first, pairs[pick].second);
    }
    return canonical_labels(st.owner);
}

void check_inputs(const Matrix& points, const DiscreteMeasure& masses, Index m) {
    if (masses.size() != points.rows()) throw DimensionError("one mass per point required");
    if (points.rows() < 1) throw DomainError("no points to cluster");
    if (m < 1 || m > points.rows())
        throw DomainError("cluster count " + std::to_string(m) + " outside [1, " + std::to_string(points.rows()) + "]");
}

}  // namespace

ClusterAssignment greedy_ward(const Matrix& points, const DiscreteMeasure& masses, Index m) {
    check_inputs(points, masses, m);
    return make_assignment(points, masses, ward_run(points, masses, m, 0.0, nullptr), m);
}

ClusterAssignment stochastic_ward(const Matrix& points, const DiscreteMeasure& masses, Index m,
                                  const StochasticWardOptions& opts) {
    check_inputs(points, masses, m);
    if (!(opts.temperature > 0.0)) throw DomainError("temperature must be positive");
    if (opts.restarts < 1) throw DomainError("restarts must be at least 1");

    struct Best {
        double obj = std::numeric_limits<double>::infinity();
        IndexList assign;
    };
    auto run_range = [&](int lo, int hi) {
        Best best;
        for (int r = lo; r < hi; ++r) {
            IndexList lab;
            if (r == 0 && opts.include_greedy) {
                lab = ward_run(points, masses, m, 0.0, nullptr);
            } else {
                std::seed_seq ss{opts.seed, static_cast<std::uint64_t>(r)};
                std::mt19937_64 rng(ss);
                lab = ward_run(points, masses, m, opts.temperature, &rng);
            }
            double obj = clustering_objective(points, masses, make_assignment(points, masses, lab, m));
            if (obj < best.obj) best = {obj, std::move(lab)};
        }
        return best;
    };

    const int threads = std::max(1, std::min(opts.threads, opts.restarts));
    std::vector<Best> partial(static_cast<size_t>(threads));
    if (threads == 1) {
        partial[0] = run_range(0, opts.restarts);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            int lo = static_cast<int>(static_cast<long long>(opts.restarts) * t / threads);
            int hi = static_cast<int>(static_cast<long long>(opts.restarts) * (t + 1) / threads);
            pool.emplace_back([&, t, lo, hi] { partial[static_cast<size_t>(t)] = run_range(lo, hi); });
        }
        for (auto& th : pool) th.join();
    }
    // Chunks are in restart order, so strict < keeps the lowest restart on ties.
    Best best;
    for (auto& p : partial)
        if (p.obj < best.obj) best = std::move(p);
    return make_assignment(points, masses, best.assign, m);
}

}  // namespace partfuse
