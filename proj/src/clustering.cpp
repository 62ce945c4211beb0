#include "partfuse/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

namespace partfuse {

namespace {

void check_inputs(const Matrix& points, const DiscreteMeasure& masses, Index m) {
    if (masses.size() != points.rows()) throw DimensionError("one mass per point required");
    if (points.rows() < 1) throw DomainError("no points to cluster");
    if (m < 1 || m > points.rows())
        throw DomainError("cluster count " + std::to_string(m) + " outside [1, " + std::to_string(points.rows()) + "]");
    for (Index i = 0; i < masses.size(); ++i)
        if (!(masses.masses[i] >= 0.0)) throw DomainError("negative point mass");
}

}  // namespace

IndexList canonical_labels(const IndexList& assign) {
    std::map<Index, Index> relabel;
    IndexList out(assign.size());
    for (size_t i = 0; i < assign.size(); ++i) {
        auto it = relabel.find(assign[i]);
        if (it == relabel.end()) it = relabel.emplace(assign[i], static_cast<Index>(relabel.size())).first;
        out[i] = it->second;
    }
    return out;
}

ClusterAssignment make_assignment(const Matrix& points, const DiscreteMeasure& masses, const IndexList& assign,
                                  Index m) {
    if (static_cast<Index>(assign.size()) != points.rows()) throw DimensionError("one label per point required");
    if (masses.size() != points.rows()) throw DimensionError("one mass per point required");
    ClusterAssignment a;
    a.assign = assign;
    a.centers = Matrix::Zero(m, points.cols());
    a.center_mass = Vector::Zero(m);
    std::vector<Index> count(static_cast<size_t>(m), 0);
    for (Index i = 0; i < points.rows(); ++i) {
        Index k = assign[static_cast<size_t>(i)];
        if (k < 0 || k >= m) throw DimensionError("cluster label out of range");
        a.center_mass[k] += masses.masses[i];
        a.centers.row(k) += masses.masses[i] * points.row(i);
        ++count[static_cast<size_t>(k)];
    }
    for (Index k = 0; k < m; ++k) {
        if (count[static_cast<size_t>(k)] == 0) throw DegenerateNeuronError("cluster " + std::to_string(k) + " is empty");
        if (!(a.center_mass[k] > 0.0))
            throw DegenerateNeuronError("cluster " + std::to_string(k) + " has zero mass");
        a.centers.row(k) /= a.center_mass[k];
    }
    return a;
}

double clustering_objective(const Matrix& points, const DiscreteMeasure& masses, const ClusterAssignment& a) {
    if (static_cast<Index>(a.assign.size()) != points.rows() || masses.size() != points.rows() ||
        a.centers.cols() != points.cols())
        throw DimensionError("clustering_objective: inconsistent shapes");
    double obj = 0.0;
    for (Index i = 0; i < points.rows(); ++i) {
        Index k = a.assign[static_cast<size_t>(i)];
        if (k < 0 || k >= a.centers.rows()) throw DimensionError("cluster label out of range");
        obj += masses.masses[i] * (points.row(i) - a.centers.row(k)).squaredNorm();
    }
    return obj;
}

ClusterAssignment lloyd(const Matrix& points, const DiscreteMeasure& masses, Index m, int n_init,
                        std::uint64_t seed, int max_iter) {
    check_inputs(points, masses, m);
    if (n_init < 1) throw DomainError("n_init must be positive");
    const Index n = points.rows();
    ClusterAssignment best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int run = 0; run < n_init; ++run) {
        std::seed_seq ss{seed, static_cast<std::uint64_t>(run)};
        std::mt19937_64 rng(ss);
        IndexList order = iota_list(n);
        std::shuffle(order.begin(), order.end(), rng);
        Matrix centers(m, points.cols());
        for (Index k = 0; k < m; ++k) centers.row(k) = points.row(order[static_cast<size_t>(k)]);

        IndexList assign(static_cast<size_t>(n), -1);
        for (int it = 0; it < max_iter; ++it) {
            bool changed = false;
            std::vector<double> dist(static_cast<size_t>(n));
            for (Index i = 0; i < n; ++i) {
                Index arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (Index k = 0; k < m; ++k) {
                    double d = (points.row(i) - centers.row(k)).squaredNorm();
                    if (d < bd) bd = d, arg = k;
                }
                dist[static_cast<size_t>(i)] = bd;
                if (assign[static_cast<size_t>(i)] != arg) changed = true;
                assign[static_cast<size_t>(i)] = arg;
            }
            // Repair empty clusters from the worst-served point.
            std::vector<Index> count(static_cast<size_t>(m), 0);
            for (Index k : assign) ++count[static_cast<size_t>(k)];
            for (Index k = 0; k < m; ++k) {
                if (count[static_cast<size_t>(k)] > 0) continue;
                Index far = -1;
                double fd = -1.0;
                for (Index i = 0; i < n; ++i) {
                    if (count[static_cast<size_t>(assign[static_cast<size_t>(i)])] < 2) continue;
                    double d = masses.masses[i] * dist[static_cast<size_t>(i)];
                    if (d > fd) fd = d, far = i;
                }
                --count[static_cast<size_t>(assign[static_cast<size_t>(far)])];
                assign[static_cast<size_t>(far)] = k;
                dist[static_cast<size_t>(far)] = 0.0;
                count[static_cast<size_t>(k)] = 1;
                centers.row(k) = points.row(far);
                changed = true;
            }
            Matrix sum = Matrix::Zero(m, points.cols());
            Vector w = Vector::Zero(m);
            std::vector<Index> cnt(static_cast<size_t>(m), 0);
            for (Index i = 0; i < n; ++i) {
                Index k = assign[static_cast<size_t>(i)];
                sum.row(k) += masses.masses[i] * points.row(i);
                w[k] += masses.masses[i];
                ++cnt[static_cast<size_t>(k)];
            }
            for (Index k = 0; k < m; ++k) {
                if (w[k] > 0.0) {
                    centers.row(k) = sum.row(k) / w[k];
                } else {
                    // zero-mass cluster: plain mean keeps the center defined
                    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
                    for (Index i = 0; i < n; ++i)
                        if (assign[static_cast<size_t>(i)] == k) mean += points.row(i);
                    centers.row(k) = mean / static_cast<double>(cnt[static_cast<size_t>(k)]);
                }
            }
            if (!changed) break;
        }
        ClusterAssignment a = make_assignment(points, masses, assign, m);
        double obj = clustering_objective(points, masses, a);
        if (obj < best_obj) {
            best_obj = obj;
            best = std::move(a);
        }
    }
    return best;
}

KernelPair assignment_to_kernels(const ClusterAssignment& a, const DiscreteMeasure& masses) {
    const auto n = static_cast<Index>(a.assign.size());
    const Index m = a.num_clusters();
    if (masses.size() != n) throw DimensionError("one mass per point required");
    Vector cm = Vector::Zero(m);
    for (Index i = 0; i < n; ++i) {
        Index k = a.assign[static_cast<size_t>(i)];
        if (k < 0 || k >= m) throw DimensionError("cluster label out of range");
        cm[k] += masses.masses[i];
    }
    for (Index k = 0; k < m; ++k)
        if (!(cm[k] > 0.0)) throw DegenerateNeuronError("cluster " + std::to_string(k) + " is empty");
    KernelPair kp;
    kp.a_to_b = Matrix::Zero(m, n);
    kp.b_to_a = Matrix::Zero(n, m);
    for (Index i = 0; i < n; ++i) {
        Index k = a.assign[static_cast<size_t>(i)];
        kp.a_to_b(k, i) = 1.0;
        kp.b_to_a(i, k) = masses.masses[i] / cm[k];
    }
    return kp;
}

BruteForceClustering brute_force_clustering(const Matrix& points, const DiscreteMeasure& masses, Index m) {
    check_inputs(points, masses, m);
    const Index n = points.rows();
    if (n > 10) throw DomainError("brute_force_clustering supports n <= 10");
    BruteForceClustering best{std::numeric_limits<double>::infinity(), {}};
    IndexList rgs(static_cast<size_t>(n), 0);

    auto evaluate = [&](Index blocks) {
        Matrix c = Matrix::Zero(blocks, points.cols());
        Vector w = Vector::Zero(blocks);
        for (Index i = 0; i < n; ++i) {
            c.row(rgs[static_cast<size_t>(i)]) += masses.masses[i] * points.row(i);
            w[rgs[static_cast<size_t>(i)]] += masses.masses[i];
        }
        for (Index k = 0; k < blocks; ++k)
            if (w[k] > 0.0) c.row(k) /= w[k];
        double obj = 0.0;
        for (Index i = 0; i < n; ++i)
            obj += masses.masses[i] * (points.row(i) - c.row(rgs[static_cast<size_t>(i)])).squaredNorm();
        if (obj < best.objective) best = {obj, rgs};
    };

    // Restricted growth strings: rgs[i] <= 1 + max(rgs[0..i-1]).
    auto rec = [&](auto&& self, Index i, Index blocks) -> void {
        if (i == n) {
            evaluate(blocks);
            return;
        }
        for (Index v = 0; v <= blocks && v < m; ++v) {
            rgs[static_cast<size_t>(i)] = v;
            self(self, i + 1, std::max(blocks, v + 1));
        }
    };
    rec(rec, 0, 0);
    return best;
}

}  // namespace partfuse
