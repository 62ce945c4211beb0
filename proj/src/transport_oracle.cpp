#include <cmath>
#include <limits>

#include "partfuse/transport.hpp"

namespace partfuse {

namespace {

// Smallest D <= 10000 for which every mass * D is an integer.
long long small_denominator(const Vector& a, const Vector& b) {
    for (long long d = 1; d <= 10000; ++d) {
        bool ok = true;
        for (Index i = 0; ok && i < a.size(); ++i) ok = std::fabs(a[i] * d - std::round(a[i] * d)) < 1e-9;
        for (Index j = 0; ok && j < b.size(); ++j) ok = std::fabs(b[j] * d - std::round(b[j] * d)) < 1e-9;
        if (ok) return d;
    }
    return 0;
}

struct Search {
    const Matrix& cost;
    Index na, nb;
    std::vector<long long> row_rem, col_rem;
    std::vector<long long> cur, best_plan;
    double best = std::numeric_limits<double>::infinity();
    long long nodes = 0, max_nodes;
    double scale;

    void run(Index cell, double acc) {
        if (++nodes > max_nodes) throw DomainError("brute_force_ot: instance too large");
        if (cell == na * nb) {
            for (long long c : col_rem)
                if (c != 0) return;
            if (acc < best) {
                best = acc;
                best_plan = cur;
            }
            return;
        }
        Index i = cell / nb, j = cell % nb;
        auto& r = row_rem[static_cast<size_t>(i)];
        auto& c = col_rem[static_cast<size_t>(j)];
        long long lo = 0, hi = std::min(r, c);
        if (j == nb - 1) {
            if (r > c) return;
            lo = hi = r;
        }
        for (long long v = lo; v <= hi; ++v) {
            r -= v;
            c -= v;
            cur[static_cast<size_t>(cell)] = v;
            run(cell + 1, acc + static_cast<double>(v) * cost(i, j));
            r += v;
            c += v;
        }
        cur[static_cast<size_t>(cell)] = 0;
    }
};

}  // namespace

BruteForceResult brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost,
                                long long max_nodes) {
    if (cost.rows() != mu.size() || cost.cols() != nu.size()) throw DimensionError("cost shape does not match measures");
    long long d = small_denominator(mu.masses, nu.masses);
    if (d == 0) throw DomainError("brute_force_ot: masses have no small common denominator");
    Search s{cost, mu.size(), nu.size(), {}, {}, {}, {}, std::numeric_limits<double>::infinity(), 0, max_nodes,
             static_cast<double>(d)};
    long long ra = 0, rb = 0;
    for (Index i = 0; i < mu.size(); ++i) s.row_rem.push_back(std::llround(mu.masses[i] * d)), ra += s.row_rem.back();
    for (Index j = 0; j < nu.size(); ++j) s.col_rem.push_back(std::llround(nu.masses[j] * d)), rb += s.col_rem.back();
    if (ra != rb) throw DomainError("brute_force_ot: unbalanced measures");
    s.cur.assign(static_cast<size_t>(s.na * s.nb), 0);
    s.run(0, 0.0);
    BruteForceResult res;
    res.objective = s.best / s.scale;
    res.nodes = s.nodes;
    res.plan = Matrix::Zero(s.na, s.nb);
    for (Index c = 0; c < s.na * s.nb; ++c)
        res.plan(c / s.nb, c % s.nb) = static_cast<double>(s.best_plan[static_cast<size_t>(c)]) / s.scale;
    return res;
}

}  // namespace partfuse
