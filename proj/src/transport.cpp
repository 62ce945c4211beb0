#include "partfuse/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace partfuse {

DiscreteMeasure DiscreteMeasure::uniform(Index n) {
    if (n < 1) throw DomainError("uniform measure needs n >= 1");
    return {Vector::Constant(n, 1.0 / static_cast<double>(n))};
}

KernelPair KernelPair::identity(Index n) {
    return {Matrix::Identity(n, n), Matrix::Identity(n, n)};
}

Matrix cost_matrix(const Matrix& xa, const Matrix& xb) {
    if (xa.cols() != xb.cols())
        throw DimensionError("feature dimensions differ: " + std::to_string(xa.cols()) + " vs " +
                             std::to_string(xb.cols()));
    Matrix c(xa.rows(), xb.rows());
    for (Index i = 0; i < xa.rows(); ++i)
        for (Index j = 0; j < xb.rows(); ++j) c(i, j) = (xa.row(i) - xb.row(j)).squaredNorm();
    return c;
}

double transport_cost(const Matrix& plan, const Matrix& cost) {
    if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) throw DimensionError("plan/cost shape mismatch");
    return plan.cwiseProduct(cost).sum();
}

namespace detail {

namespace {

constexpr long long kMaxDenominator = 10'000'000;
constexpr long long kFallbackDenominator = 1LL << 40;

// Smallest-denominator convergent within tolerance, or 0 if none below the cap.
long long rational_denominator(double x) {
    if (x == 0.0) return 1;
    const double tol = 1e-12 * std::max(1.0, x);
    double r = x;
    long long h0 = 1, h1 = 0, k0 = 0, k1 = 1;  // convergents h/k
    for (int it = 0; it < 64; ++it) {
        double a = std::floor(r);
        if (a > 1e15) break;
        auto ai = static_cast<long long>(a);
        long long h2 = ai * h0 + h1, k2 = ai * k0 + k1;
        if (k2 > kMaxDenominator) return 0;
        h1 = h0;
        h0 = h2;
        k1 = k0;
        k0 = k2;
        if (std::fabs(x - static_cast<double>(h0) / static_cast<double>(k0)) <= tol) return k0;
        double frac = r - a;
        if (frac <= 0.0) break;
        r = 1.0 / frac;
    }
    return 0;
}

}  // namespace

IntegerScaling common_denominator(const std::vector<double>& masses) {
    unsigned __int128 d = 1;
    for (double m : masses) {
        if (!(m >= 0.0) || !std::isfinite(m)) throw DomainError("masses must be finite and nonnegative");
        long long q = rational_denominator(m);
        if (q == 0) return {kFallbackDenominator, false};
        auto g = std::gcd(static_cast<long long>(d), q);
        d = d / static_cast<unsigned __int128>(g) * static_cast<unsigned __int128>(q);
        if (d > static_cast<unsigned __int128>(kFallbackDenominator)) return {kFallbackDenominator, false};
    }
    return {static_cast<long long>(d), true};
}

std::vector<long long> scale_to_integers(const Vector& masses, long long denominator, long long target) {
    const auto n = static_cast<size_t>(masses.size());
    std::vector<long long> out(n);
    std::vector<long double> rem(n);
    long long sum = 0;
    for (size_t i = 0; i < n; ++i) {
        long double v = static_cast<long double>(masses[static_cast<Index>(i)]) * denominator;
        long double fl = std::floor(v + 1e-6L);  // absorb representation error just below an integer
        out[i] = static_cast<long long>(fl);
        rem[i] = v - fl;
        sum += out[i];
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rem[a] > rem[b]; });
    for (size_t k = 0; sum < target; k = (k + 1) % n) {
        ++out[order[k]];
        ++sum;
    }
    for (size_t k = n; sum > target;) {
        k = k == 0 ? n - 1 : k - 1;
        if (out[order[k]] > 0) {
            --out[order[k]];
            --sum;
        }
    }
    return out;
}

std::vector<std::vector<long long>> min_cost_transport(const std::vector<long long>& supply,
                                                       const std::vector<long long>& demand, const Matrix& cost) {
    const auto na = static_cast<Index>(supply.size());
    const auto nb = static_cast<Index>(demand.size());
    // Nodes: 0 = source, 1..na rows, na+1..na+nb columns, na+nb+1 = sink.
    const Index V = na + nb + 2;
    const Index S = 0, T = V - 1;
    auto row = [](Index i) { return 1 + i; };
    auto col = [na](Index j) { return 1 + na + j; };

    std::vector<std::vector<long long>> flow(static_cast<size_t>(na), std::vector<long long>(static_cast<size_t>(nb), 0));
    std::vector<long long> rem_supply(supply), rem_demand(demand);
    std::vector<double> pot(static_cast<size_t>(V), 0.0);
    const double inf = std::numeric_limits<double>::infinity();

    long long remaining = std::accumulate(supply.begin(), supply.end(), 0LL);
    std::vector<double> dist(static_cast<size_t>(V));
    std::vector<Index> parent(static_cast<size_t>(V));
    std::vector<char> done(static_cast<size_t>(V));

    while (remaining > 0) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        dist[S] = 0.0;
        auto relax = [&](Index from, Index to, double c) {
            double nd = dist[from] + std::max(0.0, c + pot[from] - pot[to]);
            if (nd < dist[to]) {
                dist[to] = nd;
                parent[to] = from;
            }
        };
        for (;;) {
            Index u = -1;
            for (Index v = 0; v < V; ++v)
                if (!done[v] && dist[v] < inf && (u < 0 || dist[v] < dist[u])) u = v;
            if (u < 0) break;
            done[u] = 1;
            if (u == T) break;
            if (u == S) {
                for (Index i = 0; i < na; ++i)
                    if (rem_supply[i] > 0) relax(S, row(i), 0.0);
            } else if (u <= na) {
                Index i = u - 1;
                for (Index j = 0; j < nb; ++j)
                    if (!done[col(j)]) relax(u, col(j), cost(i, j));
            } else {
                Index j = u - 1 - na;
                for (Index i = 0; i < na; ++i)
                    if (flow[i][j] > 0 && !done[row(i)]) relax(u, row(i), -cost(i, j));
                if (rem_demand[j] > 0) relax(u, T, 0.0);
            }
        }
        if (!(dist[T] < inf)) throw NumericalError("transport network disconnected");
        for (Index v = 0; v < V; ++v) pot[v] += std::min(dist[v], dist[T]);

        // Bottleneck along the path.
        long long push = std::numeric_limits<long long>::max();
        for (Index v = T; v != S; v = parent[v]) {
            Index u = parent[v];
            if (u == S) push = std::min(push, rem_supply[v - 1]);
            else if (v == T) push = std::min(push, rem_demand[u - 1 - na]);
            else if (u > na) push = std::min(push, flow[v - 1][u - 1 - na]);  // reverse arc col->row
        }
        for (Index v = T; v != S; v = parent[v]) {
            Index u = parent[v];
            if (u == S) rem_supply[v - 1] -= push;
            else if (v == T) rem_demand[u - 1 - na] -= push;
            else if (u <= na) flow[u - 1][v - 1 - na] += push;
            else flow[v - 1][u - 1 - na] -= push;
        }
        remaining -= push;
    }
    return flow;
}

}  // namespace detail

namespace {

void check_measure(const DiscreteMeasure& m, const char* name) {
    if (m.size() < 1) throw DomainError(std::string(name) + " is empty");
    for (Index i = 0; i < m.size(); ++i)
        if (!(m.masses[i] >= 0.0) || !std::isfinite(m.masses[i]))
            throw DomainError(std::string(name) + " has a negative or non-finite mass");
    if (!(m.total() > 0.0)) throw DomainError(std::string(name) + " has zero total mass");
}

Matrix solve_balanced(const Vector& mu, const Vector& nu, const Matrix& cost) {
    std::vector<double> all(mu.data(), mu.data() + mu.size());
    all.insert(all.end(), nu.data(), nu.data() + nu.size());
    all.push_back(mu.sum());
    auto scaling = detail::common_denominator(all);
    const long long D = scaling.denominator;
    const auto target = static_cast<long long>(std::llround(static_cast<long double>(mu.sum()) * D));
    auto supply = detail::scale_to_integers(mu, D, target);
    auto demand = detail::scale_to_integers(nu, D, target);

    Matrix shifted = cost.array() - cost.minCoeff();
    auto flow = detail::min_cost_transport(supply, demand, shifted);
    Matrix plan(mu.size(), nu.size());
    for (Index i = 0; i < mu.size(); ++i)
        for (Index j = 0; j < nu.size(); ++j)
            plan(i, j) = static_cast<double>(flow[static_cast<size_t>(i)][static_cast<size_t>(j)]) / static_cast<double>(D);
    return plan;
}

}  // namespace

Coupling solve_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost) {
    check_measure(mu, "mu");
    check_measure(nu, "nu");
    if (cost.rows() != mu.size() || cost.cols() != nu.size()) throw DimensionError("cost shape does not match measures");
    if (!cost.allFinite()) throw DomainError("cost matrix has non-finite entries");
    if (std::fabs(mu.total() - nu.total()) > 1e-12 * std::max(1.0, mu.total()))
        throw DomainError("unbalanced measures: totals differ");
    return {solve_balanced(mu.masses, nu.masses, cost), mu.masses, nu.masses};
}

PartialCoupling solve_partial_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost,
                                 double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
    if (alpha == 0.0) {
        Coupling c = solve_ot(mu, nu, cost);
        return {c.plan, 0.0, c.row_marginal, c.col_marginal};
    }
    check_measure(mu, "mu");
    check_measure(nu, "nu");
    if (cost.rows() != mu.size() || cost.cols() != nu.size()) throw DimensionError("cost shape does not match measures");
    if (!cost.allFinite()) throw DomainError("cost matrix has non-finite entries");
    if (std::fabs(mu.total() - nu.total()) > 1e-12 * std::max(1.0, mu.total()))
        throw DomainError("unbalanced measures: totals differ");
    if (alpha == 1.0) return {Matrix::Zero(mu.size(), nu.size()), 1.0, mu.masses, nu.masses};

    const Index na = mu.size(), nb = nu.size();
    const double slack = alpha * mu.total();
    Vector ext_mu(na + 1), ext_nu(nb + 1);
    ext_mu << mu.masses, slack;
    ext_nu << nu.masses, slack;
    Matrix shifted = cost.array() - cost.minCoeff();
    Matrix ext = Matrix::Zero(na + 1, nb + 1);
    ext.topLeftCorner(na, nb) = shifted;
    ext(na, nb) = shifted.maxCoeff() + 1.0;
    Matrix plan = solve_balanced(ext_mu, ext_nu, ext);
    return {plan.topLeftCorner(na, nb), alpha, mu.masses, nu.masses};
}

KernelPair coupling_to_kernels(const Coupling& pi) {
    const Matrix& p = pi.plan;
    if (pi.row_marginal.size() != p.rows() || pi.col_marginal.size() != p.cols())
        throw DimensionError("coupling marginals do not match plan shape");
    for (Index i = 0; i < p.rows(); ++i)
        if (!(pi.row_marginal[i] > 0.0))
            throw DegenerateNeuronError("row " + std::to_string(i) + " has zero mass");
    for (Index j = 0; j < p.cols(); ++j)
        if (!(pi.col_marginal[j] > 0.0))
            throw DegenerateNeuronError("column " + std::to_string(j) + " has zero mass");
    KernelPair k;
    k.a_to_b = p.transpose() * pi.row_marginal.cwiseInverse().asDiagonal();
    k.b_to_a = p * pi.col_marginal.cwiseInverse().asDiagonal();
    return k;
}

Coupling restrict_normalize_partial(const PartialCoupling& pi, const IndexList& isolated_a,
                                    const IndexList& isolated_b) {
    const Matrix& p = pi.plan;
    std::vector<char> iso_a(static_cast<size_t>(p.rows()), 0), iso_b(static_cast<size_t>(p.cols()), 0);
    for (Index i : isolated_a) {
        if (i < 0 || i >= p.rows()) throw DimensionError("isolated row index out of range");
        if (p.row(i).sum() > kFeasTol) throw DomainError("isolated row " + std::to_string(i) + " carries mass");
        iso_a[static_cast<size_t>(i)] = 1;
    }
    for (Index j : isolated_b) {
        if (j < 0 || j >= p.cols()) throw DimensionError("isolated column index out of range");
        if (p.col(j).sum() > kFeasTol) throw DomainError("isolated column " + std::to_string(j) + " carries mass");
        iso_b[static_cast<size_t>(j)] = 1;
    }
    IndexList keep_a, keep_b;
    for (Index i = 0; i < p.rows(); ++i)
        if (!iso_a[static_cast<size_t>(i)]) keep_a.push_back(i);
    for (Index j = 0; j < p.cols(); ++j)
        if (!iso_b[static_cast<size_t>(j)]) keep_b.push_back(j);
    Matrix r = select(p, keep_a, keep_b);
    double total = r.sum();
    if (!(total > 0.0)) throw DegenerateNeuronError("restricted coupling carries no mass");
    r /= total;
    return {r, r.rowwise().sum(), r.colwise().sum().transpose()};
}

}  // namespace partfuse
