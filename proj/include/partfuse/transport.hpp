#pragma once

#include "partfuse/error.hpp"
#include "partfuse/linalg.hpp"

namespace partfuse {

struct DiscreteMeasure {
    Vector masses;

    double total() const { return masses.sum(); }
    Index size() const { return masses.size(); }
    static DiscreteMeasure uniform(Index n);
};

struct Coupling {
    Matrix plan;  // n_A x n_B
    Vector row_marginal;
    Vector col_marginal;
};

struct PartialCoupling {
    Matrix plan;
    double alpha = 0.0;
    Vector row_marginal;
    Vector col_marginal;
};

// a_to_b is n_B x n_A, b_to_a is n_A x n_B; both column-stochastic.
struct KernelPair {
    Matrix a_to_b;
    Matrix b_to_a;

    static KernelPair identity(Index n);
};

constexpr double kFeasTol = 1e-9;

// Row i of xa against row j of xb, squared Euclidean distance.
Matrix cost_matrix(const Matrix& xa, const Matrix& xb);

double transport_cost(const Matrix& plan, const Matrix& cost);

Coupling solve_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost);

PartialCoupling solve_partial_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost,
                                 double alpha);

KernelPair coupling_to_kernels(const Coupling& pi);

Coupling restrict_normalize_partial(const PartialCoupling& pi, const IndexList& isolated_a,
                                    const IndexList& isolated_b);

struct BruteForceResult {
    double objective = 0.0;
    Matrix plan;
    long long nodes = 0;
};

// Exhaustive search over integral transport plans. Throws DomainError if the
// instance needs more than max_nodes search nodes or the masses have no
// small common denominator.
BruteForceResult brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Matrix& cost,
                                long long max_nodes = 20'000'000);

namespace detail {

// Common integer scale for a set of masses. Returns D and the integer
// amounts; exact when every mass is a rational with a modest denominator.
struct IntegerScaling {
    long long denominator = 1;
    bool exact = true;
};
IntegerScaling common_denominator(const std::vector<double>& masses);
std::vector<long long> scale_to_integers(const Vector& masses, long long denominator, long long target);

// Integral transportation by successive shortest paths. supply and demand
// must have equal sums; cost must be nonnegative.
std::vector<std::vector<long long>> min_cost_transport(const std::vector<long long>& supply,
                                                       const std::vector<long long>& demand, const Matrix& cost);

}  // namespace detail

}  // namespace partfuse
