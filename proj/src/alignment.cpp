#include <cmath>

#include "partfuse/fusion.hpp"

namespace partfuse {

namespace {

void check_pair(const DenseNetwork& a, const DenseNetwork& b) {
    if (a.hidden_layers() != b.hidden_layers()) throw DimensionError("networks differ in depth");
    if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim())
        throw DimensionError("networks differ in input or output dimension");
    if (a.activation() != b.activation()) throw DomainError("networks use different activations");
}

PartialCoupling boundary_coupling(Index n) {
    Vector m = Vector::Constant(n, 1.0 / static_cast<double>(n));
    return {Matrix(m.asDiagonal()), 0.0, m, m};
}

// Coupling at layer l in 0..L+1, with identity couplings at the boundaries.
PartialCoupling coupling_at(const DenseNetwork& a, const std::vector<PartialCoupling>& c, int l) {
    if (l == 0 || l == a.hidden_layers() + 1) return boundary_coupling(a.width(l));
    return c[static_cast<size_t>(l - 1)];
}

Matrix kernel_at(const DenseNetwork& a, const std::vector<PartialCoupling>& c, int l) {
    if (l == 0 || l == a.hidden_layers() + 1) return Matrix::Identity(a.width(l), a.width(l));
    return transfer_kernel(c[static_cast<size_t>(l - 1)]);
}

// Coefficient of pi_l[i,j] in the term of W_{l-1}.
Matrix incoming_gain(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c, int l) {
    const Matrix& wa = a.weight(l - 1);
    const Matrix& wb = b.weight(l - 1);
    Matrix x(wa.rows(), wb.cols() + 1), y(wb.rows(), wb.cols() + 1);
    x << wa * kernel_at(a, c, l - 1).transpose(), a.bias(l - 1);
    y << wb, b.bias(l - 1);
    Matrix g = x * y.transpose();
    const Vector& mu = c[static_cast<size_t>(l - 1)].row_marginal;
    const double n_prev = static_cast<double>(a.width(l - 1));
    for (Index i = 0; i < g.rows(); ++i) g.row(i) /= n_prev * mu[i];
    return g;
}

// Coefficient of pi_l[i,j] in the term of W_l.
Matrix outgoing_gain(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c, int l) {
    Matrix z = kernel_at(a, c, l + 1) * a.weight(l);
    Matrix g = z.transpose() * b.weight(l);
    const Vector& mu = c[static_cast<size_t>(l - 1)].row_marginal;
    const double n_here = static_cast<double>(a.width(l));
    for (Index i = 0; i < g.rows(); ++i) g.row(i) /= n_here * mu[i];
    return g;
}

struct Shares {
    Vector f;      // matched fraction of each A neuron
    Vector g;      // matched fraction of each B neuron
    Matrix k_sub;  // pi^T diag(mu)^-1
    Matrix k_b2a;  // pi diag(colsum)^-1, zero columns for unmatched B neurons
};

Shares shares_of(const PartialCoupling& p) {
    Shares s;
    Vector r = p.plan.rowwise().sum();
    Vector cs = p.plan.colwise().sum().transpose();
    s.f = r.cwiseQuotient(p.row_marginal);
    s.g = cs.cwiseQuotient(p.col_marginal);
    s.k_sub = transfer_kernel(p);
    s.k_b2a = Matrix::Zero(p.plan.rows(), p.plan.cols());
    for (Index j = 0; j < p.plan.cols(); ++j)
        if (cs[j] > 0.0) s.k_b2a.col(j) = p.plan.col(j) / cs[j];
    return s;
}

double inv_sq_norm(const Matrix& m) {
    double n = m.squaredNorm();
    return n > 0.0 ? 1.0 / n : 1.0;
}

// Joint-space features over (I^A, F^B, I^B) with fractional shares.
Matrix squared_incoming_cost(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c,
                             int l) {
    Shares s = shares_of(coupling_at(a, c, l - 1));
    const Matrix& wa = a.weight(l - 1);
    const Matrix& wb = b.weight(l - 1);
    const Index pa = wa.cols(), pb = wb.cols();
    Matrix xa = Matrix::Zero(wa.rows(), pa + 2 * pb + 1);
    Matrix xb = Matrix::Zero(wb.rows(), pa + 2 * pb + 1);
    xa.leftCols(pa) = wa * (Vector::Ones(pa) - s.f).asDiagonal();
    xa.middleCols(pa, pb) = wa * s.k_b2a;
    xa.col(pa + 2 * pb) = a.bias(l - 1);
    xb.middleCols(pa, pb) = wb * s.g.asDiagonal();
    xb.middleCols(pa + pb, pb) = wb * (Vector::Ones(pb) - s.g).asDiagonal();
    xb.col(pa + 2 * pb) = b.bias(l - 1);
    Matrix yb(wb.rows(), pb + 1);
    yb << wb, b.bias(l - 1);
    return cost_matrix(xa, xb) * inv_sq_norm(yb);
}

Matrix squared_outgoing_cost(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c,
                             int l) {
    Shares s = shares_of(coupling_at(a, c, l + 1));
    const Matrix& wa = a.weight(l);
    const Matrix& wb = b.weight(l);
    const Index qa = wa.rows(), qb = wb.rows();
    Matrix xa = Matrix::Zero(wa.cols(), qa + 2 * qb);
    Matrix xb = Matrix::Zero(wb.cols(), qa + 2 * qb);
    xa.leftCols(qa) = ((Vector::Ones(qa) - s.f).asDiagonal() * wa).transpose();
    xa.middleCols(qa, qb) = (s.k_sub * wa).transpose();
    xb.middleCols(qa, qb) = (s.g.asDiagonal() * wb).transpose();
    xb.middleCols(qa + qb, qb) = ((Vector::Ones(qb) - s.g).asDiagonal() * wb).transpose();
    return cost_matrix(xa, xb) * inv_sq_norm(wb);
}

DiscreteMeasure uniform_at(const DenseNetwork& n, int l) { return DiscreteMeasure::uniform(n.width(l)); }

PartialCoupling product_coupling(const DenseNetwork& a, const DenseNetwork& b, int l, double alpha) {
    DiscreteMeasure mu = uniform_at(a, l), nu = uniform_at(b, l);
    return {(1.0 - alpha) * mu.masses * nu.masses.transpose(), alpha, mu.masses, nu.masses};
}

enum class Terms { IN, OUT, BOTH };

Matrix step_cost(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c, int l,
                 Terms terms, CostForm form) {
    Matrix cost = Matrix::Zero(a.width(l), b.width(l));
    bool in = terms != Terms::OUT, out = terms != Terms::IN;
    if (form == CostForm::INNER_PRODUCT) {
        if (in) cost -= incoming_gain(a, b, c, l);
        if (out) cost -= outgoing_gain(a, b, c, l);
    } else {
        if (in) cost += squared_incoming_cost(a, b, c, l);
        if (out) cost += squared_outgoing_cost(a, b, c, l);
    }
    return cost;
}

PartialCoupling solve_layer(const DenseNetwork& a, const DenseNetwork& b, int l, const Matrix& cost, double alpha) {
    return solve_partial_ot(uniform_at(a, l), uniform_at(b, l), cost, alpha);
}

}  // namespace

Matrix transfer_kernel(const PartialCoupling& pi) {
    return pi.plan.transpose() * pi.row_marginal.cwiseInverse().asDiagonal();
}

double alignment_objective(const DenseNetwork& a, const DenseNetwork& b, const std::vector<PartialCoupling>& c) {
    check_pair(a, b);
    const int L = a.hidden_layers();
    if (static_cast<int>(c.size()) != L) throw DimensionError("one coupling per hidden layer required");
    double total = 0.0;
    for (int l = 0; l <= L; ++l) {
        Matrix x(a.weight(l).rows(), b.width(l) + 1), y(b.weight(l).rows(), b.width(l) + 1);
        x << a.weight(l) * kernel_at(a, c, l).transpose(), a.bias(l);
        y << b.weight(l), b.bias(l);
        total += (kernel_at(a, c, l + 1) * x).cwiseProduct(y).sum() / static_cast<double>(a.width(l));
    }
    return total;
}

Alignment greedy_align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg, const Matrix& data) {
    check_pair(a, b);
    const int L = a.hidden_layers();
    cfg.validate(L);
    Alignment out;
    out.couplings.resize(static_cast<size_t>(L));
    for (int l = 1; l <= L; ++l) out.couplings[static_cast<size_t>(l - 1)] = product_coupling(a, b, l, cfg.alpha_at(l));

    if (cfg.features == FeatureKind::ACTIVATIONS) {
        if (data.rows() < 1) throw DomainError("activation features need sample data");
        for (int l = 1; l <= L; ++l) {
            auto fa = features_activation(a, data, l, cfg.activation_samples);
            auto fb = features_activation(b, data, l, cfg.activation_samples);
            out.couplings[static_cast<size_t>(l - 1)] =
                solve_partial_ot(fa.masses, fb.masses, cost_matrix(fa.features, fb.features), cfg.alpha_at(l));
        }
    } else if (cfg.greedy_direction == GreedyDirection::INCOMING) {
        for (int l = 1; l <= L; ++l) {
            Matrix cost = step_cost(a, b, out.couplings, l, l == L ? Terms::BOTH : Terms::IN, cfg.cost_form);
            out.couplings[static_cast<size_t>(l - 1)] = solve_layer(a, b, l, cost, cfg.alpha_at(l));
        }
    } else {
        for (int l = L; l >= 1; --l) {
            Matrix cost = step_cost(a, b, out.couplings, l, l == 1 ? Terms::BOTH : Terms::OUT, cfg.cost_form);
            out.couplings[static_cast<size_t>(l - 1)] = solve_layer(a, b, l, cost, cfg.alpha_at(l));
        }
    }
    out.objective_trace.push_back(alignment_objective(a, b, out.couplings));
    out.sweeps = 1;
    out.converged = true;
    return out;
}

Alignment fixed_point_align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg) {
    check_pair(a, b);
    const int L = a.hidden_layers();
    cfg.validate(L);
    if (cfg.features != FeatureKind::WEIGHTS) throw DomainError("fixed-point alignment needs weight features");
    Alignment out;
    if (cfg.init == FixedPointInit::GREEDY) {
        out.couplings = greedy_align(a, b, cfg).couplings;
    } else {
        for (int l = 1; l <= L; ++l) out.couplings.push_back(product_coupling(a, b, l, cfg.alpha_at(l)));
    }
    out.objective_trace.push_back(alignment_objective(a, b, out.couplings));
    for (int sweep = 0; sweep < cfg.outer_iterations; ++sweep) {
        bool changed = false;
        for (int l = 1; l <= L; ++l) {
            Matrix cost = step_cost(a, b, out.couplings, l, Terms::BOTH, cfg.cost_form);
            PartialCoupling next = solve_layer(a, b, l, cost, cfg.alpha_at(l));
            auto& cur = out.couplings[static_cast<size_t>(l - 1)];
            if (next.plan != cur.plan) changed = true;
            cur = std::move(next);
            out.objective_trace.push_back(alignment_objective(a, b, out.couplings));
        }
        out.sweeps = sweep + 1;
        if (!changed) {
            out.converged = true;
            break;
        }
    }
    return out;
}

Alignment align(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg, const Matrix& data) {
    if (cfg.align == AlignKind::FIXED_POINT) return fixed_point_align(a, b, cfg);
    return greedy_align(a, b, cfg, data);
}

}  // namespace partfuse
