#include <algorithm>

#include "partfuse/fusion.hpp"

namespace partfuse {

namespace {

LayerPlan boundary_plan(Index n) {
    LayerPlan p;
    p.fused_a = iota_list(n);
    p.fused_b = iota_list(n);
    p.kernels = KernelPair::identity(n);
    return p;
}

void check_pair(const DenseNetwork& a, const DenseNetwork& b) {
    if (a.hidden_layers() != b.hidden_layers()) throw DimensionError("networks differ in depth");
    if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim())
        throw DimensionError("networks differ in input or output dimension");
    if (a.activation() != b.activation()) throw DomainError("networks use different activations");
}

void check_partition(const IndexList& iso, const IndexList& fused, Index n, const char* side) {
    std::vector<int> seen(static_cast<size_t>(n), 0);
    for (Index i : iso) {
        if (i < 0 || i >= n) throw DimensionError(std::string("plan index out of range on side ") + side);
        ++seen[static_cast<size_t>(i)];
    }
    for (Index i : fused) {
        if (i < 0 || i >= n) throw DimensionError(std::string("plan index out of range on side ") + side);
        ++seen[static_cast<size_t>(i)];
    }
    for (int s : seen)
        if (s != 1) throw DimensionError(std::string("isolated and fused sets do not partition side ") + side);
}

}  // namespace

void validate_plan(const LayerPlan& p, Index n_a, Index n_b) {
    check_partition(p.isolated_a, p.fused_a, n_a, "A");
    check_partition(p.isolated_b, p.fused_b, n_b, "B");
    auto fa = static_cast<Index>(p.fused_a.size()), fb = static_cast<Index>(p.fused_b.size());
    if (p.kernels.a_to_b.rows() != fb || p.kernels.a_to_b.cols() != fa || p.kernels.b_to_a.rows() != fa ||
        p.kernels.b_to_a.cols() != fb)
        throw DimensionError("plan kernels do not match the fused sets");
}

DenseNetwork split_partial_neuron(const DenseNetwork& net, int layer, Index neuron, double kappa, double mass) {
    if (layer < 1 || layer > net.hidden_layers()) throw DomainError("split: hidden layer out of range");
    if (neuron < 0 || neuron >= net.width(layer)) throw DomainError("split: neuron out of range");
    if (!(kappa > 0.0 && kappa < mass)) throw DomainError("split: matched mass must lie strictly inside (0, mass)");
    std::vector<Matrix> ws = net.weights();
    std::vector<Vector> bs = net.biases();
    auto l = static_cast<size_t>(layer);
    const double keep = kappa / mass, rest = (mass - kappa) / mass;
    Matrix& win = ws[l - 1];
    Vector& bin = bs[l - 1];
    const Index n = win.rows();
    Matrix w2(n + 1, win.cols());
    w2.topRows(n) = win;
    w2.row(n) = rest * win.row(neuron);
    w2.row(neuron) *= keep;
    Vector b2(n + 1);
    b2.head(n) = bin;
    b2[n] = rest * bin[neuron];
    b2[neuron] *= keep;
    win = std::move(w2);
    bin = std::move(b2);
    Matrix& wout = ws[l];
    Matrix w3(wout.rows(), n + 1);
    w3.leftCols(n) = wout;
    w3.col(n) = wout.col(neuron);
    wout = std::move(w3);
    return DenseNetwork(net.activation(), std::move(ws), std::move(bs));
}

PreparedFusion prepare_partial_fusion(const DenseNetwork& a, const DenseNetwork& b, const Alignment& alignment) {
    check_pair(a, b);
    const int L = a.hidden_layers();
    if (static_cast<int>(alignment.couplings.size()) != L) throw DimensionError("one coupling per hidden layer required");
    PreparedFusion prep{a, b, {}};
    prep.plan.layers.resize(static_cast<size_t>(L + 2));
    prep.plan.layers[0] = boundary_plan(a.input_dim());
    prep.plan.layers[static_cast<size_t>(L + 1)] = boundary_plan(a.output_dim());

    for (int l = 1; l <= L; ++l) {
        const PartialCoupling& pc = alignment.couplings[static_cast<size_t>(l - 1)];
        const Index na = a.width(l), nb = b.width(l);
        if (pc.plan.rows() != na || pc.plan.cols() != nb) throw DimensionError("coupling shape does not match layer");
        Vector r = pc.plan.rowwise().sum();
        Vector c = pc.plan.colwise().sum().transpose();
        LayerPlan& lp = prep.plan.layers[static_cast<size_t>(l)];
        Matrix ext = pc.plan;

        for (Index i = 0; i < na; ++i) {
            double mu = pc.row_marginal[i];
            if (r[i] <= kFractionalThreshold * mu) {
                lp.isolated_a.push_back(i);
            } else if (r[i] >= mu * (1.0 - kFractionalThreshold)) {
                lp.fused_a.push_back(i);
            } else {
                Index fresh = prep.a.width(l);
                prep.a = split_partial_neuron(prep.a, l, i, r[i], mu);
                prep.plan.splits.push_back({'A', l, i, fresh, r[i], mu});
                lp.fused_a.push_back(i);
                lp.isolated_a.push_back(fresh);
                ext.conservativeResize(ext.rows() + 1, Eigen::NoChange);
                ext.row(ext.rows() - 1).setZero();
            }
        }
        for (Index j = 0; j < nb; ++j) {
            double nu = pc.col_marginal[j];
            if (c[j] <= kFractionalThreshold * nu) {
                lp.isolated_b.push_back(j);
            } else if (c[j] >= nu * (1.0 - kFractionalThreshold)) {
                lp.fused_b.push_back(j);
            } else {
                Index fresh = prep.b.width(l);
                prep.b = split_partial_neuron(prep.b, l, j, c[j], nu);
                prep.plan.splits.push_back({'B', l, j, fresh, c[j], nu});
                lp.fused_b.push_back(j);
                lp.isolated_b.push_back(fresh);
                ext.conservativeResize(Eigen::NoChange, ext.cols() + 1);
                ext.col(ext.cols() - 1).setZero();
            }
        }
        std::sort(lp.isolated_a.begin(), lp.isolated_a.end());
        std::sort(lp.isolated_b.begin(), lp.isolated_b.end());

        if (lp.fused_a.empty() || lp.fused_b.empty()) {
            // Nothing matched: the whole layer stays isolated.
            for (Index i : lp.fused_a) lp.isolated_a.push_back(i);
            for (Index j : lp.fused_b) lp.isolated_b.push_back(j);
            lp.fused_a.clear();
            lp.fused_b.clear();
            std::sort(lp.isolated_a.begin(), lp.isolated_a.end());
            std::sort(lp.isolated_b.begin(), lp.isolated_b.end());
            lp.kernels = {Matrix(0, 0), Matrix(0, 0)};
            continue;
        }
        PartialCoupling extended{ext, pc.alpha, Vector(), Vector()};
        Coupling restricted = restrict_normalize_partial(extended, lp.isolated_a, lp.isolated_b);
        lp.kernels = coupling_to_kernels(restricted);
    }
    return prep;
}

LayerBlocks assemble_partial_layer(const Matrix& w_a, const Vector& b_a, const Matrix& w_b, const Vector& b_b,
                                   const LayerPlan& in, const LayerPlan& out, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    validate_plan(in, w_a.cols(), w_b.cols());
    validate_plan(out, w_a.rows(), w_b.rows());
    if (b_a.size() != w_a.rows() || b_b.size() != w_b.rows()) throw DimensionError("bias length mismatch");

    const auto ia = static_cast<Index>(in.isolated_a.size()), fb = static_cast<Index>(in.fused_b.size()),
               ib = static_cast<Index>(in.isolated_b.size());
    const auto oia = static_cast<Index>(out.isolated_a.size()), ofb = static_cast<Index>(out.fused_b.size()),
               oib = static_cast<Index>(out.isolated_b.size());
    const Matrix& k_out = out.kernels.a_to_b;  // |F'^B| x |F'^A|
    const Matrix& k_in = in.kernels.b_to_a;    // |F^A| x |F^B|

    LayerBlocks lb;
    lb.weight = Matrix::Zero(oia + ofb + oib, ia + fb + ib);
    lb.bias = Vector::Zero(oia + ofb + oib);

    // rows from I'^A
    lb.weight.block(0, 0, oia, ia) = select(w_a, out.isolated_a, in.isolated_a);
    lb.weight.block(0, ia, oia, fb) = select(w_a, out.isolated_a, in.fused_a) * k_in;
    // rows into the fused part carry the lambda weighting
    lb.weight.block(oia, 0, ofb, ia) = lambda * (k_out * select(w_a, out.fused_a, in.isolated_a));
    lb.weight.block(oia, ia, ofb, fb) = (1.0 - lambda) * select(w_b, out.fused_b, in.fused_b) +
                                        lambda * (k_out * select(w_a, out.fused_a, in.fused_a) * k_in);
    lb.weight.block(oia, ia + fb, ofb, ib) = (1.0 - lambda) * select(w_b, out.fused_b, in.isolated_b);
    // rows from I'^B
    lb.weight.block(oia + ofb, ia, oib, fb) = select(w_b, out.isolated_b, in.fused_b);
    lb.weight.block(oia + ofb, ia + fb, oib, ib) = select(w_b, out.isolated_b, in.isolated_b);

    lb.bias.head(oia) = select(b_a, out.isolated_a);
    lb.bias.segment(oia, ofb) = (1.0 - lambda) * select(b_b, out.fused_b) + lambda * (k_out * select(b_a, out.fused_a));
    lb.bias.tail(oib) = select(b_b, out.isolated_b);
    return lb;
}

DenseNetwork assemble_partial_network(const PreparedFusion& prep, double lambda) {
    const int L = prep.a.hidden_layers();
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (int l = 0; l <= L; ++l) {
        LayerBlocks lb = assemble_partial_layer(prep.a.weight(l), prep.a.bias(l), prep.b.weight(l), prep.b.bias(l),
                                                prep.plan.layers[static_cast<size_t>(l)],
                                                prep.plan.layers[static_cast<size_t>(l + 1)], lambda);
        ws.push_back(std::move(lb.weight));
        bs.push_back(std::move(lb.bias));
    }
    return DenseNetwork(prep.a.activation(), std::move(ws), std::move(bs));
}

DenseNetwork partial_fuse(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg, const Matrix& data) {
    check_pair(a, b);
    cfg.validate(a.hidden_layers());
    Alignment al = align(a, b, cfg, data);
    return assemble_partial_network(prepare_partial_fusion(a, b, al), cfg.lambda);
}

DenseNetwork fuse_with_kernels(const DenseNetwork& a, const DenseNetwork& b, const std::vector<KernelPair>& kernels,
                               double lambda) {
    check_pair(a, b);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0,1]");
    const int L = a.hidden_layers();
    if (static_cast<int>(kernels.size()) != L) throw DimensionError("one kernel pair per hidden layer required");
    auto fwd = [&](int l) -> Matrix {
        if (l == L + 1) return Matrix::Identity(a.output_dim(), a.output_dim());
        return kernels[static_cast<size_t>(l - 1)].a_to_b;
    };
    auto back = [&](int l) -> Matrix {
        if (l == 0) return Matrix::Identity(a.input_dim(), a.input_dim());
        return kernels[static_cast<size_t>(l - 1)].b_to_a;
    };
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (int l = 0; l <= L; ++l) {
        Matrix kf = fwd(l + 1), kb = back(l);
        if (kf.rows() != b.weight(l).rows() || kf.cols() != a.weight(l).rows() || kb.rows() != a.weight(l).cols() ||
            kb.cols() != b.weight(l).cols())
            throw DimensionError("kernel shapes do not match layer " + std::to_string(l));
        ws.push_back((1.0 - lambda) * b.weight(l) + lambda * (kf * a.weight(l) * kb));
        bs.push_back((1.0 - lambda) * b.bias(l) + lambda * (kf * a.bias(l)));
    }
    return DenseNetwork(b.activation(), std::move(ws), std::move(bs));
}

DenseNetwork ot_fuse(const DenseNetwork& a, const DenseNetwork& b, const FusionConfig& cfg, const Matrix& data) {
    check_pair(a, b);
    FusionConfig full = cfg;
    full.alpha = {0.0};
    full.validate(a.hidden_layers());
    Alignment al = align(a, b, full, data);
    std::vector<KernelPair> kernels;
    for (const auto& pc : al.couplings) kernels.push_back(coupling_to_kernels({pc.plan, pc.row_marginal, pc.col_marginal}));
    return fuse_with_kernels(a, b, kernels, cfg.lambda);
}

}  // namespace partfuse
