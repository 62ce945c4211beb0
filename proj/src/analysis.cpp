#include "partfuse/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>
#include <atomic>

namespace partfuse {

ParamReport count_params(const DenseNetwork& net, Index reference_nonzero) {
    ParamReport r;
    for (int l = 0; l <= net.hidden_layers(); ++l) {
        const Matrix& w = net.weight(l);
        LayerCount c{w.size(), static_cast<Index>((w.array() != 0.0).count())};
        r.weights.push_back(c);
        r.total += c.total;
        r.total_nonzero += c.nonzero;
        const Vector& b = net.bias(l);
        r.biases.total += b.size();
        r.biases.nonzero += static_cast<Index>((b.array() != 0.0).count());
    }
    r.total += r.biases.total;
    r.total_nonzero += r.biases.nonzero;
    if (reference_nonzero > 0)
        r.ratio_vs_single = static_cast<double>(r.total_nonzero) / static_cast<double>(reference_nonzero);
    return r;
}

namespace {

// Counts are integral whenever alpha*n is; remove the rounding noise.
double snap(double v) {
    double r = std::round(v);
    return std::abs(v - r) <= 1e-12 * std::max(1.0, std::abs(v)) ? r : v;
}

}  // namespace

CountBounds theoretical_counts(double alpha, double n, double m, CountMethod method) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
    if (!(n >= 1.0 && m >= 1.0)) throw DomainError("layer sizes must be at least 1");
    const double nm = n * m;
    const double balanced = snap(2.0 * ((1.0 + alpha) / 2.0) * ((1.0 + alpha) / 2.0) * nm);
    const double fused = snap((1.0 - alpha * alpha + 2.0 * alpha) * nm);
    switch (method) {
        case CountMethod::PRUNING: return {balanced, snap((1.0 + alpha * alpha) * nm)};
        case CountMethod::CLUSTERING: return {balanced, fused};
        case CountMethod::PARTIAL_FUSION: return {fused, fused};
    }
    throw DomainError("unknown count method");
}

double conditional80_mean(const Vector& values) {
    if (values.size() == 0) return 0.0;
    std::vector<double> v(values.data(), values.data() + values.size());
    std::sort(v.begin(), v.end());
    auto keep = static_cast<size_t>(std::ceil(0.8 * static_cast<double>(v.size()) - 1e-12));
    keep = std::max<size_t>(1, keep);
    double s = 0.0;
    for (size_t i = 0; i < keep; ++i) s += v[i];
    return s / static_cast<double>(keep);
}

namespace {

Matrix distances(const Matrix& x, const Matrix& y) {
    return cost_matrix(x, y).cwiseSqrt();
}

NetworkSimilarity side_stats(const Matrix& own, const Matrix& other) {
    const Index n = own.rows();
    if (n < 2) throw DomainError("within-network statistics need at least two neurons");
    Matrix within = distances(own, own);
    Matrix cross = distances(own, other);
    NetworkSimilarity s;
    for (auto& v : s.values) v.resize(n);
    for (Index i = 0; i < n; ++i) {
        double nn = std::numeric_limits<double>::infinity(), sum = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            nn = std::min(nn, within(i, j));
            sum += within(i, j);
        }
        s.values[static_cast<size_t>(Stat::NN_WITHIN)][i] = nn;
        s.values[static_cast<size_t>(Stat::MEAN_WITHIN)][i] = sum / static_cast<double>(n - 1);
        s.values[static_cast<size_t>(Stat::NN_CROSS)][i] = cross.row(i).minCoeff();
        s.values[static_cast<size_t>(Stat::MEAN_CROSS)][i] = cross.row(i).mean();
    }
    for (size_t k = 0; k < 4; ++k) {
        double full = s.values[k].mean();
        double c80 = conditional80_mean(s.values[k]);
        s.summary[k] = {full, c80, full - c80};
    }
    return s;
}

}  // namespace

SimilarityReport similarity_stats(const DenseNetwork& a, const DenseNetwork& b, const Matrix& data, int layer,
                                  int max_samples) {
    if (layer < 1 || layer > a.hidden_layers() || layer > b.hidden_layers())
        throw DomainError("similarity_stats: layer out of range");
    Matrix fa = features_activation(a, data, layer, max_samples).features;
    Matrix fb = features_activation(b, data, layer, max_samples).features;
    return {layer, side_stats(fa, fb), side_stats(fb, fa)};
}

std::string sweep_method_name(SweepMethod m) {
    switch (m) {
        case SweepMethod::PARTIAL_FUSION: return "partial-ot";
        case SweepMethod::CLUSTER: return "cluster";
        case SweepMethod::PRUNE: return "prune";
        case SweepMethod::PRUNE_POST: return "prune-post";
    }
    return "?";
}

SweepMethod parse_sweep_method(const std::string& name) {
    if (name == "partial-ot") return SweepMethod::PARTIAL_FUSION;
    if (name == "cluster") return SweepMethod::CLUSTER;
    if (name == "prune") return SweepMethod::PRUNE;
    if (name == "prune-post") return SweepMethod::PRUNE_POST;
    throw DomainError("unknown method '" + name + "'");
}

std::vector<Index> pruning_widths(const DenseNetwork& a, const DenseNetwork& b, const std::vector<double>& alpha) {
    const int L = a.hidden_layers();
    if (alpha.size() != 1 && static_cast<int>(alpha.size()) != L) throw DomainError("alpha list length mismatch");
    std::vector<Index> w;
    for (int l = 1; l <= L; ++l) {
        double al = alpha.size() == 1 ? alpha[0] : alpha[static_cast<size_t>(l - 1)];
        if (!(al >= 0.0 && al <= 1.0)) throw DomainError("alpha must lie in [0,1]");
        const Index total = a.width(l) + b.width(l);
        auto m = static_cast<Index>(std::llround((1.0 + al) * static_cast<double>(total) / 2.0));
        w.push_back(std::clamp<Index>(m, 1, total));
    }
    return w;
}

DenseNetwork cell_network(const SeedPair& pair, SweepMethod method, const std::vector<double>& alpha, double lambda,
                          const SweepConfig& cfg, const Matrix& activation_data) {
    if (method == SweepMethod::PARTIAL_FUSION) {
        FusionConfig fc = cfg.fusion;
        fc.lambda = lambda;
        fc.alpha = alpha;
        return partial_fuse(pair.a, pair.b, fc, activation_data);
    }
    DenseNetwork e = make_ensemble(pair.a, pair.b, lambda);
    Provenance prov = ensemble_provenance(pair.a, pair.b);
    PruneSpec spec = cfg.prune;
    spec.target_widths = pruning_widths(pair.a, pair.b, alpha);
    spec.lambda = lambda;
    spec.ward.seed = pair.seed;
    spec.method = method == SweepMethod::CLUSTER  ? PruneMethod::CLUSTER
                  : method == SweepMethod::PRUNE ? PruneMethod::UNSTRUCTURED
                                                  : PruneMethod::UNSTRUCTURED_POSTPROCESS;
    return prune(e, spec, activation_data, &prov);
}

void fill_record(RunRecord& rec, const DenseNetwork& out, const LabeledDataset& eval) {
    rec.accuracy = eval.size() > 0 ? evaluate_accuracy(out, eval) : std::numeric_limits<double>::quiet_NaN();
    ParamReport pr = count_params(out);
    rec.nonzero_params = pr.total_nonzero;
    rec.total_params = pr.total;
    rec.widths.clear();
    for (int l = 1; l <= out.hidden_layers(); ++l) rec.widths.push_back(out.width(l));
}

RunRecord run_cell(const SeedPair& pair, SweepMethod method, const std::vector<double>& alpha, double lambda,
                   const SweepConfig& cfg, const LabeledDataset& eval, const Matrix& activation_data) {
    RunRecord rec;
    rec.method = sweep_method_name(method);
    rec.alpha = alpha;
    rec.lambda = lambda;
    rec.seed = pair.seed;
    auto start = std::chrono::steady_clock::now();
    try {
        fill_record(rec, cell_network(pair, method, alpha, lambda, cfg, activation_data), eval);
    } catch (const Error& e) {
        rec.accuracy = std::numeric_limits<double>::quiet_NaN();
        rec.error = e.what();
    }
    if (cfg.timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<RunRecord> tradeoff_sweep(const std::vector<SeedPair>& pairs, const SweepConfig& cfg,
                                      const LabeledDataset& eval, const Matrix& activation_data) {
    struct Cell {
        SweepMethod method;
        const std::vector<double>* alpha;
        double lambda;
        const SeedPair* pair;
    };
    std::vector<Cell> cells;
    for (SweepMethod m : cfg.methods)
        for (const auto& a : cfg.alphas)
            for (double l : cfg.lambdas)
                for (const auto& p : pairs) cells.push_back({m, &a, l, &p});
    std::vector<RunRecord> out(cells.size());
    auto work = [&](size_t k) {
        const Cell& c = cells[k];
        out[k] = run_cell(*c.pair, c.method, *c.alpha, c.lambda, cfg, eval, activation_data);
    };
    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1 || cells.size() < 2) {
        for (size_t k = 0; k < cells.size(); ++k) work(k);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (size_t k = next++; k < cells.size(); k = next++) work(k);
            });
        for (auto& th : pool) th.join();
    }
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string sweep_csv_header() {
    return "method,alpha,lambda,seed,accuracy,nonzero_params,total_params,widths,wall_ms";
}

std::string to_csv_row(const RunRecord& r) {
    std::string alpha, widths;
    for (size_t k = 0; k < r.alpha.size(); ++k) alpha += (k ? ";" : "") + format_number(r.alpha[k]);
    for (size_t k = 0; k < r.widths.size(); ++k) widths += (k ? ";" : "") + std::to_string(r.widths[k]);
    if (!r.error.empty()) {
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        widths = "error:" + msg;
    }
    return r.method + "," + alpha + "," + format_number(r.lambda) + "," + std::to_string(r.seed) + "," +
           format_number(r.accuracy) + "," + std::to_string(r.nonzero_params) + "," + std::to_string(r.total_params) +
           "," + widths + "," + format_number(r.wall_ms);
}

}  // namespace partfuse
