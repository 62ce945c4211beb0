#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "partfuse/analysis.hpp"
#include "partfuse/data.hpp"
#include "partfuse/fusion.hpp"
#include "partfuse/genprune.hpp"
#include "partfuse/train.hpp"

namespace partfuse {

namespace {

namespace fs = std::filesystem;

struct DataOptions {
    std::string dataset = "blobs";
    int blob_classes = 10;
    int blob_per_class = 200;
    int blob_dim = 20;
    double blob_spread = 1.0;
    std::uint64_t data_seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--dataset", d.dataset, "mnist or blobs")->check(CLI::IsMember({"mnist", "blobs"}));
    cmd->add_option("--blob-classes", d.blob_classes);
    cmd->add_option("--blob-per-class", d.blob_per_class);
    cmd->add_option("--blob-dim", d.blob_dim);
    cmd->add_option("--blob-spread", d.blob_spread);
    cmd->add_option("--data-seed", d.data_seed);
}

struct Data {
    LabeledDataset train;
    LabeledDataset eval;
};

Data load_data(const DataOptions& d) {
    if (d.dataset == "mnist") {
        if (!mnist_available())
            throw DataError("MNIST files not found under '" + data_dir() +
                            "'; set PARTFUSE_DATA_DIR to the directory holding the IDX files");
        return {load_mnist(true), load_mnist(false)};
    }
    // Blobs: draw twice the samples and hold half out for evaluation.
    LabeledDataset all = synthetic_blobs(d.blob_classes, 2 * d.blob_per_class, d.blob_dim, d.blob_spread, d.data_seed);
    auto [rest, held] = holdout(all, 0.5, d.data_seed);
    return {std::move(rest), std::move(held)};
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (s.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& flag) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DomainError(flag + ": not a number: '" + s + "'");
    }
}

std::vector<double> parse_doubles(const std::string& s, char sep, const std::string& flag) {
    std::vector<double> out;
    for (const auto& t : split(s, sep)) out.push_back(parse_double(t, flag));
    return out;
}

std::vector<Index> parse_widths(const std::string& s, const std::string& flag) {
    std::vector<Index> out;
    for (double v : parse_doubles(s, ',', flag)) {
        if (v < 1 || v != static_cast<double>(static_cast<Index>(v))) throw DomainError(flag + ": widths must be positive integers");
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

struct ManifestEntry {
    std::string path;
    char role = 'A';
    std::uint64_t seed = 0;
};

std::vector<SeedPair> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    fs::path base = fs::path(path).parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string p, role;
        if (!(ls >> p >> role) || role.size() < 3 || (role[0] != 'A' && role[0] != 'B') || role[1] != ':')
            throw ParseError("manifest line " + std::to_string(lineno), "expected '<path> A:<seed>' or '<path> B:<seed>'");
        ManifestEntry e;
        e.path = fs::path(p).is_absolute() ? p : (base / p).string();
        e.role = role[0];
        try {
            e.seed = std::stoull(role.substr(2));
        } catch (const std::exception&) {
            throw ParseError("manifest line " + std::to_string(lineno), "bad seed");
        }
        entries.push_back(e);
    }
    std::vector<SeedPair> pairs;
    for (const auto& e : entries) {
        if (e.role != 'A') continue;
        auto match = std::find_if(entries.begin(), entries.end(),
                                  [&](const ManifestEntry& o) { return o.role == 'B' && o.seed == e.seed; });
        if (match == entries.end()) throw DataError("manifest has no B checkpoint for seed " + std::to_string(e.seed));
        pairs.push_back({e.seed, load(e.path), load(match->path)});
    }
    return pairs;
}

FeatureKind parse_features(const std::string& s) { return s == "activations" ? FeatureKind::ACTIVATIONS : FeatureKind::WEIGHTS; }
AlignKind parse_align(const std::string& s) { return s == "greedy" ? AlignKind::GREEDY : AlignKind::FIXED_POINT; }

void append_record(const std::string& path, const RunRecord& rec) {
    bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    if (fresh) out << sweep_csv_header() << '\n';
    out << to_csv_row(rec) << '\n';
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
    if (path.empty() || path == "-") {
        fallback << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

// ---- commands ----

struct TrainArgs {
    DataOptions data;
    int pairs = 1;
    std::string split_mode = "split";
    int split_digit = 4;
    std::string hidden = "100,100,100";
    std::string activation = "gelu";
    int epochs = 50;
    int batch = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::string out_dir = "checkpoints";
};

int cmd_train(const TrainArgs& t, std::ostream& out) {
    Data d = load_data(t.data);
    std::vector<Index> hidden = parse_widths(t.hidden, "--hidden");
    std::vector<Index> dims{d.train.dim()};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(d.train.num_classes());
    Activation act = parse_activation(t.activation);
    fs::create_directories(t.out_dir);
    std::ostringstream manifest;
    for (int k = 0; k < t.pairs; ++k) {
        std::uint64_t pair_seed = t.seed + static_cast<std::uint64_t>(k);
        LabeledDataset da = d.train, db = d.train;
        if (t.split_mode == "split") {
            std::tie(da, db) = heterogeneous_split(d.train, SplitSpec{t.split_digit, 0.10, pair_seed});
        }
        for (char role : {'A', 'B'}) {
            TrainConfig cfg;
            cfg.epochs = t.epochs;
            cfg.batch_size = t.batch;
            cfg.learning_rate = t.lr;
            cfg.seed = 2 * pair_seed + (role == 'B' ? 1 : 0);
            DenseNetwork net = train_mlp(dims, act, role == 'A' ? da : db, cfg);
            std::string name = "pair" + std::to_string(pair_seed) + (role == 'A' ? "_a.pfnn" : "_b.pfnn");
            save(net, (fs::path(t.out_dir) / name).string());
            manifest << name << ' ' << role << ':' << pair_seed << '\n';
            out << name << " eval_accuracy=" << format_number(evaluate_accuracy(net, d.eval)) << '\n';
        }
    }
    write_text((fs::path(t.out_dir) / "manifest.txt").string(), manifest.str(), out);
    return 0;
}

struct FuseArgs {
    DataOptions data;
    std::string a, b, ensemble;
    std::string alpha = "0";
    double lambda = 0.5;
    bool lambda_weighting = false;
    std::string features = "weights";
    std::string align = "fixed-point";
    std::string method;
    std::string widths;
    int outer_iterations = 10;
    int samples = 1000;
    int restarts = 1000;
    std::uint64_t seed = 0;
    std::string out;
    std::string record;
    bool timing = false;
};

int cmd_fuse(const FuseArgs& f, std::ostream& out) {
    SweepMethod method = parse_sweep_method(f.method);
    std::vector<double> alpha = parse_doubles(f.alpha, ',', "--alpha");
    if (alpha.empty()) throw DomainError("--alpha needs at least one value");
    bool single = !f.ensemble.empty();
    if (single && (!f.a.empty() || !f.b.empty())) throw DomainError("--ensemble excludes --a/--b");
    if (!single && (f.a.empty() || f.b.empty())) throw DomainError("need --a and --b (or --ensemble for pruning)");
    if (single && method == SweepMethod::PARTIAL_FUSION) throw DomainError("partial-ot needs two parents (--a, --b)");
    if (single && f.lambda_weighting) throw DomainError("--lambda-weighting needs provenance; pass --a and --b");
    if (method == SweepMethod::PARTIAL_FUSION && !f.widths.empty())
        throw DomainError("--widths applies to pruning methods only");

    Data d = load_data(f.data);
    const Matrix& act_data = d.train.inputs;
    auto start = std::chrono::steady_clock::now();

    SweepConfig cfg;
    cfg.fusion.features = parse_features(f.features);
    cfg.fusion.align = parse_align(f.align);
    cfg.fusion.outer_iterations = f.outer_iterations;
    cfg.fusion.activation_samples = f.samples;
    cfg.prune.activation_samples = f.samples;
    cfg.prune.ward.restarts = f.restarts;

    RunRecord rec;
    rec.method = sweep_method_name(method);
    rec.alpha = alpha;
    rec.lambda = f.lambda;
    rec.seed = f.seed;
    std::optional<DenseNetwork> result;
    if (!single && f.widths.empty() && (method == SweepMethod::PARTIAL_FUSION || f.lambda_weighting)) {
        SeedPair pair{f.seed, load(f.a), load(f.b)};
        result = cell_network(pair, method, alpha, f.lambda, cfg, act_data);
    } else {
        DenseNetwork e = single ? load(f.ensemble) : make_ensemble(load(f.a), load(f.b), f.lambda);
        std::optional<Provenance> prov;
        if (!single) prov = ensemble_provenance(load(f.a), load(f.b));
        PruneSpec spec = cfg.prune;
        if (!f.widths.empty()) {
            spec.target_widths = parse_widths(f.widths, "--widths");
        } else if (single) {
            throw DomainError("--ensemble needs explicit --widths");
        } else {
            spec.target_widths = pruning_widths(load(f.a), load(f.b), alpha);
        }
        if (f.lambda_weighting) spec.lambda = f.lambda;
        spec.ward.seed = f.seed;
        spec.method = method == SweepMethod::CLUSTER  ? PruneMethod::CLUSTER
                      : method == SweepMethod::PRUNE ? PruneMethod::UNSTRUCTURED
                                                      : PruneMethod::UNSTRUCTURED_POSTPROCESS;
        result = prune(e, spec, act_data, prov ? &*prov : nullptr);
    }
    fill_record(rec, *result, d.eval);
    if (f.timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!f.out.empty()) save(*result, f.out);
    if (!f.record.empty()) append_record(f.record, rec);
    out << sweep_csv_header() << '\n' << to_csv_row(rec) << '\n';
    return 0;
}

struct SweepArgs {
    DataOptions data;
    std::string manifest;
    std::string methods = "partial-ot";
    std::string alphas = "0,0.2,0.4,0.5,0.6,0.8,1";
    std::string lambdas = "0.5";
    std::string features = "weights";
    std::string align = "fixed-point";
    int samples = 1000;
    int restarts = 1000;
    int jobs = 1;
    bool timing = false;
    std::string out;
};

int cmd_sweep(const SweepArgs& s, std::ostream& out) {
    SweepConfig cfg;
    for (const auto& m : split(s.methods, ',')) cfg.methods.push_back(parse_sweep_method(m));
    // Grid entries split on ','; a per-layer entry lists its values with ';'.
    for (const auto& a : split(s.alphas, ',')) cfg.alphas.push_back(parse_doubles(a, ';', "--alphas"));
    cfg.lambdas = parse_doubles(s.lambdas, ',', "--lambdas");
    cfg.fusion.features = parse_features(s.features);
    cfg.fusion.align = parse_align(s.align);
    cfg.fusion.activation_samples = s.samples;
    cfg.prune.activation_samples = s.samples;
    cfg.prune.ward.restarts = s.restarts;
    cfg.jobs = s.jobs;
    cfg.timing = s.timing;
    std::string csv = sweep_csv_header() + "\n";
    bool empty = cfg.methods.empty() || cfg.alphas.empty() || cfg.lambdas.empty();
    if (!empty) {
        std::vector<SeedPair> pairs = read_manifest(s.manifest);
        Data d = load_data(s.data);
        for (const auto& r : tradeoff_sweep(pairs, cfg, d.eval, d.train.inputs)) csv += to_csv_row(r) + "\n";
    }
    write_text(s.out, csv, out);
    return 0;
}

struct StatsArgs {
    DataOptions data;
    std::string a, b;
    int samples = 1000;
    std::string out;
    std::string summary_out;
};

int cmd_stats(const StatsArgs& s, std::ostream& out) {
    DenseNetwork a = load(s.a), b = load(s.b);
    if (a.hidden_layers() != b.hidden_layers()) throw DimensionError("checkpoints differ in depth");
    Data d = load_data(s.data);
    std::string rows = "layer,network,neuron";
    for (const char* n : kStatNames) rows += std::string(",") + n;
    rows += "\n";
    std::string summary = "layer,network,block";
    for (const char* n : kStatNames) summary += std::string(",") + n;
    summary += "\n";
    for (int l = 1; l <= a.hidden_layers(); ++l) {
        SimilarityReport rep = similarity_stats(a, b, d.train.inputs, l, s.samples);
        for (const auto& [name, sim] : {std::pair<const char*, const NetworkSimilarity*>{"A", &rep.a}, {"B", &rep.b}}) {
            for (Index i = 0; i < sim->values[0].size(); ++i) {
                rows += std::to_string(l) + "," + name + "," + std::to_string(i);
                for (const auto& v : sim->values) rows += "," + format_number(v[i]);
                rows += "\n";
            }
            for (const char* block : {"all", "80", "difference"}) {
                summary += std::to_string(l) + "," + name + "," + block;
                for (const auto& st : sim->summary) {
                    double v = std::string(block) == "all" ? st.full : std::string(block) == "80" ? st.conditional80 : st.difference;
                    summary += "," + format_number(v);
                }
                summary += "\n";
            }
        }
    }
    write_text(s.out, rows, out);
    if (!s.summary_out.empty()) write_text(s.summary_out, summary, out);
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
        return 2;
    return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"partial fusion, clustering and pruning of dense networks"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train seeded checkpoint pairs and write a manifest");
    add_data_options(train, ta.data);
    train->add_option("--pairs", ta.pairs)->check(CLI::PositiveNumber);
    train->add_option("--split-mode", ta.split_mode)->check(CLI::IsMember({"split", "full"}));
    train->add_option("--split-digit", ta.split_digit);
    train->add_option("--hidden", ta.hidden, "comma-separated hidden widths");
    train->add_option("--activation", ta.activation)->check(CLI::IsMember({"gelu", "relu", "identity"}));
    train->add_option("--epochs", ta.epochs)->check(CLI::NonNegativeNumber);
    train->add_option("--batch", ta.batch)->check(CLI::PositiveNumber);
    train->add_option("--lr", ta.lr);
    train->add_option("--seed", ta.seed);
    train->add_option("--out", ta.out_dir, "output directory");

    FuseArgs fa_fuse, fa_prune;
    fa_fuse.method = "partial-ot";
    fa_prune.method = "cluster";
    auto fuse_opts = [](CLI::App* cmd, FuseArgs& f) {
        add_data_options(cmd, f.data);
        cmd->add_option("--a", f.a);
        cmd->add_option("--b", f.b);
        cmd->add_option("--ensemble", f.ensemble, "a single network to prune");
        cmd->add_option("--alpha", f.alpha, "scalar or comma list per hidden layer");
        cmd->add_option("--lambda", f.lambda);
        cmd->add_flag("--lambda-weighting", f.lambda_weighting, "weight neurons by parent when pruning");
        cmd->add_option("--features", f.features)->check(CLI::IsMember({"weights", "activations"}));
        cmd->add_option("--align", f.align)->check(CLI::IsMember({"greedy", "fixed-point"}));
        cmd->add_option("--method", f.method)->check(CLI::IsMember({"partial-ot", "cluster", "prune", "prune-post"}));
        cmd->add_option("--widths", f.widths, "target hidden widths for pruning");
        cmd->add_option("--iterations", f.outer_iterations);
        cmd->add_option("--samples", f.samples);
        cmd->add_option("--restarts", f.restarts);
        cmd->add_option("--seed", f.seed);
        cmd->add_option("--out", f.out, "output PFNN file");
        cmd->add_option("--record", f.record, "CSV file to append the run record to");
        cmd->add_flag("--timing", f.timing);
    };
    auto* fuse = app.add_subcommand("fuse", "fuse two checkpoints");
    fuse_opts(fuse, fa_fuse);
    auto* prune_cmd = app.add_subcommand("prune", "prune an ensemble of two checkpoints or a single network");
    fuse_opts(prune_cmd, fa_prune);

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "evaluate a method x alpha x lambda x seed grid");
    add_data_options(sweep, sa.data);
    sweep->add_option("--manifest", sa.manifest);
    sweep->add_option("--methods", sa.methods);
    sweep->add_option("--alphas", sa.alphas, "grid; per-layer entries use ';'");
    sweep->add_option("--lambdas", sa.lambdas);
    sweep->add_option("--features", sa.features)->check(CLI::IsMember({"weights", "activations"}));
    sweep->add_option("--align", sa.align)->check(CLI::IsMember({"greedy", "fixed-point"}));
    sweep->add_option("--samples", sa.samples);
    sweep->add_option("--restarts", sa.restarts);
    sweep->add_option("--jobs", sa.jobs)->check(CLI::PositiveNumber);
    sweep->add_flag("--timing", sa.timing, "fill wall_ms");
    sweep->add_option("--out", sa.out, "CSV path, stdout if omitted");

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "neuron similarity statistics");
    add_data_options(stats, st.data);
    stats->add_option("--a", st.a)->required();
    stats->add_option("--b", st.b)->required();
    stats->add_option("--samples", st.samples);
    stats->add_option("--out", st.out, "per-neuron CSV, stdout if omitted");
    stats->add_option("--summary-out", st.summary_out, "all / 80% / difference summary CSV");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        if (*train) return cmd_train(ta, out);
        if (*fuse) return cmd_fuse(fa_fuse, out);
        if (*prune_cmd) {
            if (fa_prune.method == "partial-ot") throw DomainError("prune: use fuse for partial-ot");
            return cmd_fuse(fa_prune, out);
        }
        if (*sweep) {
            if (sa.manifest.empty() && !sa.alphas.empty()) throw DomainError("sweep needs --manifest");
            return cmd_sweep(sa, out);
        }
        if (*stats) return cmd_stats(st, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 1;
}

}  // namespace partfuse
