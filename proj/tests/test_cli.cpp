#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "partfuse/netcore.hpp"

using namespace partfuse;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

const std::vector<std::string> kData{"--blob-classes", "3", "--blob-per-class", "20", "--blob-dim", "4"};

std::vector<std::string> with_data(std::vector<std::string> args) {
    args.insert(args.end(), kData.begin(), kData.end());
    return args;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// Two trained pairs shared by the cases below.
const fs::path& trained() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "partfuse_cli_ckpt";
        fs::remove_all(d);
        Run r = cli(with_data({"train", "--pairs", "2", "--split-mode", "full", "--hidden", "6,5", "--epochs", "3",
                               "--out", d.string()}));
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("partfuse_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("train writes checkpoints and a manifest") {
    const fs::path& d = trained();
    auto m = lines(slurp(d / "manifest.txt"));
    CHECK(m == std::vector<std::string>{"pair0_a.pfnn A:0", "pair0_b.pfnn B:0", "pair1_a.pfnn A:1", "pair1_b.pfnn B:1"});
    DenseNetwork a = load((d / "pair0_a.pfnn").string());
    CHECK(a.input_dim() == 4);
    CHECK(a.width(1) == 6);
    CHECK(a.width(2) == 5);
    CHECK(a.output_dim() == 3);
    CHECK(a.activation() == Activation::GELU);

    fs::path again = scratch("retrain");
    REQUIRE(cli(with_data({"train", "--pairs", "2", "--split-mode", "full", "--hidden", "6,5", "--epochs", "3", "--out",
                           again.string()}))
                .code == 0);
    for (const char* f : {"pair0_a.pfnn", "pair1_b.pfnn", "manifest.txt"}) CHECK(slurp(d / f) == slurp(again / f));
}

TEST_CASE("zero epochs give the initialisation and split mode trains on splits") {
    fs::path d = scratch("init");
    REQUIRE(cli(with_data({"train", "--hidden", "4", "--epochs", "0", "--split-digit", "1", "--out", d.string()})).code == 0);
    DenseNetwork a = load((d / "pair0_a.pfnn").string());
    CHECK(a.bias(0).isZero(0.0));
    CHECK(a.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 8.0));
    CHECK(cli(with_data({"train", "--split-digit", "7", "--epochs", "0", "--out", d.string()})).code == 1);
}

TEST_CASE("fuse at the extremes") {
    const fs::path& d = trained();
    fs::path o = scratch("fuse");
    std::string a = (d / "pair0_a.pfnn").string(), b = (d / "pair0_b.pfnn").string();
    Run r0 = cli(with_data({"fuse", "--a", a, "--b", b, "--alpha", "0", "--out", (o / "f0.pfnn").string()}));
    REQUIRE(r0.code == 0);
    DenseNetwork f0 = load((o / "f0.pfnn").string());
    CHECK(f0.width(1) == 6);
    CHECK(f0.width(2) == 5);
    Run r1 = cli(with_data({"fuse", "--a", a, "--b", b, "--alpha", "1", "--lambda", "0.3", "--out", (o / "f1.pfnn").string()}));
    REQUIRE(r1.code == 0);
    DenseNetwork f1 = load((o / "f1.pfnn").string());
    DenseNetwork e = make_ensemble(load(a), load(b), 0.3);
    Matrix x = Matrix::Random(16, 4);
    CHECK((forward(f1, x) - forward(e, x)).cwiseAbs().maxCoeff() <= 1e-8);
    Run mixed = cli(with_data({"fuse", "--a", a, "--b", b, "--alpha", "1,0", "--out", (o / "m.pfnn").string()}));
    REQUIRE(mixed.code == 0);
    DenseNetwork m = load((o / "m.pfnn").string());
    CHECK(m.width(1) == 12);
    CHECK(m.width(2) == 5);
    auto out = lines(r1.out);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == "method,alpha,lambda,seed,accuracy,nonzero_params,total_params,widths,wall_ms");
    CHECK(out[1].rfind("partial-ot,1,0.3,0,", 0) == 0);
    CHECK(out[1].substr(out[1].size() - 8) == ",12;10,0");
}

TEST_CASE("prune and record") {
    const fs::path& d = trained();
    fs::path o = scratch("prune");
    std::string a = (d / "pair0_a.pfnn").string(), b = (d / "pair0_b.pfnn").string();
    std::string rec = (o / "runs.csv").string();
    for (const char* m : {"cluster", "prune", "prune-post"})
        REQUIRE(cli(with_data({"prune", "--a", a, "--b", b, "--method", m, "--alpha", "0.5", "--restarts", "10",
                               "--record", rec}))
                    .code == 0);
    REQUIRE(cli(with_data({"prune", "--ensemble", a, "--method", "prune", "--widths", "3,2", "--record", rec,
                           "--out", (o / "p.pfnn").string()}))
                .code == 0);
    auto rows = lines(slurp(rec));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].rfind("method,", 0) == 0);
    CHECK(rows[1].rfind("cluster,0.5,", 0) == 0);
    CHECK(rows[1].find(",9;8,") != std::string::npos);
    CHECK(rows[4].find(",3;2,") != std::string::npos);
    CHECK(load((o / "p.pfnn").string()).width(1) == 3);
}

TEST_CASE("usage errors exit with one") {
    const fs::path& d = trained();
    std::string a = (d / "pair0_a.pfnn").string(), b = (d / "pair0_b.pfnn").string();
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"fuse", "--a", a, "--b", b, "--bogus"}).code == 1);
    CHECK(cli({"fuse", "--a", a, "--b", b, "--method", "magic"}).code == 1);
    CHECK(cli({"fuse", "--a", a}).code == 1);
    CHECK(cli({"fuse", "--ensemble", a, "--a", a, "--method", "prune", "--widths", "3,2"}).code == 1);
    CHECK(cli({"fuse", "--ensemble", a}).code == 1);
    CHECK(cli({"prune", "--ensemble", a, "--lambda-weighting", "--widths", "3,2"}).code == 1);
    CHECK(cli({"prune", "--ensemble", a, "--method", "prune"}).code == 1);
    CHECK(cli({"prune", "--a", a, "--b", b, "--method", "partial-ot"}).code == 1);
    CHECK(cli({"fuse", "--a", a, "--b", b, "--widths", "3,2"}).code == 1);
    CHECK(cli(with_data({"fuse", "--a", a, "--b", b, "--alpha", "2"})).code == 1);
    Run r = cli({"fuse", "--a", a, "--b", b, "--alpha", "x"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--alpha") != std::string::npos);
}

TEST_CASE("data and numerical failures") {
    fs::path o = scratch("fail");
    std::string missing = (o / "nope.pfnn").string();
    CHECK(cli({"fuse", "--a", missing, "--b", missing}).code == 2);
    std::ofstream(o / "junk.pfnn") << "junk";
    CHECK(cli({"fuse", "--a", (o / "junk.pfnn").string(), "--b", (o / "junk.pfnn").string()}).code == 2);
    CHECK(cli({"sweep", "--manifest", (o / "none.txt").string()}).code == 2);
    std::ofstream(o / "bad.txt") << "x.pfnn C:0\n";
    CHECK(cli({"sweep", "--manifest", (o / "bad.txt").string()}).code == 2);

    setenv("PARTFUSE_DATA_DIR", o.c_str(), 1);
    Run r = cli({"train", "--dataset", "mnist", "--out", o.string()});
    unsetenv("PARTFUSE_DATA_DIR");
    CHECK(r.code == 2);
    CHECK(r.err.find("PARTFUSE_DATA_DIR") != std::string::npos);

    const fs::path& d = trained();
    std::string a = (d / "pair0_a.pfnn").string();
    fs::path wide = scratch("wide");
    REQUIRE(cli(with_data({"train", "--hidden", "7,5", "--epochs", "0", "--split-mode", "full", "--out", wide.string()})).code == 0);
    CHECK(cli(with_data({"fuse", "--a", a, "--b", (wide / "pair0_a.pfnn").string()})).code == 0);
    fs::path deep = scratch("deep");
    REQUIRE(cli(with_data({"train", "--hidden", "6", "--epochs", "0", "--split-mode", "full", "--out", deep.string()})).code == 0);
    CHECK(cli(with_data({"fuse", "--a", a, "--b", (deep / "pair0_a.pfnn").string()})).code == 2);

    Run blow = cli(with_data({"train", "--hidden", "6", "--epochs", "5", "--lr", "1e300", "--split-mode", "full",
                              "--out", (o / "nan").string()}));
    CHECK(blow.code == 3);
    CHECK(blow.err.find("non-finite") != std::string::npos);
}

TEST_CASE("sweep output is ordered and byte stable") {
    const fs::path& d = trained();
    std::string manifest = (d / "manifest.txt").string();
    std::vector<std::string> args = with_data({"sweep", "--manifest", manifest, "--methods", "partial-ot,prune",
                                               "--alphas", "0,0.5,1;0", "--lambdas", "0.3,0.5", "--restarts", "5"});
    Run one = cli(args);
    REQUIRE(one.code == 0);
    auto rows = lines(one.out);
    REQUIRE(rows.size() == 1 + 2 * 3 * 2 * 2);
    CHECK(rows[1].rfind("partial-ot,0,0.3,0,", 0) == 0);
    CHECK(rows[2].rfind("partial-ot,0,0.3,1,", 0) == 0);
    CHECK(rows[3].rfind("partial-ot,0,0.5,0,", 0) == 0);
    CHECK(rows[9].rfind("partial-ot,1;0,0.3,0,", 0) == 0);
    CHECK(rows[13].rfind("prune,0,", 0) == 0);
    for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].substr(rows[i].size() - 2) == ",0");

    args.push_back("--jobs");
    args.push_back("4");
    CHECK(cli(args).out == one.out);
    fs::path o = scratch("sweep");
    args.push_back("--out");
    args.push_back((o / "s.csv").string());
    REQUIRE(cli(args).code == 0);
    CHECK(slurp(o / "s.csv") == one.out);

    Run timed = cli(with_data({"sweep", "--manifest", manifest, "--alphas", "0", "--timing"}));
    REQUIRE(timed.code == 0);
    auto t = lines(timed.out);
    REQUIRE(t.size() == 3);
    CHECK(t[1].substr(t[1].size() - 2) != ",0");
}

TEST_CASE("empty grid gives a header only") {
    Run r = cli({"sweep", "--alphas", ""});
    CHECK(r.code == 0);
    CHECK(r.out == "method,alpha,lambda,seed,accuracy,nonzero_params,total_params,widths,wall_ms\n");
    const fs::path& d = trained();
    Run m = cli({"sweep", "--manifest", (d / "manifest.txt").string(), "--methods", ""});
    CHECK(m.out == r.out);
}

TEST_CASE("failing sweep cells become error rows") {
    const fs::path& d = trained();
    Run r = cli(with_data({"sweep", "--manifest", (d / "manifest.txt").string(), "--methods", "cluster", "--alphas",
                           "1", "--lambdas", "1", "--restarts", "5"}));
    REQUIRE(r.code == 0);
    auto rows = lines(r.out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].find(",nan,") != std::string::npos);
    CHECK(rows[1].find("error:") != std::string::npos);
}

TEST_CASE("stats rows and summary") {
    const fs::path& d = trained();
    fs::path o = scratch("stats");
    std::string a = (d / "pair0_a.pfnn").string(), b = (d / "pair0_b.pfnn").string();
    REQUIRE(cli(with_data({"stats", "--a", a, "--b", b, "--out", (o / "n.csv").string(), "--summary-out",
                           (o / "s.csv").string()}))
                .code == 0);
    auto rows = lines(slurp(o / "n.csv"));
    CHECK(rows[0] == "layer,network,neuron,nn_within,mean_within,nn_cross,mean_cross");
    CHECK(rows.size() == 1 + 2 * (6 + 5));
    auto sum = lines(slurp(o / "s.csv"));
    REQUIRE(sum.size() == 1 + 2 * 2 * 3);
    for (const auto& l : sum) {
        if (l.find(",difference,") == std::string::npos) continue;
        std::istringstream in(l.substr(l.find(",difference,") + 12));
        for (std::string v; std::getline(in, v, ',');) CHECK(std::stod(v) >= 0.0);
    }

    Run self = cli(with_data({"stats", "--a", a, "--b", a}));
    REQUIRE(self.code == 0);
    auto srows = lines(self.out);
    for (size_t i = 1; i < srows.size(); ++i) {
        std::vector<std::string> cells;
        std::istringstream in(srows[i]);
        for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() == 7);
        CHECK(std::stod(cells[5]) == 0.0);
    }
    CHECK(cli({"stats", "--a", a}).code == 1);
}
