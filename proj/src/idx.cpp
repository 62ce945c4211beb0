#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "partfuse/data.hpp"

namespace partfuse {

namespace {

std::string read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw DataError("cannot open '" + path + "'");
    std::string out;
    char buf[1 << 16];
    for (;;) {
        int n = gzread(f, buf, sizeof buf);
        if (n < 0) {
            gzclose(f);
            throw ParseError(path, "decompression failed");
        }
        if (n == 0) break;
        out.append(buf, static_cast<size_t>(n));
    }
    gzclose(f);
    return out;
}

std::uint32_t be32(const std::string& b, size_t off, const std::string& field) {
    if (b.size() < off + 4) throw ParseError(field, "file truncated");
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3]));
}

void put_be32(std::ofstream& f, std::uint32_t v) {
    char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
    f.write(b, 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::string img = read_all(images_path);
    std::string lab = read_all(labels_path);
    if (be32(img, 0, "images magic") != 0x00000803) throw ParseError("images magic", "expected 0x00000803");
    if (be32(lab, 0, "labels magic") != 0x00000801) throw ParseError("labels magic", "expected 0x00000801");
    std::uint32_t count = be32(img, 4, "images count");
    std::uint32_t rows = be32(img, 8, "images rows");
    std::uint32_t cols = be32(img, 12, "images cols");
    std::uint32_t lcount = be32(lab, 4, "labels count");
    if (count != lcount)
        throw ParseError("count", "images hold " + std::to_string(count) + " samples, labels " + std::to_string(lcount));
    const size_t dim = static_cast<size_t>(rows) * cols;
    if (img.size() < 16 + static_cast<size_t>(count) * dim) throw ParseError("images payload", "file truncated");
    if (lab.size() < 8 + static_cast<size_t>(count)) throw ParseError("labels payload", "file truncated");
    LabeledDataset d;
    d.inputs.resize(count, static_cast<Index>(dim));
    d.labels.resize(count);
    for (size_t i = 0; i < count; ++i) {
        for (size_t k = 0; k < dim; ++k)
            d.inputs(static_cast<Index>(i), static_cast<Index>(k)) =
                static_cast<unsigned char>(img[16 + i * dim + k]) / 255.0;
        d.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    }
    return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const LabeledDataset& data,
               std::uint32_t rows, std::uint32_t cols) {
    if (static_cast<Index>(rows) * cols != data.dim()) throw DimensionError("rows*cols must equal the input width");
    std::ofstream fi(images_path, std::ios::binary), fl(labels_path, std::ios::binary);
    if (!fi || !fl) throw DataError("cannot open IDX output files");
    put_be32(fi, 0x00000803);
    put_be32(fi, static_cast<std::uint32_t>(data.size()));
    put_be32(fi, rows);
    put_be32(fi, cols);
    for (Index i = 0; i < data.size(); ++i)
        for (Index k = 0; k < data.dim(); ++k) {
            double v = std::clamp(data.inputs(i, k), 0.0, 1.0);
            fi.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    put_be32(fl, 0x00000801);
    put_be32(fl, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) fl.put(static_cast<char>(static_cast<unsigned char>(y)));
    if (!fi || !fl) throw DataError("IDX write failed");
}

std::string data_dir() {
    const char* env = std::getenv("PARTFUSE_DATA_DIR");
    return env != nullptr && *env != '\0' ? std::string(env) : std::string("data");
}

namespace {

std::string find_file(const std::string& dir, const std::string& stem) {
    namespace fs = std::filesystem;
    for (const std::string& name : {stem, stem + ".gz"}) {
        fs::path p = fs::path(dir) / name;
        if (fs::exists(p)) return p.string();
    }
    return "";
}

std::string alt_stem(const std::string& stem) {
    // Some mirrors use "idx3.ubyte" instead of "idx3-ubyte".
    std::string s = stem;
    auto pos = s.rfind("-ubyte");
    if (pos != std::string::npos) s[pos] = '.';
    return s;
}

}  // namespace

bool mnist_available(const std::string& dir) {
    for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                             "t10k-labels-idx1-ubyte"})
        if (find_file(dir, stem).empty() && find_file(dir, alt_stem(stem)).empty()) return false;
    return true;
}

LabeledDataset load_mnist(bool train, const std::string& dir) {
    std::string prefix = train ? "train" : "t10k";
    auto locate = [&](const std::string& stem) {
        std::string p = find_file(dir, stem);
        if (p.empty()) p = find_file(dir, alt_stem(stem));
        if (p.empty())
            throw DataError("MNIST file '" + stem + "' not found in '" + dir +
                            "'; set PARTFUSE_DATA_DIR to the directory holding the IDX files");
        return p;
    };
    return load_idx(locate(prefix + "-images-idx3-ubyte"), locate(prefix + "-labels-idx1-ubyte"));
}

}  // namespace partfuse
