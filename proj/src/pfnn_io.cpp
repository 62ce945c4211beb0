#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "partfuse/netcore.hpp"

namespace partfuse {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& out, double x) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& b) : buf_(b) {}

    size_t remaining() const { return buf_.size() - pos_; }

    void need(size_t n, const std::string& field) const {
        if (remaining() < n) throw ParseError(field, "file truncated");
    }

    std::uint8_t u8(const std::string& field) {
        need(1, field);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }

    std::uint32_t u32(const std::string& field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + k])) << (8 * k);
        pos_ += 4;
        return v;
    }

    double f64(const std::string& field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + k])) << (8 * k);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string bytes(size_t n, const std::string& field) {
        need(n, field);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    const std::string& buf_;
    size_t pos_ = 0;
};

}  // namespace

std::string serialize(const DenseNetwork& net) {
    std::string out = "PFNN";
    put_u32(out, kVersion);
    out.push_back(static_cast<char>(net.activation()));
    put_u32(out, static_cast<std::uint32_t>(net.hidden_layers()));
    for (Index d : net.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (int l = 0; l <= net.hidden_layers(); ++l) {
        const Matrix& w = net.weight(l);
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
        for (Index r = 0; r < w.rows(); ++r) put_f64(out, net.bias(l)[r]);
    }
    return out;
}

DenseNetwork deserialize(const std::string& bytes) {
    Reader in(bytes);
    if (in.bytes(4, "magic") != "PFNN") throw ParseError("magic", "expected 'PFNN'");
    std::uint32_t version = in.u32("version");
    if (version != kVersion) throw ParseError("version", "unsupported version " + std::to_string(version));
    std::uint8_t code = in.u8("activation");
    if (code > 2) throw ParseError("activation", "unknown activation code " + std::to_string(code));
    std::uint32_t L = in.u32("L");
    if (L < 1) throw ParseError("L", "need at least one hidden layer");
    if (static_cast<size_t>(L) + 2 > in.remaining() / 4) throw ParseError("dims", "file truncated");
    std::vector<Index> dims;
    for (std::uint32_t k = 0; k < L + 2; ++k) {
        std::string field = "dims[" + std::to_string(k) + "]";
        std::uint32_t d = in.u32(field);
        if (d == 0) throw ParseError(field, "zero width");
        dims.push_back(static_cast<Index>(d));
    }
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (std::uint32_t l = 0; l <= L; ++l) {
        Index rows = dims[l + 1], cols = dims[l];
        std::string wf = "weights[" + std::to_string(l) + "]";
        std::string bf = "biases[" + std::to_string(l) + "]";
        // Check size before allocating so a corrupt header cannot request a huge buffer.
        if (static_cast<double>(rows) * static_cast<double>(cols) * 8.0 > static_cast<double>(in.remaining()))
            throw ParseError(wf, "file truncated");
        Matrix w(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) w(r, c) = in.f64(wf);
        Vector b(rows);
        for (Index r = 0; r < rows; ++r) b[r] = in.f64(bf);
        if (!w.allFinite()) throw ParseError(wf, "non-finite value");
        if (!b.allFinite()) throw ParseError(bf, "non-finite value");
        ws.push_back(std::move(w));
        bs.push_back(std::move(b));
    }
    if (in.remaining() != 0) throw ParseError("trailer", "unexpected bytes after last layer");
    return DenseNetwork(static_cast<Activation>(code), std::move(ws), std::move(bs));
}

void save(const DenseNetwork& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    std::string bytes = serialize(net);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write to '" + path + "' failed");
}

DenseNetwork load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

}  // namespace partfuse
