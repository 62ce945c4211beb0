#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <random>

#include "partfuse/data.hpp"

namespace partfuse {

namespace {

std::mt19937_64 seeded_rng(std::uint64_t a, std::uint64_t b) {
    std::seed_seq ss{a, b};
    return std::mt19937_64(ss);
}

std::map<int, IndexList> by_class(const std::vector<int>& labels) {
    std::map<int, IndexList> m;
    for (size_t i = 0; i < labels.size(); ++i) m[labels[i]].push_back(static_cast<Index>(i));
    return m;
}

void check_partition(const SplitIndices& s, size_t n) {
    std::vector<int> seen(n, 0);
    for (Index i : s.first) ++seen[static_cast<size_t>(i)];
    for (Index i : s.second) ++seen[static_cast<size_t>(i)];
    for (int v : seen)
        if (v != 1) throw DataError("split is not a partition of the data");
}

}  // namespace

SplitIndices heterogeneous_split_indices(const std::vector<int>& labels, const SplitSpec& spec) {
    if (!(spec.minority_fraction > 0.0 && spec.minority_fraction < 1.0))
        throw DomainError("minority fraction must lie in (0,1)");
    auto classes = by_class(labels);
    if (classes.empty()) throw DataError("dataset is empty");
    int k = classes.rbegin()->first + 1;
    if (spec.special_digit < 0 || spec.special_digit >= k) throw DomainError("special class index out of range");
    for (int c = 0; c < k; ++c)
        if (!classes.count(c)) throw DataError("class " + std::to_string(c) + " has no samples");
    std::mt19937_64 rng = seeded_rng(spec.seed, 0x5eed);
    SplitIndices s;
    for (auto& [c, idx] : classes) {
        if (c == spec.special_digit) {
            s.first.insert(s.first.end(), idx.begin(), idx.end());
            continue;
        }
        IndexList shuffled = idx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto take = static_cast<size_t>(std::llround(spec.minority_fraction * static_cast<double>(idx.size())));
        s.first.insert(s.first.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
        s.second.insert(s.second.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(take), shuffled.end());
    }
    std::sort(s.first.begin(), s.first.end());
    std::sort(s.second.begin(), s.second.end());
    check_partition(s, labels.size());
    return s;
}

std::pair<LabeledDataset, LabeledDataset> heterogeneous_split(const LabeledDataset& data, const SplitSpec& spec) {
    SplitIndices s = heterogeneous_split_indices(data.labels, spec);
    return {data.subset(s.first), data.subset(s.second)};
}

LabeledDataset synthetic_blobs(int n_classes, int per_class, int dim, double spread, std::uint64_t seed) {
    if (n_classes < 1 || per_class < 1 || dim < 1) throw DomainError("blob sizes must be positive");
    if (!(spread >= 0.0)) throw DomainError("spread must be nonnegative");
    std::mt19937_64 rng = seeded_rng(seed, 0xb10b);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix means(n_classes, dim);
    for (Index c = 0; c < n_classes; ++c)
        for (Index k = 0; k < dim; ++k) means(c, k) = gauss(rng);
    if (n_classes > 1) {
        double closest = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < n_classes; ++c)
            for (Index d = c + 1; d < n_classes; ++d) closest = std::min(closest, (means.row(c) - means.row(d)).norm());
        if (closest > 0.0) means *= std::max(4.0 * spread, 1.0) / closest;
    }
    LabeledDataset out;
    out.inputs.resize(static_cast<Index>(n_classes) * per_class, dim);
    out.labels.resize(static_cast<size_t>(n_classes) * static_cast<size_t>(per_class));
    Index row = 0;
    for (int c = 0; c < n_classes; ++c)
        for (int p = 0; p < per_class; ++p, ++row) {
            for (Index k = 0; k < dim; ++k) out.inputs(row, k) = means(c, k) + spread * gauss(rng);
            out.labels[static_cast<size_t>(row)] = c;
        }
    return out;
}

SplitIndices holdout_indices(const std::vector<int>& labels, double fraction, std::uint64_t seed, bool stratified) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("holdout fraction must lie in (0,1)");
    if (labels.empty()) throw DataError("dataset is empty");
    std::mt19937_64 rng = seeded_rng(seed, 0x401d);
    SplitIndices s;  // first = rest, second = held
    auto take_from = [&](IndexList idx) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto take = static_cast<size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        s.second.insert(s.second.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        s.first.insert(s.first.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    };
    if (stratified) {
        for (auto& [c, idx] : by_class(labels)) take_from(idx);
    } else {
        take_from(iota_list(static_cast<Index>(labels.size())));
    }
    std::sort(s.first.begin(), s.first.end());
    std::sort(s.second.begin(), s.second.end());
    check_partition(s, labels.size());
    return s;
}

std::pair<LabeledDataset, LabeledDataset> holdout(const LabeledDataset& data, double fraction, std::uint64_t seed,
                                                  bool stratified) {
    SplitIndices s = holdout_indices(data.labels, fraction, seed, stratified);
    return {data.subset(s.first), data.subset(s.second)};
}

LabeledDataset shuffled(const LabeledDataset& data, std::uint64_t seed) {
    IndexList order = iota_list(data.size());
    std::mt19937_64 rng = seeded_rng(seed, 0x54f);
    std::shuffle(order.begin(), order.end(), rng);
    return data.subset(order);
}

}  // namespace partfuse
