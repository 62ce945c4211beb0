#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "partfuse/netcore.hpp"

namespace partfuse {

// Reads IDX image/label files, gzip-compressed or raw. Pixels scale to [0,1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes uncompressed IDX files; values are rounded to bytes after * 255.
void write_idx(const std::string& images_path, const std::string& labels_path, const LabeledDataset& data,
               std::uint32_t rows, std::uint32_t cols);

// PARTFUSE_DATA_DIR, falling back to "data".
std::string data_dir();

// train=true: train-images-idx3-ubyte / train-labels-idx1-ubyte (optionally .gz) under data_dir().
LabeledDataset load_mnist(bool train, const std::string& dir = data_dir());
bool mnist_available(const std::string& dir = data_dir());

struct SplitSpec {
    int special_digit = 4;
    double minority_fraction = 0.10;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    IndexList first;
    IndexList second;
};

SplitIndices heterogeneous_split_indices(const std::vector<int>& labels, const SplitSpec& spec);
std::pair<LabeledDataset, LabeledDataset> heterogeneous_split(const LabeledDataset& data, const SplitSpec& spec);

LabeledDataset synthetic_blobs(int n_classes, int per_class, int dim, double spread, std::uint64_t seed);

SplitIndices holdout_indices(const std::vector<int>& labels, double fraction, std::uint64_t seed,
                             bool stratified = true);
// Returns (rest, held).
std::pair<LabeledDataset, LabeledDataset> holdout(const LabeledDataset& data, double fraction, std::uint64_t seed,
                                                  bool stratified = true);

// Fisher-Yates over rows with a seeded generator.
LabeledDataset shuffled(const LabeledDataset& data, std::uint64_t seed);

}  // namespace partfuse
