#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optbench/tensor.hpp"

namespace optbench::data {

struct Dataset {
    Tensor images; // [n, c, h, w], values in [0, 1]
    std::vector<int> labels;
    std::string name;

    Index size() const { return images.rank() > 0 ? images.dim(0) : 0; }
};

/// MNIST IDX pair (big-endian headers, magic 0x803 / 0x801). Pixels are
/// scaled to [0,1] by /255; result shape [n, 1, rows, cols].
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// CIFAR-10 binary batch: 3073-byte records, 1 label byte + 3072 pixels in
/// channel-major R,G,B planes of 32×32; scaled to [0,1], shape [n,3,32,32].
Dataset load_cifar10_bin(const std::string& path);

/// Index slices covering 0..n-1 exactly once in a permutation keyed by
/// (seed, epoch); the last batch may be short.
std::vector<std::vector<Index>> batches(Index n, Index batch_size, std::uint64_t seed,
                                        Index epoch);

/// The first n samples of a seeded shuffle of d (n is clamped to d.size()).
/// Desk-scale runs cite both n and the seed.
Dataset subset(const Dataset& d, Index n, std::uint64_t seed);

} // namespace optbench::data
