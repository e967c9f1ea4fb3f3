#include "optbench/data.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "optbench/errors.hpp"
#include "optbench/rng.hpp"

namespace optbench::data {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
    in.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!in) throw FormatError("cannot read " + path);
    return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b, std::size_t offset) {
    return (std::uint32_t(b[offset]) << 24) | (std::uint32_t(b[offset + 1]) << 16) |
           (std::uint32_t(b[offset + 2]) << 8) | std::uint32_t(b[offset + 3]);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

void require_length(const std::vector<unsigned char>& b, std::size_t need,
                    const std::string& path) {
    if (b.size() < need)
        throw FormatError(path + ": truncated, " + std::to_string(b.size()) + " bytes where " +
                          std::to_string(need) + " expected");
}

} // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<unsigned char> img = read_file(images_path);
    require_length(img, 16, images_path);
    const std::uint32_t img_magic = read_u32_be(img, 0);
    if (img_magic != 0x00000803u)
        throw FormatError(images_path + ": image magic " + hex32(img_magic) +
                          ", expected 0x00000803");
    const Index n = Index(read_u32_be(img, 4));
    const Index rows = Index(read_u32_be(img, 8));
    const Index cols = Index(read_u32_be(img, 12));
    require_length(img, std::size_t(16 + n * rows * cols), images_path);

    const std::vector<unsigned char> lab = read_file(labels_path);
    require_length(lab, 8, labels_path);
    const std::uint32_t lab_magic = read_u32_be(lab, 0);
    if (lab_magic != 0x00000801u)
        throw FormatError(labels_path + ": label magic " + hex32(lab_magic) +
                          ", expected 0x00000801");
    const Index n_lab = Index(read_u32_be(lab, 4));
    if (n_lab != n)
        throw FormatError(labels_path + ": " + std::to_string(n_lab) + " labels for " +
                          std::to_string(n) + " images");
    require_length(lab, std::size_t(8 + n), labels_path);

    Dataset d;
    d.name = "mnist";
    d.images = Tensor({n, 1, rows, cols});
    const Index numel = n * rows * cols;
    for (Index i = 0; i < numel; ++i) d.images[i] = double(img[std::size_t(16 + i)]) / 255.0;
    d.labels.resize(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
        const unsigned char v = lab[std::size_t(8 + i)];
        if (v >= 10)
            throw FormatError(labels_path + ": label " + std::to_string(int(v)) + " at index " +
                              std::to_string(i) + " out of range");
        d.labels[std::size_t(i)] = int(v);
    }
    return d;
}

Dataset load_cifar10_bin(const std::string& path) {
    constexpr Index kRecord = 3073;
    const std::vector<unsigned char> bytes = read_file(path);
    if (bytes.empty() || Index(bytes.size()) % kRecord != 0)
        throw FormatError(path + ": length " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(kRecord));
    const Index n = Index(bytes.size()) / kRecord;
    Dataset d;
    d.name = "cifar10";
    d.images = Tensor({n, 3, 32, 32});
    d.labels.resize(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
        const std::size_t base = std::size_t(i * kRecord);
        const unsigned char label = bytes[base];
        if (label >= 10)
            throw FormatError(path + ": label " + std::to_string(int(label)) + " in record " +
                              std::to_string(i) + " out of range");
        d.labels[std::size_t(i)] = int(label);
        double* dst = d.images.data() + i * 3072;
        for (Index j = 0; j < 3072; ++j) dst[j] = double(bytes[base + 1 + std::size_t(j)]) / 255.0;
    }
    return d;
}

std::vector<std::vector<Index>> batches(Index n, Index batch_size, std::uint64_t seed,
                                        Index epoch) {
    if (n < 0) throw ContractError("batches: negative n");
    if (batch_size < 1) throw ContractError("batches: batch_size must be >= 1");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(Rng::derive(seed, std::uint64_t(epoch)));
    for (Index i = n - 1; i > 0; --i)
        std::swap(order[std::size_t(i)], order[std::size_t(rng.below(std::uint64_t(i) + 1))]);
    std::vector<std::vector<Index>> out;
    for (Index start = 0; start < n; start += batch_size) {
        const Index stop = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return out;
}

Dataset subset(const Dataset& d, Index n, std::uint64_t seed) {
    const Index total = d.size();
    const Index keep = std::min(n, total);
    if (keep < 0) throw ContractError("subset: negative n");
    std::vector<Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    for (Index i = total - 1; i > 0; --i)
        std::swap(order[std::size_t(i)], order[std::size_t(rng.below(std::uint64_t(i) + 1))]);

    Shape shape = d.images.shape();
    shape[0] = keep;
    const Index numel = keep > 0 ? shape_numel(shape) / keep : 0;
    Dataset out;
    out.name = d.name;
    out.images = Tensor(shape);
    out.labels.resize(std::size_t(keep));
    for (Index i = 0; i < keep; ++i) {
        const Index src = order[std::size_t(i)];
        out.images.vec().segment(i * numel, numel) = d.images.vec().segment(src * numel, numel);
        out.labels[std::size_t(i)] = d.labels[std::size_t(src)];
    }
    return out;
}

} // namespace optbench::data
