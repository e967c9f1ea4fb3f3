#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "optbench/data.hpp"
#include "optbench/errors.hpp"

using namespace optbench;
namespace fs = std::filesystem;

namespace {

void be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

std::string write_bytes(const std::string& name, const std::vector<unsigned char>& bytes) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    f.close();
    return p.string();
}

std::vector<unsigned char> idx_images(const std::vector<std::vector<unsigned char>>& samples,
                                      std::uint32_t rows, std::uint32_t cols) {
    std::vector<unsigned char> out;
    be32(out, 0x00000803u);
    be32(out, std::uint32_t(samples.size()));
    be32(out, rows);
    be32(out, cols);
    for (const auto& s : samples) out.insert(out.end(), s.begin(), s.end());
    return out;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> out;
    be32(out, 0x00000801u);
    be32(out, std::uint32_t(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

} // namespace

TEST_CASE("idx pair round-trips bit-exactly") {
    const std::vector<std::vector<unsigned char>> samples{
        {0, 255, 128, 64}, {1, 2, 3, 4}, {250, 0, 10, 20}};
    const std::string img = write_bytes("ob_idx_img", idx_images(samples, 2, 2));
    const std::string lab = write_bytes("ob_idx_lab", idx_labels({7, 0, 9}));

    data::Dataset d = data::load_mnist_idx(img, lab);
    REQUIRE(d.images.shape() == Shape{3, 1, 2, 2});
    REQUIRE(d.labels == std::vector<int>{7, 0, 9});
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(d.images[Index(i * 4 + j)] == double(samples[i][j]) / 255.0);
    CHECK(d.images(0, 0, 0, 1) == 1.0); // 255 maps to exactly one
    CHECK(d.images(0, 0, 0, 0) == 0.0);
}

TEST_CASE("idx loader rejects malformed streams") {
    const std::vector<std::vector<unsigned char>> samples{{9, 9, 9, 9}};

    auto bad_magic = idx_images(samples, 2, 2);
    bad_magic[3] = 0x07;
    const std::string img1 = write_bytes("ob_idx_badmagic", bad_magic);
    const std::string lab1 = write_bytes("ob_idx_lab1", idx_labels({1}));
    CHECK_THROWS_WITH_AS(data::load_mnist_idx(img1, lab1), doctest::Contains("0x00000807"),
                         FormatError);

    auto truncated = idx_images(samples, 2, 2);
    truncated.pop_back();
    const std::string img2 = write_bytes("ob_idx_trunc", truncated);
    CHECK_THROWS_AS(data::load_mnist_idx(img2, lab1), FormatError);

    const std::string img3 = write_bytes("ob_idx_ok", idx_images(samples, 2, 2));
    const std::string lab3 = write_bytes("ob_idx_two", idx_labels({1, 2}));
    CHECK_THROWS_AS(data::load_mnist_idx(img3, lab3), FormatError); // count mismatch

    const std::string lab4 = write_bytes("ob_idx_big", idx_labels({11}));
    CHECK_THROWS_AS(data::load_mnist_idx(img3, lab4), FormatError); // label out of range

    auto lab_magic = idx_labels({1});
    lab_magic[3] = 0x05;
    const std::string lab5 = write_bytes("ob_idx_labmagic", lab_magic);
    CHECK_THROWS_AS(data::load_mnist_idx(img3, lab5), FormatError);
}

TEST_CASE("cifar batch round-trips channel-major records") {
    std::vector<unsigned char> bytes;
    // record 0: label 5, R[0]=255, G[0]=128, B[0]=64, rest zero
    bytes.push_back(5);
    std::vector<unsigned char> planes(3072, 0);
    planes[0] = 255;
    planes[1024] = 128;
    planes[2048] = 64;
    bytes.insert(bytes.end(), planes.begin(), planes.end());
    // record 1: label 3, uniform 10
    bytes.push_back(3);
    const std::vector<unsigned char> uniform(3072, 10);
    bytes.insert(bytes.end(), uniform.begin(), uniform.end());

    const std::string path = write_bytes("ob_cifar_ok", bytes);
    data::Dataset d = data::load_cifar10_bin(path);
    REQUIRE(d.images.shape() == Shape{2, 3, 32, 32});
    REQUIRE(d.labels == std::vector<int>{5, 3});
    CHECK(d.images(0, 0, 0, 0) == 1.0);
    CHECK(d.images(0, 1, 0, 0) == 128.0 / 255.0);
    CHECK(d.images(0, 2, 0, 0) == 64.0 / 255.0);
    CHECK(d.images(0, 0, 0, 1) == 0.0);
    CHECK(d.images(1, 2, 31, 31) == 10.0 / 255.0);
}

TEST_CASE("cifar loader rejects bad record lengths and labels") {
    const std::string short_file =
        write_bytes("ob_cifar_short", std::vector<unsigned char>(3072, 0));
    CHECK_THROWS_AS(data::load_cifar10_bin(short_file), FormatError);
    const std::string empty = write_bytes("ob_cifar_empty", {});
    CHECK_THROWS_AS(data::load_cifar10_bin(empty), FormatError);

    std::vector<unsigned char> bad(3073, 0);
    bad[0] = 12;
    const std::string bad_label = write_bytes("ob_cifar_label", bad);
    CHECK_THROWS_AS(data::load_cifar10_bin(bad_label), FormatError);
}

TEST_CASE("batches partition the index range with a short tail") {
    auto plan = data::batches(10, 4, 123, 0);
    REQUIRE(plan.size() == 3);
    CHECK(plan[0].size() == 4);
    CHECK(plan[1].size() == 4);
    CHECK(plan[2].size() == 2);

    std::set<Index> seen;
    for (const auto& b : plan) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 9);

    CHECK(plan == data::batches(10, 4, 123, 0));      // same key, same plan
    CHECK(plan != data::batches(10, 4, 123, 1));      // epoch reshuffles
    CHECK(plan != data::batches(10, 4, 124, 0));      // seed reshuffles
    CHECK_THROWS_AS(data::batches(10, 0, 1, 0), ContractError);
}

TEST_CASE("subset keeps image and label rows paired") {
    // image i is constant i/255, so content identifies the source row
    data::Dataset d;
    d.name = "synthetic";
    d.images = Tensor(Shape{10, 1, 2, 2});
    d.labels.resize(10);
    for (Index i = 0; i < 10; ++i) {
        for (Index j = 0; j < 4; ++j) d.images[i * 4 + j] = double(i) / 255.0;
        d.labels[std::size_t(i)] = int(i % 10);
    }

    data::Dataset s = data::subset(d, 4, 99);
    REQUIRE(s.size() == 4);
    std::set<int> picked;
    for (Index i = 0; i < 4; ++i) {
        const int src = int(s.images[i * 4] * 255.0 + 0.5);
        CHECK(s.labels[std::size_t(i)] == src % 10);
        picked.insert(src);
    }
    CHECK(picked.size() == 4); // no duplicates

    data::Dataset again = data::subset(d, 4, 99);
    CHECK(again.images.vec() == s.images.vec());
    CHECK(again.labels == s.labels);

    data::Dataset all = data::subset(d, 50, 1);
    CHECK(all.size() == 10); // clamped to the dataset
}
