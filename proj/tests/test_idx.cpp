// SPDX-License-Identifier: Apache-2.0
//
// IDX container parsing, serialization and round-trip fidelity.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <vector>

#include "cdsp/idx.hpp"
#include "cdsp/rng.hpp"

using namespace cdsp;

namespace {

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

std::vector<std::uint8_t> image_header(std::uint32_t count, std::uint32_t h = 28,
                                       std::uint32_t w = 28) {
    std::vector<std::uint8_t> v;
    push_be32(v, idx::kImageMagic);
    push_be32(v, count);
    push_be32(v, h);
    push_be32(v, w);
    return v;
}

}  // namespace

TEST_CASE("parse single zero image") {
    auto bytes = image_header(1);
    bytes.insert(bytes.end(), 784, 0);
    Matrix m = idx::parse_images(bytes);
    CHECK(m.rows == 1);
    CHECK(m.cols == 784);
    for (double p : m.data) CHECK(p == 0.0);
}

TEST_CASE("pixel scaling 255 -> 1.0") {
    auto bytes = image_header(1);
    bytes.insert(bytes.end(), 784, 0);
    bytes[16] = 255;  // first pixel byte
    Matrix m = idx::parse_images(bytes);
    CHECK(m.at(0, 0) == 1.0);
}

TEST_CASE("image format errors") {
    // Label magic in the image slot.
    std::vector<std::uint8_t> bad;
    push_be32(bad, idx::kLabelMagic);
    push_be32(bad, 1);
    push_be32(bad, 28);
    push_be32(bad, 28);
    bad.insert(bad.end(), 784, 0);
    CHECK_THROWS(idx::parse_images(bad));

    // Truncated payload.
    auto trunc = image_header(1);
    trunc.insert(trunc.end(), 100, 0);
    CHECK_THROWS(idx::parse_images(trunc));

    // Unsupported shape.
    auto odd = image_header(1, 14, 14);
    odd.insert(odd.end(), 196, 0);
    CHECK_THROWS(idx::parse_images(odd));
}

TEST_CASE("parse labels") {
    std::vector<std::uint8_t> bytes;
    push_be32(bytes, idx::kLabelMagic);
    push_be32(bytes, 2);
    bytes.push_back(3);
    bytes.push_back(7);
    auto labels = idx::parse_labels(bytes);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == 3);
    CHECK(labels[1] == 7);

    std::vector<std::uint8_t> empty;
    push_be32(empty, idx::kLabelMagic);
    push_be32(empty, 0);
    CHECK(idx::parse_labels(empty).empty());

    std::vector<std::uint8_t> range;
    push_be32(range, idx::kLabelMagic);
    push_be32(range, 1);
    range.push_back(10);
    CHECK_THROWS(idx::parse_labels(range));

    std::vector<std::uint8_t> wrong;
    push_be32(wrong, idx::kImageMagic);
    push_be32(wrong, 1);
    wrong.push_back(1);
    CHECK_THROWS(idx::parse_labels(wrong));
}

TEST_CASE("round-trip bit exactness") {
    Rng rng(99);
    Matrix images(5, 784);
    for (auto& p : images.data) p = static_cast<double>(rng.index(256)) / 255.0;
    auto bytes = idx::serialize_images(images);
    Matrix back = idx::parse_images(bytes);
    REQUIRE(back.rows == images.rows);
    for (std::size_t i = 0; i < images.data.size(); ++i) {
        CHECK(back.data[i] == images.data[i]);
    }

    std::vector<int> labels{0, 9, 4, 4, 1};
    auto lbytes = idx::serialize_labels(labels);
    CHECK(idx::parse_labels(lbytes) == labels);
}
