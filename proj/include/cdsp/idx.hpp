// SPDX-License-Identifier: Apache-2.0
//
// IDX container parsing/serialization (big-endian MNIST-style files).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdsp/linalg.hpp"

namespace cdsp::idx {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// count x 784 matrix of pixel/255.0; requires 28x28 images.
Matrix parse_images(const std::vector<std::uint8_t>& bytes);

// Labels in 0..9.
std::vector<int> parse_labels(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_images(const Matrix& images);
std::vector<std::uint8_t> serialize_labels(const std::vector<int>& labels);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace cdsp::idx
