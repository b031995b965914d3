// SPDX-License-Identifier: Apache-2.0

#include "cdsp/idx.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cdsp::idx {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size()) throw std::runtime_error("idx: truncated header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>(v >> 16));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

Matrix parse_images(const std::vector<std::uint8_t>& bytes) {
    if (read_be32(bytes, 0) != kImageMagic) {
        throw std::runtime_error("idx: bad image magic");
    }
    const std::uint32_t count = read_be32(bytes, 4);
    const std::uint32_t h = read_be32(bytes, 8);
    const std::uint32_t w = read_be32(bytes, 12);
    if (h != 28 || w != 28) {
        throw std::runtime_error("idx: unsupported image shape (expected 28x28)");
    }
    const std::size_t need = 16 + std::size_t(count) * 784;
    if (bytes.size() < need) throw std::runtime_error("idx: truncated image payload");
    Matrix out(count, 784);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* px = bytes.data() + 16 + i * 784;
        double* row = out.row(i);
        for (std::size_t k = 0; k < 784; ++k) row[k] = px[k] / 255.0;
    }
    return out;
}

std::vector<int> parse_labels(const std::vector<std::uint8_t>& bytes) {
    if (read_be32(bytes, 0) != kLabelMagic) {
        throw std::runtime_error("idx: bad label magic");
    }
    const std::uint32_t count = read_be32(bytes, 4);
    if (bytes.size() < 8 + std::size_t(count)) throw std::runtime_error("idx: truncated labels");
    std::vector<int> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int v = bytes[8 + i];
        if (v > 9) throw std::runtime_error("idx: label byte out of range 0..9");
        out[i] = v;
    }
    return out;
}

std::vector<std::uint8_t> serialize_images(const Matrix& images) {
    if (images.cols != 784) throw std::invalid_argument("idx: images must be Nx784");
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.rows * 784);
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, 28);
    write_be32(out, 28);
    for (double v : images.data) {
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    return out;
}

std::vector<std::uint8_t> serialize_labels(const std::vector<int>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) out.push_back(static_cast<std::uint8_t>(v));
    return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open for write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("idx: write failed " + path);
}

}  // namespace cdsp::idx
