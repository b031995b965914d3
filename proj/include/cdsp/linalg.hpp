// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix, activations and reductions shared across the project.

#pragma once

#include <cstddef>
#include <vector>

namespace cdsp {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Throws if any entry of m is NaN/Inf. `what` names the matrix in the message.
void check_finite(const Matrix& m, const char* what);

double sigmoid(double x);
double sigmoid_prime(double x);
double silu(double x);
double silu_prime(double x);

// Max-shifted softmax; throws on empty input.
std::vector<double> softmax(const std::vector<double>& v);

// Population-variance layer norm, no affine parameters.
std::vector<double> layer_norm(const std::vector<double>& x, double eps = 1e-5);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

// a.b / (|a||b| + eps); 0 when either vector is all-zero.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b,
                         double eps = 1e-8);

// Indices of the r largest values, ties broken by lowest index, returned ascending.
std::vector<std::size_t> argtop_r(const std::vector<double>& v, std::size_t r);

// -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0. Throws for p outside [0,1].
double binary_entropy(double p);

}  // namespace cdsp
