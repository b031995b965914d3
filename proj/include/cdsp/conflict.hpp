// SPDX-License-Identifier: Apache-2.0
//
// Lagged Gradient Game: pairwise spatial conflict on physical intersections
// and the resulting topology penalty gradient.

#pragma once

#include <cstddef>
#include <vector>

#include "cdsp/linalg.hpp"
#include "cdsp/model.hpp"

namespace cdsp::conflict {

// Frozen per-expert backbone gradients captured at step t, consumed at t+1.
struct LaggedGradStore {
    std::size_t step = 0;
    model::ExpertGradMap records;

    bool empty() const { return records.empty(); }
};

std::vector<std::size_t> intersect(const std::vector<std::size_t>& a,
                                   const std::vector<std::size_t>& b);

// ReLU(-cosine) of the two experts' gradient slices on their physical
// intersection; 0 when the intersection is empty or either expert is absent.
double conflict_score(const LaggedGradStore& store, std::size_t i, std::size_t j,
                      double eps = 1e-8);

// Symmetric N x N matrix, zero diagonal, entries in [0,1].
Matrix conflict_matrix(const LaggedGradStore& store, std::size_t n_experts,
                       double eps = 1e-8);

struct PenaltyResult {
    double loss = 0.0;
    Matrix grad;  // over A
};

// loss = lambda_conf * sum_{i != j} A_ij C_ij + lambda_reg * |A|_1;
// grad_ij = lambda_conf * C_ij [i != j] + lambda_reg * sgn(A_ij), sgn(0) = 0.
PenaltyResult topology_penalty_grad(const Matrix& a, const Matrix& c, double lambda_conf,
                                    double lambda_reg);

}  // namespace cdsp::conflict
