// SPDX-License-Identifier: Apache-2.0

#include "cdsp/conflict.hpp"

#include <algorithm>
#include <stdexcept>

namespace cdsp::conflict {

std::vector<std::size_t> intersect(const std::vector<std::size_t>& a,
                                   const std::vector<std::size_t>& b) {
    std::vector<std::size_t> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

namespace {

// Gradient slice restricted to intersection indices, U-part columns first
// (ascending K order) then V-part rows, so both experts align dimension-wise.
std::vector<double> gather_slice(const model::ExpertGradRecord& rec,
                                 const std::vector<std::size_t>& k_set) {
    const std::size_t d_model = rec.g_u.rows;
    std::vector<double> out;
    out.reserve(k_set.size() * 2 * d_model);
    for (std::size_t k : k_set) {
        const auto it = std::lower_bound(rec.subspace.begin(), rec.subspace.end(), k);
        const std::size_t p = static_cast<std::size_t>(it - rec.subspace.begin());
        for (std::size_t d = 0; d < d_model; ++d) out.push_back(rec.g_u.at(d, p));
    }
    for (std::size_t k : k_set) {
        const auto it = std::lower_bound(rec.subspace.begin(), rec.subspace.end(), k);
        const std::size_t p = static_cast<std::size_t>(it - rec.subspace.begin());
        const double* row = rec.g_v.row(p);
        out.insert(out.end(), row, row + d_model);
    }
    return out;
}

}  // namespace

double conflict_score(const LaggedGradStore& store, std::size_t i, std::size_t j,
                      double eps) {
    const auto it_i = store.records.find(i);
    const auto it_j = store.records.find(j);
    if (it_i == store.records.end() || it_j == store.records.end()) return 0.0;
    const auto k_set = intersect(it_i->second.subspace, it_j->second.subspace);
    if (k_set.empty()) return 0.0;
    const auto gi = gather_slice(it_i->second, k_set);
    const auto gj = gather_slice(it_j->second, k_set);
    const double sim = cosine_similarity(gi, gj, eps);
    return std::max(0.0, -sim);
}

Matrix conflict_matrix(const LaggedGradStore& store, std::size_t n_experts, double eps) {
    Matrix c(n_experts, n_experts);
    for (const auto& [i, ri] : store.records) {
        for (const auto& [j, rj] : store.records) {
            if (j <= i) continue;
            const double score = conflict_score(store, i, j, eps);
            c.at(i, j) = score;
            c.at(j, i) = score;
        }
    }
    return c;
}

PenaltyResult topology_penalty_grad(const Matrix& a, const Matrix& c, double lambda_conf,
                                    double lambda_reg) {
    if (!a.same_shape(c)) {
        throw std::invalid_argument("topology_penalty_grad: shape mismatch");
    }
    PenaltyResult out;
    out.grad = Matrix(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double aij = a.at(i, j);
            double grad = 0.0;
            if (i != j) {
                out.loss += lambda_conf * aij * c.at(i, j);
                grad += lambda_conf * c.at(i, j);
            }
            out.loss += lambda_reg * std::abs(aij);
            grad += lambda_reg * (aij > 0.0 ? 1.0 : (aij < 0.0 ? -1.0 : 0.0));
            out.grad.at(i, j) = grad;
        }
    }
    return out;
}

}  // namespace cdsp::conflict
