// SPDX-License-Identifier: Apache-2.0
//
// Iso-parameter Standard MoE baseline: independent dense experts, Top-2
// gating, optional Task-ID routing, Switch-style load-balancing loss.

#pragma once

#include <cstdint>
#include <vector>

#include "cdsp/linalg.hpp"
#include "cdsp/model.hpp"
#include "cdsp/rng.hpp"

namespace cdsp::baselines {

struct StandardMoEParams {
    model::ModelConfig cfg;    // fixed_rank doubles as the per-expert width d
    Matrix w_in, b_in, w_out, b_out, w_g, task_embed;
    std::vector<Matrix> u_expert;  // per expert: d_model x d
    std::vector<Matrix> v_expert;  // per expert: d x d_model

    static StandardMoEParams init(const model::ModelConfig& cfg, std::uint64_t seed);
    std::size_t expert_param_count() const;
};

struct StandardGrads {
    Matrix w_in, b_in, w_out, b_out, w_g, task_embed;
    std::vector<Matrix> u_expert, v_expert;

    static StandardGrads zeros_like(const StandardMoEParams& p);
};

struct StandardExampleTrace {
    std::vector<double> stem_out, ln_out;
    double ln_inv_std = 0.0;
    int task_id = -1;
    bool mask_active = false;
    std::vector<double> gate;
    std::vector<std::size_t> experts;
    std::vector<std::vector<double>> pre, hidden, y_raw;
    std::vector<double> moe_out;
};

struct StandardTrace {
    std::vector<StandardExampleTrace> examples;
    const Matrix* inputs = nullptr;
};

// blind==true zeroes the task embedding regardless of task_ids.
std::pair<Matrix, StandardTrace> standard_moe_forward(const Matrix& inputs,
                                                      const std::vector<int>& task_ids,
                                                      const StandardMoEParams& params,
                                                      bool training, bool blind, Rng& rng);

// extra_d_gate (B x N), when non-null, is added to the per-example gate
// gradient before the softmax backward (used for the load-balance loss).
StandardGrads standard_backward(const StandardTrace& trace, const Matrix& d_logits,
                                const StandardMoEParams& params,
                                const Matrix* extra_d_gate = nullptr);

// Switch-style: N * sum_e f_e * p_e; f_e = fraction of examples whose top-1
// expert is e, p_e = mean gate probability. Minimum 1 at uniform.
// d_gate, when non-null, receives d(loss)/d(gate_probs) with f treated constant.
double load_balance_loss(const Matrix& gate_probs, const std::vector<std::size_t>& top1,
                         Matrix* d_gate = nullptr);

}  // namespace cdsp::baselines
