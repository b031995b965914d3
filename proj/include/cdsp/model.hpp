// SPDX-License-Identifier: Apache-2.0
//
// CDSP-MoE network: shared backbone, fixed partition, learnable topology,
// adversarially masked router, sparse expert forward with the strength-
// modulation gradient bridge, and exact manual backward.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cdsp/linalg.hpp"
#include "cdsp/rng.hpp"

namespace cdsp::model {

enum class RankMode { kFixed, kSqrtLaw };

struct ModelConfig {
    std::size_t n_experts = 8;
    std::size_t d_base = 256;
    std::size_t d_model = 64;
    RankMode rank_mode = RankMode::kFixed;
    std::size_t fixed_rank = 32;
    std::size_t top_k = 2;
    std::size_t n_tasks = 3;
    std::size_t n_classes = 30;
    std::size_t input_dim = 784;
    std::size_t task_embed_dim = 16;
    double p_drop = 0.1;
    bool orthonormal_backbone_init = false;

    std::size_t block_size() const { return d_base / n_experts; }
    void validate() const;
};

std::size_t rank_quota(const ModelConfig& cfg);

// N x D_base block-diagonal binary partition (each row owns one contiguous block).
Matrix init_partition(std::size_t n_experts, std::size_t d_base);

// Diagonal 4.0, off-diagonal N(0, 0.02).
Matrix init_topology(std::size_t n_experts, Rng& rng);

struct CdspParams {
    ModelConfig cfg;
    Matrix w_in;        // input_dim x d_model
    Matrix b_in;        // 1 x d_model
    Matrix w_out;       // d_model x n_classes
    Matrix b_out;       // 1 x n_classes
    Matrix w_g;         // n_experts x (d_model + task_embed_dim)
    Matrix task_embed;  // n_tasks x task_embed_dim
    Matrix u_base;      // d_model x d_base
    Matrix v_base;      // d_base x d_model
    Matrix topology;    // n_experts x n_experts logits

    static CdspParams init(const ModelConfig& cfg, std::uint64_t seed);
};

// Same shapes as the trainable matrices of CdspParams, used for gradients.
struct CdspGrads {
    Matrix w_in, b_in, w_out, b_out, w_g, task_embed, u_base, v_base, topology;

    static CdspGrads zeros_like(const CdspParams& p);
    void scale(double s);
};

// I_i over all physical dimensions: I[k] = sigmoid(A(i, owner(k))).
std::vector<double> control_force(const Matrix& topology, std::size_t expert,
                                  std::size_t d_base);

std::vector<std::size_t> select_subspace(const std::vector<double>& control, std::size_t r);

// Mean control force over the selected subspace (the differentiable bridge).
double strength_modulation(const std::vector<double>& control,
                           const std::vector<std::size_t>& subspace);

// One expert's sparse low-rank forward: SiLU(x * U[:,S]) * V[S,:].
std::vector<double> expert_forward(const std::vector<double>& x, const Matrix& u_base,
                                   const Matrix& v_base, const std::vector<std::size_t>& s);

struct ExampleTrace {
    std::vector<double> stem_out;      // d_model
    std::vector<double> ln_out;        // d_model
    double ln_inv_std = 0.0;
    int task_id = -1;                   // -1 == blind
    bool mask_active = false;           // embedding visible to the router
    std::vector<double> gate;           // N probabilities
    std::vector<std::size_t> experts;   // selected top_k, ascending
    // Per selected expert, index-aligned with `experts`:
    std::vector<std::vector<double>> pre;     // r pre-activations
    std::vector<std::vector<double>> hidden;  // r post-SiLU
    std::vector<std::vector<double>> y_raw;   // d_model raw outputs
    std::vector<double> modulation;           // m_i per selected expert
    std::vector<double> moe_out;              // d_model combined output
};

struct ForwardTrace {
    // Subspace selection is a function of A only, so it is shared per batch.
    std::vector<std::vector<std::size_t>> subspace;  // per expert
    std::vector<std::vector<double>> control;        // per expert, d_base
    std::vector<ExampleTrace> examples;
    const Matrix* inputs = nullptr;  // borrowed batch input rows
};

// task_ids[i] == -1 strips the task embedding (blind). When training, a
// Bernoulli(1-p_drop) mask gates the embedding; at eval no draw occurs.
std::pair<Matrix, ForwardTrace> moe_forward(const Matrix& inputs,
                                            const std::vector<int>& task_ids,
                                            const CdspParams& params, bool training,
                                            Rng& rng);

// Mean cross-entropy against unified labels; also emits dL/dlogits.
double task_loss(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits);

struct ExpertGradRecord {
    std::vector<std::size_t> subspace;  // S_i as of capture time
    Matrix g_u;  // d_model x r, gradient of U[:, S_i]
    Matrix g_v;  // r x d_model, gradient of V[S_i, :]
};

// Per-expert backbone gradient attribution (batch-summed, detached copies).
using ExpertGradMap = std::map<std::size_t, ExpertGradRecord>;

// Exact analytic backward. The A-gradient flows only through the modulation
// bridge; argtop selections are constants. If expert_grads is non-null, the
// per-expert backbone attribution is captured alongside.
CdspGrads backward(const ForwardTrace& trace, const Matrix& d_logits,
                   const CdspParams& params, ExpertGradMap* expert_grads = nullptr);

ExpertGradMap capture_expert_grads(const ForwardTrace& trace, const Matrix& d_logits,
                                   const CdspParams& params);

}  // namespace cdsp::model
