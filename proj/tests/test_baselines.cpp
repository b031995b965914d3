// SPDX-License-Identifier: Apache-2.0
//
// Standard MoE baseline: iso-parameter audit, gating behavior, and the
// load-balancing loss.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>
#include <vector>

#include "cdsp/baselines.hpp"
#include "cdsp/model.hpp"
#include "cdsp/rng.hpp"

using namespace cdsp;

TEST_CASE("iso-parameter audit") {
    model::ModelConfig cfg;  // defaults: N=8, d_base=256, d_model=64, r=32
    auto std_params = baselines::StandardMoEParams::init(cfg, 0);
    CHECK(std_params.expert_param_count() == 32768);  // 2*64*32*8

    // CDSP backbone holds 2 * d_model * d_base weights.
    const std::size_t cdsp_count = 2 * cfg.d_model * cfg.d_base;
    const double rel = std::abs(static_cast<double>(cdsp_count) -
                                static_cast<double>(std_params.expert_param_count())) /
                       static_cast<double>(std_params.expert_param_count());
    CHECK(rel < 0.02);
}

TEST_CASE("standard forward shape and top-2 contribution") {
    model::ModelConfig cfg;
    cfg.n_experts = 4;
    cfg.d_base = 16;
    cfg.d_model = 8;
    cfg.fixed_rank = 4;
    cfg.top_k = 2;
    cfg.n_classes = 6;
    cfg.input_dim = 10;
    cfg.task_embed_dim = 4;
    cfg.p_drop = 0.0;
    auto params = baselines::StandardMoEParams::init(cfg, 1);

    Rng rng(2);
    Matrix inputs(5, cfg.input_dim);
    for (auto& x : inputs.data) x = rng.gaussian();
    std::vector<int> tasks{0, 1, 2, 0, 1};

    auto [logits, trace] = baselines::standard_moe_forward(inputs, tasks, params, false,
                                                           false, rng);
    CHECK(logits.rows == 5);
    CHECK(logits.cols == cfg.n_classes);
    for (const auto& ex : trace.examples) {
        CHECK(ex.experts.size() == 2);
        const double s = std::accumulate(ex.gate.begin(), ex.gate.end(), 0.0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Zero task embedding: blind and id-routed outputs coincide.
    for (auto& x : params.task_embed.data) x = 0.0;
    Rng ra(3), rb(3);
    auto [l_id, t1] = baselines::standard_moe_forward(inputs, tasks, params, false, false, ra);
    auto [l_bl, t2] = baselines::standard_moe_forward(inputs, tasks, params, false, true, rb);
    for (std::size_t i = 0; i < l_id.data.size(); ++i) {
        CHECK(l_id.data[i] == doctest::Approx(l_bl.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("load_balance_loss extremes") {
    const std::size_t n = 8, b = 16;
    // Perfectly uniform gates and assignments.
    Matrix gates(b, n, 1.0 / n);
    std::vector<std::size_t> top1(b);
    for (std::size_t i = 0; i < b; ++i) top1[i] = i % n;
    CHECK(baselines::load_balance_loss(gates, top1) == doctest::Approx(1.0).epsilon(1e-12));

    // All traffic to one expert with probability 1.
    Matrix hot(b, n, 0.0);
    for (std::size_t i = 0; i < b; ++i) hot.at(i, 0) = 1.0;
    std::vector<std::size_t> all0(b, 0);
    CHECK(baselines::load_balance_loss(hot, all0) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("load_balance_loss matches the independent formula (N<=4)") {
    Rng rng(5);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 2 + rng.index(3);
        const std::size_t b = 4 + rng.index(8);
        Matrix gates(b, n);
        std::vector<std::size_t> top1(b);
        for (std::size_t i = 0; i < b; ++i) {
            double sum = 0.0;
            for (std::size_t e = 0; e < n; ++e) {
                gates.at(i, e) = rng.uniform() + 1e-6;
                sum += gates.at(i, e);
            }
            std::size_t best = 0;
            for (std::size_t e = 0; e < n; ++e) {
                gates.at(i, e) /= sum;
                if (gates.at(i, e) > gates.at(i, best)) best = e;
            }
            top1[i] = best;
        }
        // N * sum_e f_e * p_e computed independently.
        double want = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
            double f = 0.0, p = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                if (top1[i] == e) f += 1.0;
                p += gates.at(i, e);
            }
            want += (f / double(b)) * (p / double(b));
        }
        want *= double(n);
        CHECK(baselines::load_balance_loss(gates, top1) == doctest::Approx(want).epsilon(1e-12));
        CHECK(baselines::load_balance_loss(gates, top1) > 0.0);
    }
}

TEST_CASE("load_balance_loss gate gradient") {
    // With f treated constant, d(loss)/d(gate[i][e]) = N * f_e / B.
    const std::size_t n = 4, b = 6;
    Rng rng(9);
    Matrix gates(b, n);
    std::vector<std::size_t> top1(b);
    for (std::size_t i = 0; i < b; ++i) {
        auto logits = std::vector<double>(n);
        for (auto& x : logits) x = rng.gaussian();
        auto p = softmax(logits);
        std::size_t best = 0;
        for (std::size_t e = 0; e < n; ++e) {
            gates.at(i, e) = p[e];
            if (p[e] > p[best]) best = e;
        }
        top1[i] = best;
    }
    Matrix d_gate;
    baselines::load_balance_loss(gates, top1, &d_gate);
    std::vector<double> f(n, 0.0);
    for (auto e : top1) f[e] += 1.0 / b;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t e = 0; e < n; ++e) {
            CHECK(d_gate.at(i, e) == doctest::Approx(n * f[e] / b).epsilon(1e-12));
        }
    }
}
