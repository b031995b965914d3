// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint round-trips: parameter matrices, optimizer moments, variant
// tagging and rejection of foreign files.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "cdsp/checkpoint.hpp"
#include "cdsp/rng.hpp"

using namespace cdsp;

namespace {

model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.n_experts = 4;
    cfg.d_base = 16;
    cfg.d_model = 8;
    cfg.rank_mode = model::RankMode::kFixed;
    cfg.fixed_rank = 4;
    cfg.top_k = 2;
    cfg.n_tasks = 3;
    cfg.n_classes = 6;
    cfg.input_dim = 10;
    cfg.task_embed_dim = 4;
    cfg.p_drop = 0.0;
    return cfg;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) return false;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            if (a.at(i, j) != b.at(i, j)) return false;
    return true;
}

}  // namespace

TEST_CASE("cdsp checkpoint round-trip with optimizer state") {
    auto cfg = tiny_config();
    auto params = model::CdspParams::init(cfg, 17);

    optim::AdamW opt;
    opt.add_group({&params.w_in, &params.w_out}, optim::GroupConfig{5e-3, 1e-2});
    opt.add_group({&params.topology}, optim::GroupConfig{5e-2, 0.0});

    // Advance the optimizer so the moments are nontrivial.
    Matrix g_in(params.w_in.rows, params.w_in.cols);
    Matrix g_out(params.w_out.rows, params.w_out.cols);
    Matrix g_top(params.topology.rows, params.topology.cols);
    Rng rng(3);
    for (auto* g : {&g_in, &g_out, &g_top})
        for (std::size_t i = 0; i < g->rows; ++i)
            for (std::size_t j = 0; j < g->cols; ++j) g->at(i, j) = rng.gaussian(0.0, 1.0);
    for (int s = 0; s < 3; ++s) opt.step({{&g_in, &g_out}, {&g_top}});

    auto snap = checkpoint::snapshot_optimizer(opt);
    const std::string path = "ckpt_cdsp_test.json";
    checkpoint::save_cdsp(params, path, &snap);

    checkpoint::OptimizerSnapshot snap_back;
    auto loaded = checkpoint::load_cdsp(path, &snap_back);

    CHECK(loaded.cfg.n_experts == cfg.n_experts);
    CHECK(loaded.cfg.d_base == cfg.d_base);
    CHECK(loaded.cfg.fixed_rank == cfg.fixed_rank);
    CHECK(same_matrix(loaded.w_in, params.w_in));
    CHECK(same_matrix(loaded.b_in, params.b_in));
    CHECK(same_matrix(loaded.w_out, params.w_out));
    CHECK(same_matrix(loaded.b_out, params.b_out));
    CHECK(same_matrix(loaded.w_g, params.w_g));
    CHECK(same_matrix(loaded.task_embed, params.task_embed));
    CHECK(same_matrix(loaded.u_base, params.u_base));
    CHECK(same_matrix(loaded.v_base, params.v_base));
    CHECK(same_matrix(loaded.topology, params.topology));

    CHECK(snap_back.step_count == 3);
    REQUIRE(snap_back.m.size() == snap.m.size());
    for (std::size_t g = 0; g < snap.m.size(); ++g) {
        REQUIRE(snap_back.m[g].size() == snap.m[g].size());
        for (std::size_t p = 0; p < snap.m[g].size(); ++p) {
            CHECK(same_matrix(snap_back.m[g][p], snap.m[g][p]));
            CHECK(same_matrix(snap_back.v[g][p], snap.v[g][p]));
        }
    }

    // Restoring into a fresh optimizer reproduces the moments exactly.
    auto reloaded = checkpoint::load_cdsp(path);
    optim::AdamW opt2;
    opt2.add_group({&reloaded.w_in, &reloaded.w_out}, optim::GroupConfig{5e-3, 1e-2});
    opt2.add_group({&reloaded.topology}, optim::GroupConfig{5e-2, 0.0});
    checkpoint::restore_optimizer(opt2, snap_back);
    CHECK(opt2.step_count() == 3);
    opt.step({{&g_in, &g_out}, {&g_top}});
    opt2.step({{&g_in, &g_out}, {&g_top}});
    CHECK(same_matrix(params.w_in, reloaded.w_in));
    CHECK(same_matrix(params.topology, reloaded.topology));

    CHECK(checkpoint::peek_variant(path) == "cdsp");
    std::remove(path.c_str());
}

TEST_CASE("standard checkpoint round-trip and variant names") {
    auto cfg = tiny_config();
    auto params = baselines::StandardMoEParams::init(cfg, 9);

    const std::string path = "ckpt_std_test.json";
    checkpoint::save_standard(params, path, "standard");
    auto loaded = checkpoint::load_standard(path);
    CHECK(same_matrix(loaded.w_in, params.w_in));
    CHECK(same_matrix(loaded.w_g, params.w_g));
    CHECK(same_matrix(loaded.task_embed, params.task_embed));
    REQUIRE(loaded.u_expert.size() == params.u_expert.size());
    for (std::size_t e = 0; e < params.u_expert.size(); ++e) {
        CHECK(same_matrix(loaded.u_expert[e], params.u_expert[e]));
        CHECK(same_matrix(loaded.v_expert[e], params.v_expert[e]));
    }
    CHECK(checkpoint::peek_variant(path) == "standard");

    checkpoint::save_standard(params, path, "pure_blind");
    CHECK(checkpoint::peek_variant(path) == "pure_blind");
    std::remove(path.c_str());
}

TEST_CASE("foreign files are rejected") {
    const std::string path = "not_a_checkpoint_test.json";
    {
        std::ofstream out(path);
        out << "{\"format\": \"something-else\", \"version\": 1}\n";
    }
    CHECK_THROWS(checkpoint::peek_variant(path));
    CHECK_THROWS(checkpoint::load_cdsp(path));
    CHECK_THROWS(checkpoint::load_standard(path));
    std::remove(path.c_str());

    CHECK_THROWS(checkpoint::peek_variant("missing_file_test.json"));
}
