// SPDX-License-Identifier: Apache-2.0
//
// Pairwise spatial conflict on physical intersections, the topology penalty
// gradient, and the lag contract.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cdsp/conflict.hpp"
#include "cdsp/data.hpp"
#include "cdsp/model.hpp"
#include "cdsp/rng.hpp"

using namespace cdsp;

namespace {

// Store record with a single d_model=1 gradient row over the given subspace:
// g_u is 1 x r (one value per selected column), g_v is r x 1.
model::ExpertGradRecord make_record(const std::vector<std::size_t>& subspace,
                                    const std::vector<double>& u_vals,
                                    const std::vector<double>& v_vals) {
    model::ExpertGradRecord rec;
    rec.subspace = subspace;
    rec.g_u = Matrix(1, subspace.size());
    rec.g_v = Matrix(subspace.size(), 1);
    for (std::size_t c = 0; c < subspace.size(); ++c) {
        rec.g_u.at(0, c) = u_vals[c];
        rec.g_v.at(c, 0) = v_vals[c];
    }
    return rec;
}

}  // namespace

TEST_CASE("intersect") {
    CHECK(conflict::intersect({0, 1, 2}, {2, 3}) == std::vector<std::size_t>{2});
    CHECK(conflict::intersect({0, 1}, {2, 3}).empty());
    std::vector<std::size_t> s{1, 4, 9};
    CHECK(conflict::intersect(s, s) == s);
}

TEST_CASE("conflict_score extremes and oracle") {
    conflict::LaggedGradStore store;
    store.records[0] = make_record({0, 1}, {1.0, 2.0}, {3.0, -1.0});
    store.records[1] = make_record({0, 1}, {-1.0, -2.0}, {-3.0, 1.0});
    // Exactly antiparallel slices on a full intersection.
    CHECK(conflict::conflict_score(store, 0, 1) == doctest::Approx(1.0).epsilon(1e-6));

    // Identical slices: positive cosine clamps to zero.
    store.records[1] = store.records[0];
    CHECK(conflict::conflict_score(store, 0, 1) == 0.0);

    // [1,1] vs [-1,0] over a 2-dim intersection (U-part only, zero V-part).
    store.records[0] = make_record({3, 5}, {1.0, 1.0}, {0.0, 0.0});
    store.records[1] = make_record({3, 5}, {-1.0, 0.0}, {0.0, 0.0});
    CHECK(conflict::conflict_score(store, 0, 1) ==
          doctest::Approx(0.7071067811865475).epsilon(1e-6));

    // Disjoint subspaces short-circuit to zero regardless of content.
    store.records[0] = make_record({0, 1}, {5.0, 5.0}, {5.0, 5.0});
    store.records[1] = make_record({2, 3}, {-5.0, -5.0}, {-5.0, -5.0});
    CHECK(conflict::conflict_score(store, 0, 1) == 0.0);

    // Missing expert scores zero.
    CHECK(conflict::conflict_score(store, 0, 7) == 0.0);
}

TEST_CASE("conflict_matrix symmetry and bounds") {
    conflict::LaggedGradStore store;
    Rng rng(4);
    for (std::size_t e = 0; e < 4; ++e) {
        std::vector<double> u(3), v(3);
        for (auto& x : u) x = rng.gaussian();
        for (auto& x : v) x = rng.gaussian();
        store.records[e] = make_record({0, 1, 2}, u, v);
    }
    Matrix c = conflict::conflict_matrix(store, 6);
    CHECK(c.rows == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(c.at(i, i) == 0.0);
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(c.at(i, j) == c.at(j, i));
            CHECK(c.at(i, j) >= 0.0);
            CHECK(c.at(i, j) <= 1.0);
        }
    }
    // Experts 4 and 5 are absent: their rows are zero.
    for (std::size_t j = 0; j < 6; ++j) CHECK(c.at(4, j) == 0.0);

    conflict::LaggedGradStore single;
    single.records[2] = make_record({0}, {1.0}, {1.0});
    Matrix cz = conflict::conflict_matrix(single, 4);
    for (double x : cz.data) CHECK(x == 0.0);
}

TEST_CASE("synthetic conflict fixture produces a strong score") {
    // Two experts, each fed one task's least-squares gradient over a shared
    // slice; the fixture construction makes them antagonistic.
    data::SyntheticConflictSpec spec;
    spec.input_dim = 8;
    spec.shared_block = 4;
    spec.n_samples = 128;
    spec.noise = 0.01;
    auto pair = data::make_synthetic_conflict(spec, 0);
    auto ga = data::shared_block_gradient(pair.task_a, spec.shared_block);
    auto gb = data::shared_block_gradient(pair.task_b, spec.shared_block);

    conflict::LaggedGradStore store;
    store.records[0] = make_record({0, 1, 2, 3}, ga, {0, 0, 0, 0});
    store.records[1] = make_record({0, 1, 2, 3}, gb, {0, 0, 0, 0});
    CHECK(conflict::conflict_score(store, 0, 1) > 0.9);
}

TEST_CASE("topology_penalty_grad exactness") {
    Rng rng(8);
    // Zero conflict, zero reg: no loss, no gradient.
    Matrix a0(4, 4);
    for (auto& x : a0.data) x = rng.gaussian();
    Matrix c0(4, 4, 0.0);
    auto res0 = conflict::topology_penalty_grad(a0, c0, 10.0, 0.0);
    CHECK(res0.loss == 0.0);
    for (double g : res0.grad.data) CHECK(g == 0.0);

    // Off-diagonal gradient equals lambda_conf * C exactly, independent of A.
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.index(7);
        Matrix a(n, n), c(n, n, 0.0);
        for (auto& x : a.data) x = rng.gaussian(0.0, 3.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                c.at(i, j) = c.at(j, i) = rng.uniform();
            }
        }
        const double lc = 10.0, lr = 1e-4;
        auto res = conflict::topology_penalty_grad(a, c, lc, lr);
        double expect_loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double sgn = a.at(i, j) > 0 ? 1.0 : (a.at(i, j) < 0 ? -1.0 : 0.0);
                if (i != j) {
                    CHECK(res.grad.at(i, j) == lc * c.at(i, j) + lr * sgn);
                    expect_loss += lc * a.at(i, j) * c.at(i, j);
                } else {
                    CHECK(res.grad.at(i, j) == lr * sgn);
                }
                expect_loss += lr * std::abs(a.at(i, j));
            }
        }
        CHECK(res.loss == doctest::Approx(expect_loss).epsilon(1e-12));
    }

    // Worked example: lambda_conf=10, C_01=0.5.
    Matrix a(2, 2, 0.0);
    a.at(0, 1) = 1.5;
    Matrix c(2, 2, 0.0);
    c.at(0, 1) = c.at(1, 0) = 0.5;
    auto res = conflict::topology_penalty_grad(a, c, 10.0, 1e-4);
    CHECK(res.grad.at(0, 1) == doctest::Approx(5.0 + 1e-4).epsilon(1e-12));
    CHECK(res.grad.at(0, 0) == 0.0);  // sgn(0) convention

    CHECK_THROWS(conflict::topology_penalty_grad(a, Matrix(3, 3), 1.0, 0.0));
}

TEST_CASE("penalty matches finite differences away from zeros") {
    Rng rng(15);
    Matrix a(3, 3), c(3, 3, 0.0);
    for (auto& x : a.data) x = rng.gaussian() + (rng.bernoulli(0.5) ? 1.0 : -1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) c.at(i, j) = c.at(j, i) = rng.uniform();
    }
    const double lc = 10.0, lr = 1e-4, h = 1e-7;
    auto res = conflict::topology_penalty_grad(a, c, lc, lr);
    for (std::size_t i = 0; i < 9; ++i) {
        Matrix ap = a, am = a;
        ap.data[i] += h;
        am.data[i] -= h;
        const double fp = conflict::topology_penalty_grad(ap, c, lc, lr).loss;
        const double fm = conflict::topology_penalty_grad(am, c, lc, lr).loss;
        CHECK(res.grad.data[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("lag contract: stored gradients are frozen copies") {
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
    auto params = model::CdspParams::init(cfg, 5);
    Rng rng(6);
    Matrix inputs(4, cfg.input_dim);
    for (auto& x : inputs.data) x = rng.gaussian();
    std::vector<int> tasks{0, 1, 2, 0};

    auto [logits, trace] = model::moe_forward(inputs, tasks, params, false, rng);
    Matrix d_logits;
    model::task_loss(logits, {0, 1, 2, 3}, &d_logits);

    conflict::LaggedGradStore store;
    store.records = model::capture_expert_grads(trace, d_logits, params);
    Matrix before = conflict::conflict_matrix(store, cfg.n_experts);

    // Mutate every parameter; the stored gradients must not move.
    for (auto* m : {&params.u_base, &params.v_base, &params.topology, &params.w_in}) {
        for (auto& x : m->data) x += 0.37;
    }
    Matrix after = conflict::conflict_matrix(store, cfg.n_experts);
    CHECK(before.data == after.data);
}
