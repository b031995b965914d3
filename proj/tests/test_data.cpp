// SPDX-License-Identifier: Apache-2.0
//
// Mixed stream construction, unified labels, holdout split and the synthetic
// conflict fixture.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <map>
#include <set>

#include "cdsp/data.hpp"
#include "cdsp/linalg.hpp"

using namespace cdsp;

namespace {

data::LabeledImageSet tiny_set(int task_id, std::size_t n, double fill) {
    data::LabeledImageSet s;
    s.task_id = task_id;
    s.images = Matrix(n, 784, fill);
    for (std::size_t i = 0; i < n; ++i) {
        s.images.at(i, 0) = static_cast<double>(i) / 255.0;  // row fingerprint
        s.labels.push_back(static_cast<int>(i % 10));
    }
    return s;
}

}  // namespace

TEST_CASE("unified label arithmetic") {
    CHECK(data::unified_label(2, 4) == 24);
    // Bijection over all 30 values.
    std::set<int> seen;
    for (int t = 0; t < 3; ++t) {
        for (int c = 0; c < 10; ++c) seen.insert(data::unified_label(t, c));
    }
    CHECK(seen.size() == 30);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 29);
}

TEST_CASE("mixed stream subsampling and balance") {
    std::array<data::LabeledImageSet, 3> sets{tiny_set(0, 10, 0.1), tiny_set(1, 10, 0.2),
                                              tiny_set(2, 10, 0.3)};
    data::MixedStream stream(sets, 6, 2, 0);
    auto batches = stream.epoch(0);
    REQUIRE(batches.size() == 1);
    const auto& b = batches[0];
    REQUIRE(b.task_ids.size() == 6);
    std::map<int, int> counts;
    for (int t : b.task_ids) counts[t]++;
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 2);
    CHECK(counts[2] == 2);
    for (std::size_t i = 0; i < b.task_ids.size(); ++i) {
        CHECK(b.unified_labels[i] / 10 == b.task_ids[i]);
    }
}

TEST_CASE("mixed stream determinism and coverage") {
    std::array<data::LabeledImageSet, 3> sets{tiny_set(0, 20, 0.1), tiny_set(1, 20, 0.2),
                                              tiny_set(2, 20, 0.3)};
    data::MixedStream s1(sets, 8, 0, 42);
    data::MixedStream s2(sets, 8, 0, 42);
    auto e1 = s1.epoch(0), e2 = s2.epoch(0);
    REQUIRE(e1.size() == e2.size());
    for (std::size_t k = 0; k < e1.size(); ++k) {
        CHECK(e1[k].task_ids == e2[k].task_ids);
        CHECK(e1[k].unified_labels == e2[k].unified_labels);
        CHECK(e1[k].inputs.data == e2[k].inputs.data);
    }

    // Every retained example appears exactly once per epoch.
    std::multiset<double> fingerprints;
    for (const auto& b : e1) {
        for (std::size_t i = 0; i < b.inputs.rows; ++i) {
            fingerprints.insert(b.inputs.at(i, 0) + 1000.0 * b.task_ids[i]);
        }
    }
    CHECK(fingerprints.size() == 60);
    std::multiset<double> expected;
    for (const auto& s : sets) {
        for (std::size_t i = 0; i < s.images.rows; ++i) {
            expected.insert(s.images.at(i, 0) + 1000.0 * s.task_id);
        }
    }
    CHECK(fingerprints == expected);

    // Different epochs shuffle differently.
    auto e0 = s1.epoch(0);
    auto eN = s1.epoch(1);
    bool differs = false;
    for (std::size_t k = 0; k < e0.size() && !differs; ++k) {
        if (e0[k].unified_labels != eN[k].unified_labels) differs = true;
    }
    CHECK(differs);

    CHECK_THROWS(data::MixedStream(sets, 8, 21, 0));  // subsample > set size
}

TEST_CASE("holdout split takes the tail") {
    auto set = tiny_set(1, 20, 0.5);
    auto [train, hold] = data::holdout_split(set, 0.1);
    CHECK(train.images.rows == 18);
    CHECK(hold.images.rows == 2);
    CHECK(hold.labels[0] == set.labels[18]);
    CHECK(hold.images.at(0, 0) == set.images.at(18, 0));
    CHECK(train.task_id == 1);
    CHECK(hold.task_id == 1);
}

TEST_CASE("synthetic conflict fixture antiparallelism") {
    data::SyntheticConflictSpec spec;
    spec.input_dim = 16;
    spec.shared_block = 4;
    spec.n_samples = 256;
    spec.noise = 0.0;
    auto pair = data::make_synthetic_conflict(spec, 0);

    auto ga = data::shared_block_gradient(pair.task_a, spec.shared_block);
    auto gb = data::shared_block_gradient(pair.task_b, spec.shared_block);
    REQUIRE(ga.size() == spec.shared_block);

    // Noise-free targets are exactly +/- w.x, so the least-squares gradients
    // at w=0 are exact negations.
    for (std::size_t k = 0; k < ga.size(); ++k) {
        CHECK(ga[k] == doctest::Approx(-gb[k]).epsilon(1e-12));
    }
    CHECK(cosine_similarity(ga, gb) < -0.9);

    // With noise the antiparallelism still dominates.
    spec.noise = 0.05;
    auto noisy = data::make_synthetic_conflict(spec, 0);
    auto na = data::shared_block_gradient(noisy.task_a, spec.shared_block);
    auto nb = data::shared_block_gradient(noisy.task_b, spec.shared_block);
    CHECK(cosine_similarity(na, nb) < -0.9);
}

TEST_CASE("synthetic task families") {
    auto t0 = data::make_synthetic_task(0, 4, 42);
    CHECK(t0.images.rows == 40);
    CHECK(t0.images.cols == 784);
    CHECK(t0.task_id == 0);
    for (double p : t0.images.data) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    // Class-interleaved: every contiguous 10-slice is class-balanced.
    for (std::size_t i = 0; i + 10 <= t0.labels.size(); i += 10) {
        std::set<int> classes(t0.labels.begin() + i, t0.labels.begin() + i + 10);
        CHECK(classes.size() == 10);
    }
    // Deterministic.
    auto again = data::make_synthetic_task(0, 4, 42);
    CHECK(again.images.data == t0.images.data);
    // Different seed differs.
    auto other = data::make_synthetic_task(0, 4, 43);
    CHECK(other.images.data != t0.images.data);

    CHECK_THROWS(data::make_synthetic_task(3, 4, 42));
}
