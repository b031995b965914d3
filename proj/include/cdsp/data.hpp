// SPDX-License-Identifier: Apache-2.0
//
// Three-task mixed stream construction, synthetic fixtures and dataset generation.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdsp/linalg.hpp"
#include "cdsp/rng.hpp"

namespace cdsp::data {

constexpr int kClassesPerTask = 10;
constexpr int kNumTasks = 3;
constexpr int kUnifiedClasses = kClassesPerTask * kNumTasks;

struct LabeledImageSet {
    Matrix images;            // count x 784, pixels in [0,1]
    std::vector<int> labels;  // per-image class in 0..9
    int task_id = 0;
};

struct MixedBatch {
    Matrix inputs;                   // B x 784
    std::vector<int> task_ids;       // length B, values in {0,1,2}
    std::vector<int> unified_labels; // length B, 10*task + class
};

inline int unified_label(int task, int cls) { return kClassesPerTask * task + cls; }

// Deterministic per-epoch shuffle; every retained example appears exactly once.
// subsample_per_task == 0 means "use all".
class MixedStream {
public:
    MixedStream(const std::array<LabeledImageSet, 3>& sets, std::size_t batch_size,
                std::size_t subsample_per_task, std::uint64_t seed);

    // Batches for one epoch; shuffle order advances with epoch index.
    std::vector<MixedBatch> epoch(std::size_t epoch_index) const;

    std::size_t total_examples() const { return flat_inputs_.rows; }

private:
    Matrix flat_inputs_;               // all retained examples, row per example
    std::vector<int> flat_tasks_;
    std::vector<int> flat_unified_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

// Splits off the last `fraction` of each set (pre-shuffle order) as a held-out set.
std::pair<LabeledImageSet, LabeledImageSet> holdout_split(const LabeledImageSet& set,
                                                          double fraction);

struct SyntheticConflictSpec {
    std::size_t input_dim = 16;
    std::size_t shared_block = 4;   // leading dims shared by both tasks
    std::size_t n_samples = 256;
    double noise = 0.0;
};

// Two regression-style tasks whose least-squares gradients on the shared block
// are antiparallel by construction. `targets` are the continuous responses
// (+w.x for task A, -w.x for task B); `labels` threshold them into classes 0/1.
struct SyntheticConflictTask {
    Matrix inputs;                 // n x input_dim
    std::vector<double> targets;
    std::vector<int> labels;
};

struct SyntheticConflictPair {
    SyntheticConflictTask task_a;
    SyntheticConflictTask task_b;
    std::vector<double> shared_weights;  // w on the shared block
};

SyntheticConflictPair make_synthetic_conflict(const SyntheticConflictSpec& spec,
                                              std::uint64_t seed);

// Least-squares gradient of 0.5*mean((x.w_full - t)^2) w.r.t. the shared-block
// weights, evaluated at w_full = 0. Oracle for the antiparallelism property.
std::vector<double> shared_block_gradient(const SyntheticConflictTask& task,
                                          std::size_t shared_block);

// Deterministic synthetic 28x28 task families. Tasks 0 and 1 are sparse
// stroke glyphs (statistically close), task 2 is dense oriented texture.
LabeledImageSet make_synthetic_task(int task_id, std::size_t n_per_class,
                                    std::uint64_t seed);

// Writes images/labels IDX files for the three synthetic tasks under dir,
// as task{0,1,2}-{train,test}-{images,labels}.idx.
void write_synthetic_dataset(const std::string& dir, std::size_t train_per_class,
                             std::size_t test_per_class, std::uint64_t seed);

}  // namespace cdsp::data
