// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay and per-group hyperparameters
// (two-speed schedule: base group vs topology group).

#pragma once

#include <cstddef>
#include <vector>

#include "cdsp/linalg.hpp"

namespace cdsp::optim {

struct GroupConfig {
    double lr = 5e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamW {
public:
    // One parameter group; call add_group for each. Parameters are referenced
    // by pointer and must outlive the optimizer.
    std::size_t add_group(std::vector<Matrix*> params, const GroupConfig& cfg);

    // Gradients must mirror the group/parameter layout passed to add_group.
    void step(const std::vector<std::vector<const Matrix*>>& grads_by_group);

    std::size_t step_count() const { return step_count_; }

    // Moment access for checkpointing.
    struct GroupState {
        GroupConfig cfg;
        std::vector<Matrix*> params;
        std::vector<Matrix> m;  // first moments
        std::vector<Matrix> v;  // second moments
    };
    std::vector<GroupState>& groups() { return groups_; }
    void set_step_count(std::size_t s) { step_count_ = s; }

private:
    std::vector<GroupState> groups_;
    std::size_t step_count_ = 0;
};

}  // namespace cdsp::optim
