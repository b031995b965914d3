// SPDX-License-Identifier: Apache-2.0
//
// Versioned JSON checkpoints: config echo, parameter matrices, optimizer state.

#pragma once

#include <optional>
#include <string>

#include "cdsp/baselines.hpp"
#include "cdsp/model.hpp"
#include "cdsp/optim.hpp"

namespace cdsp::checkpoint {

constexpr const char* kFormatTag = "cdsp-checkpoint";
constexpr int kFormatVersion = 1;

struct OptimizerSnapshot {
    std::size_t step_count = 0;
    std::vector<std::vector<Matrix>> m;  // per group, per parameter
    std::vector<std::vector<Matrix>> v;
};

OptimizerSnapshot snapshot_optimizer(optim::AdamW& opt);
void restore_optimizer(optim::AdamW& opt, const OptimizerSnapshot& snap);

void save_cdsp(const model::CdspParams& params, const std::string& path,
               const OptimizerSnapshot* opt = nullptr);
model::CdspParams load_cdsp(const std::string& path, OptimizerSnapshot* opt = nullptr);

void save_standard(const baselines::StandardMoEParams& params, const std::string& path,
                   const std::string& variant_name,
                   const OptimizerSnapshot* opt = nullptr);
baselines::StandardMoEParams load_standard(const std::string& path,
                                           OptimizerSnapshot* opt = nullptr);

// "cdsp", "standard" or "pure_blind"; throws on a non-checkpoint file.
std::string peek_variant(const std::string& path);

}  // namespace cdsp::checkpoint
