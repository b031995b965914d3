// SPDX-License-Identifier: Apache-2.0
//
// Training orchestration: forward, task loss, lagged-conflict topology update,
// two-speed optimizer step, ID/blind evaluation, metric logging.

#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cdsp/baselines.hpp"
#include "cdsp/conflict.hpp"
#include "cdsp/data.hpp"
#include "cdsp/model.hpp"
#include "cdsp/optim.hpp"

namespace cdsp::trainer {

enum class Variant { kCdsp, kStandard, kPureBlind };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    double lambda_task = 1.0;
    double lambda_conf = 10.0;
    double lambda_reg = 1e-4;
    double aux_coeff = 0.01;  // load-balance coefficient (baselines)
    Variant variant = Variant::kCdsp;
    std::size_t subsample_per_task = 0;  // 0 == all
    double holdout_fraction = 0.1;
    std::uint64_t seed = 0;
    optim::GroupConfig base_group{5e-3, 1e-2};
    optim::GroupConfig topo_group{5e-2, 0.0};
    // Optional linear p_drop schedule end value; NaN disables the schedule.
    double p_drop_end = std::numeric_limits<double>::quiet_NaN();
};

struct EpochRecord {
    std::size_t epoch = 0;
    double task_loss = 0.0;     // mean over batches
    double aux_loss = 0.0;      // conflict+reg (cdsp) or balance*coeff (baselines)
    double acc_id = 0.0;
    double acc_blind = 0.0;
    double mean_conn_prob = 0.0;  // mean sigma(A), cdsp only
    double entropy = 0.0;         // structural entropy of sigma(A), cdsp only
    Matrix routing_blind;         // n_tasks x N, rows sum to 1
    Matrix routing_id;
    Matrix topology_probs;        // N x N sigma(A) snapshot, cdsp only
};

struct MetricLog {
    std::vector<EpochRecord> epochs;
};

struct EvalResult {
    double accuracy = 0.0;
    Matrix routing_histogram;  // n_tasks x N
};

class CdspTrainer {
public:
    CdspTrainer(const model::ModelConfig& model_cfg, const TrainConfig& cfg);

    struct StepLosses {
        double task = 0.0;
        double aux = 0.0;
    };
    // One optimizer step following the lag contract: conflict gradient comes
    // from the previous step's store; a fresh store is captured afterwards.
    StepLosses train_step(const data::MixedBatch& batch);

    model::CdspParams& params() { return params_; }
    const conflict::LaggedGradStore& lagged_store() const { return store_; }
    optim::AdamW& optimizer() { return opt_; }
    Rng& rng() { return rng_; }

private:
    TrainConfig cfg_;
    model::CdspParams params_;
    optim::AdamW opt_;
    conflict::LaggedGradStore store_;
    Rng rng_;
    std::size_t step_ = 0;
};

class StandardTrainer {
public:
    StandardTrainer(const model::ModelConfig& model_cfg, const TrainConfig& cfg);

    CdspTrainer::StepLosses train_step(const data::MixedBatch& batch);

    baselines::StandardMoEParams& params() { return params_; }
    optim::AdamW& optimizer() { return opt_; }

private:
    TrainConfig cfg_;
    baselines::StandardMoEParams params_;
    optim::AdamW opt_;
    Rng rng_;
    bool blind_ = false;  // pure-blind variant strips ids during training
};

EvalResult evaluate(const model::CdspParams& params,
                    const std::vector<data::MixedBatch>& batches, bool blind);
EvalResult evaluate(const baselines::StandardMoEParams& params,
                    const std::vector<data::MixedBatch>& batches, bool blind);

struct TrainResult {
    MetricLog log;
    std::optional<model::CdspParams> cdsp;
    std::optional<baselines::StandardMoEParams> standard;
};

TrainResult run_training(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                         const std::array<data::LabeledImageSet, 3>& sets);

// metrics.csv (one row per epoch) plus per-epoch routing/topology CSV snapshots.
void write_metric_log(const MetricLog& log, const std::string& dir);

}  // namespace cdsp::trainer
