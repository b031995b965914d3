// SPDX-License-Identifier: Apache-2.0

#include "cdsp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cdsp/metrics.hpp"

namespace cdsp::trainer {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kCdsp: return "cdsp";
        case Variant::kStandard: return "standard";
        case Variant::kPureBlind: return "pure_blind";
    }
    throw std::logic_error("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "cdsp") return Variant::kCdsp;
    if (name == "standard") return Variant::kStandard;
    if (name == "pure_blind") return Variant::kPureBlind;
    throw std::invalid_argument("unknown variant: " + name +
                                " (expected cdsp, standard or pure_blind)");
}

CdspTrainer::CdspTrainer(const model::ModelConfig& model_cfg, const TrainConfig& cfg)
    : cfg_(cfg),
      params_(model::CdspParams::init(model_cfg, cfg.seed)),
      rng_(cfg.seed ^ 0x7261696eULL) {
    opt_.add_group({&params_.w_in, &params_.b_in, &params_.w_out, &params_.b_out,
                    &params_.w_g, &params_.task_embed, &params_.u_base, &params_.v_base},
                   cfg.base_group);
    opt_.add_group({&params_.topology}, cfg.topo_group);
}

CdspTrainer::StepLosses CdspTrainer::train_step(const data::MixedBatch& batch) {
    auto [logits, trace] = model::moe_forward(batch.inputs, batch.task_ids, params_,
                                              /*training=*/true, rng_);
    Matrix d_logits;
    StepLosses losses;
    losses.task = model::task_loss(logits, batch.unified_labels, &d_logits);
    for (auto& v : d_logits.data) v *= cfg_.lambda_task;

    model::ExpertGradMap expert_grads;
    model::CdspGrads grads = model::backward(trace, d_logits, params_, &expert_grads);

    // Conflict gradient uses only the *previous* step's store (lag contract).
    const Matrix c = conflict::conflict_matrix(store_, params_.cfg.n_experts);
    const auto penalty =
        conflict::topology_penalty_grad(params_.topology, c, cfg_.lambda_conf, cfg_.lambda_reg);
    losses.aux = penalty.loss;
    for (std::size_t k = 0; k < grads.topology.data.size(); ++k) {
        grads.topology.data[k] += penalty.grad.data[k];
    }

    opt_.step({{&grads.w_in, &grads.b_in, &grads.w_out, &grads.b_out, &grads.w_g,
                &grads.task_embed, &grads.u_base, &grads.v_base},
               {&grads.topology}});

    store_.step = step_;
    store_.records = std::move(expert_grads);
    ++step_;
    return losses;
}

StandardTrainer::StandardTrainer(const model::ModelConfig& model_cfg, const TrainConfig& cfg)
    : cfg_(cfg),
      params_(baselines::StandardMoEParams::init(model_cfg, cfg.seed)),
      rng_(cfg.seed ^ 0x7261696eULL),
      blind_(cfg.variant == Variant::kPureBlind) {
    // Standard baseline routes on explicit ids; no embedding dropout.
    params_.cfg.p_drop = 0.0;
    std::vector<Matrix*> ps{&params_.w_in, &params_.b_in, &params_.w_out, &params_.b_out,
                            &params_.w_g, &params_.task_embed};
    for (auto& m : params_.u_expert) ps.push_back(&m);
    for (auto& m : params_.v_expert) ps.push_back(&m);
    opt_.add_group(std::move(ps), cfg.base_group);
}

CdspTrainer::StepLosses StandardTrainer::train_step(const data::MixedBatch& batch) {
    auto [logits, trace] = baselines::standard_moe_forward(batch.inputs, batch.task_ids,
                                                           params_, /*training=*/true,
                                                           blind_, rng_);
    Matrix d_logits;
    CdspTrainer::StepLosses losses;
    losses.task = model::task_loss(logits, batch.unified_labels, &d_logits);
    for (auto& v : d_logits.data) v *= cfg_.lambda_task;

    const std::size_t batch_n = trace.examples.size();
    Matrix gate_probs(batch_n, params_.cfg.n_experts);
    std::vector<std::size_t> top1(batch_n);
    for (std::size_t ex = 0; ex < batch_n; ++ex) {
        const auto& g = trace.examples[ex].gate;
        for (std::size_t e = 0; e < g.size(); ++e) gate_probs.at(ex, e) = g[e];
        top1[ex] = argtop_r(g, 1)[0];
    }
    Matrix d_gate;
    const double balance = baselines::load_balance_loss(gate_probs, top1, &d_gate);
    losses.aux = cfg_.aux_coeff * balance;
    for (auto& v : d_gate.data) v *= cfg_.aux_coeff;

    baselines::StandardGrads grads =
        baselines::standard_backward(trace, d_logits, params_, &d_gate);

    std::vector<const Matrix*> gs{&grads.w_in, &grads.b_in, &grads.w_out, &grads.b_out,
                                  &grads.w_g, &grads.task_embed};
    for (auto& m : grads.u_expert) gs.push_back(&m);
    for (auto& m : grads.v_expert) gs.push_back(&m);
    opt_.step({std::move(gs)});
    return losses;
}

namespace {

template <typename ForwardFn>
EvalResult evaluate_impl(const std::vector<data::MixedBatch>& batches, std::size_t n_tasks,
                         std::size_t n_experts, ForwardFn&& forward) {
    EvalResult res;
    res.routing_histogram = Matrix(n_tasks, n_experts);
    std::size_t correct = 0, total = 0;
    for (const auto& batch : batches) {
        const auto [logits, gates] = forward(batch);
        for (std::size_t ex = 0; ex < batch.task_ids.size(); ++ex) {
            const double* row = logits.row(ex);
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols; ++c) {
                if (row[c] > row[best]) best = c;
            }
            if (static_cast<int>(best) == batch.unified_labels[ex]) ++correct;
            ++total;
            const std::size_t top1 = argtop_r(gates[ex], 1)[0];
            res.routing_histogram.at(batch.task_ids[ex], top1) += 1.0;
        }
    }
    res.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        double sum = 0.0;
        for (std::size_t e = 0; e < n_experts; ++e) sum += res.routing_histogram.at(t, e);
        if (sum > 0.0) {
            for (std::size_t e = 0; e < n_experts; ++e) res.routing_histogram.at(t, e) /= sum;
        }
    }
    return res;
}

std::vector<int> blind_ids(std::size_t n) { return std::vector<int>(n, -1); }

}  // namespace

EvalResult evaluate(const model::CdspParams& params,
                    const std::vector<data::MixedBatch>& batches, bool blind) {
    Rng dummy(0);  // eval path draws nothing
    return evaluate_impl(
        batches, params.cfg.n_tasks, params.cfg.n_experts, [&](const data::MixedBatch& b) {
            const auto ids = blind ? blind_ids(b.task_ids.size()) : b.task_ids;
            auto [logits, trace] = model::moe_forward(b.inputs, ids, params, false, dummy);
            std::vector<std::vector<double>> gates;
            gates.reserve(trace.examples.size());
            for (const auto& t : trace.examples) gates.push_back(t.gate);
            return std::make_pair(std::move(logits), std::move(gates));
        });
}

EvalResult evaluate(const baselines::StandardMoEParams& params,
                    const std::vector<data::MixedBatch>& batches, bool blind) {
    Rng dummy(0);
    return evaluate_impl(
        batches, params.cfg.n_tasks, params.cfg.n_experts, [&](const data::MixedBatch& b) {
            auto [logits, trace] =
                baselines::standard_moe_forward(b.inputs, b.task_ids, params, false, blind,
                                                dummy);
            std::vector<std::vector<double>> gates;
            gates.reserve(trace.examples.size());
            for (const auto& t : trace.examples) gates.push_back(t.gate);
            return std::make_pair(std::move(logits), std::move(gates));
        });
}

TrainResult run_training(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                         const std::array<data::LabeledImageSet, 3>& sets) {
    // Subsample first, then hold out the trailing fraction of each task.
    std::array<data::LabeledImageSet, 3> train_sets, hold_sets;
    for (int t = 0; t < 3; ++t) {
        data::LabeledImageSet s = sets[t];
        if (cfg.subsample_per_task > 0) {
            if (cfg.subsample_per_task > s.images.rows) {
                throw std::invalid_argument("run_training: subsample larger than task set");
            }
            data::LabeledImageSet cut;
            cut.task_id = s.task_id;
            cut.images = Matrix(cfg.subsample_per_task, s.images.cols);
            for (std::size_t i = 0; i < cfg.subsample_per_task; ++i) {
                std::copy_n(s.images.row(i), s.images.cols, cut.images.row(i));
                cut.labels.push_back(s.labels[i]);
            }
            s = std::move(cut);
        }
        auto [tr, ho] = data::holdout_split(s, cfg.holdout_fraction);
        train_sets[t] = std::move(tr);
        hold_sets[t] = std::move(ho);
    }
    data::MixedStream stream(train_sets, cfg.batch_size, 0, cfg.seed);
    data::MixedStream hold_stream(hold_sets, cfg.batch_size, 0, cfg.seed + 1);
    const auto hold_batches = hold_stream.epoch(0);

    TrainResult result;
    const bool is_cdsp = cfg.variant == Variant::kCdsp;
    std::optional<CdspTrainer> cdsp;
    std::optional<StandardTrainer> standard;
    if (is_cdsp) {
        cdsp.emplace(model_cfg, cfg);
    } else {
        standard.emplace(model_cfg, cfg);
    }

    const double p_start = model_cfg.p_drop;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (is_cdsp && std::isfinite(cfg.p_drop_end) && cfg.epochs > 1) {
            const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
            cdsp->params().cfg.p_drop = p_start + t * (cfg.p_drop_end - p_start);
        }
        double task_sum = 0.0, aux_sum = 0.0;
        std::size_t n_batches = 0;
        for (const auto& batch : stream.epoch(epoch)) {
            const auto losses =
                is_cdsp ? cdsp->train_step(batch) : standard->train_step(batch);
            task_sum += losses.task;
            aux_sum += losses.aux;
            ++n_batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.task_loss = task_sum / static_cast<double>(n_batches);
        rec.aux_loss = aux_sum / static_cast<double>(n_batches);
        if (is_cdsp) {
            const auto& p = cdsp->params();
            const auto id_eval = evaluate(p, hold_batches, false);
            const auto blind_eval = evaluate(p, hold_batches, true);
            rec.acc_id = id_eval.accuracy;
            rec.acc_blind = blind_eval.accuracy;
            rec.routing_id = id_eval.routing_histogram;
            rec.routing_blind = blind_eval.routing_histogram;
            rec.topology_probs = Matrix(p.cfg.n_experts, p.cfg.n_experts);
            double mean_p = 0.0, entropy = 0.0;
            for (std::size_t k = 0; k < p.topology.data.size(); ++k) {
                const double prob = sigmoid(p.topology.data[k]);
                rec.topology_probs.data[k] = prob;
                mean_p += prob;
                entropy += binary_entropy(prob);
            }
            rec.mean_conn_prob = mean_p / static_cast<double>(p.topology.data.size());
            rec.entropy = entropy;
        } else {
            const auto& p = standard->params();
            const auto id_eval = evaluate(p, hold_batches, false);
            const auto blind_eval = evaluate(p, hold_batches, true);
            rec.acc_id = id_eval.accuracy;
            rec.acc_blind = blind_eval.accuracy;
            rec.routing_id = id_eval.routing_histogram;
            rec.routing_blind = blind_eval.routing_histogram;
        }
        result.log.epochs.push_back(std::move(rec));
    }
    if (is_cdsp) {
        result.cdsp = std::move(cdsp->params());
    } else {
        result.standard = std::move(standard->params());
    }
    return result;
}

void write_metric_log(const MetricLog& log, const std::string& dir) {
    Matrix table(log.epochs.size(), 7);
    for (std::size_t i = 0; i < log.epochs.size(); ++i) {
        const auto& r = log.epochs[i];
        table.at(i, 0) = static_cast<double>(r.epoch);
        table.at(i, 1) = r.task_loss;
        table.at(i, 2) = r.aux_loss;
        table.at(i, 3) = r.acc_id;
        table.at(i, 4) = r.acc_blind;
        table.at(i, 5) = r.mean_conn_prob;
        table.at(i, 6) = r.entropy;
    }
    metrics::export_csv(table,
                        {"epoch", "task_loss", "aux_loss", "acc_id", "acc_blind",
                         "mean_conn_prob", "entropy"},
                        dir + "/metrics.csv");
    auto expert_names = [](std::size_t n) {
        std::vector<std::string> names;
        for (std::size_t e = 0; e < n; ++e) names.push_back("E" + std::to_string(e));
        return names;
    };
    for (const auto& r : log.epochs) {
        const std::string suffix = "_epoch_" + std::to_string(r.epoch) + ".csv";
        if (r.topology_probs.rows > 0) {
            metrics::export_csv(r.topology_probs, expert_names(r.topology_probs.cols),
                                dir + "/topology" + suffix);
        }
        if (r.routing_blind.rows > 0) {
            metrics::export_csv(r.routing_blind, expert_names(r.routing_blind.cols),
                                dir + "/routing_blind" + suffix);
        }
        if (r.routing_id.rows > 0) {
            metrics::export_csv(r.routing_id, expert_names(r.routing_id.cols),
                                dir + "/routing_id" + suffix);
        }
    }
}

}  // namespace cdsp::trainer
