// SPDX-License-Identifier: Apache-2.0

#include "cdsp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cdsp::model {

void ModelConfig::validate() const {
    if (n_experts == 0 || d_base == 0 || d_model == 0) {
        throw std::invalid_argument("ModelConfig: zero dimension");
    }
    if (d_base % n_experts != 0) {
        throw std::invalid_argument("ModelConfig: d_base must be divisible by n_experts");
    }
    if (rank_mode == RankMode::kFixed && fixed_rank > d_base) {
        throw std::invalid_argument("ModelConfig: fixed_rank > d_base");
    }
    if (top_k == 0 || top_k > n_experts) {
        throw std::invalid_argument("ModelConfig: top_k out of range");
    }
    if (p_drop < 0.0 || p_drop > 1.0) {
        throw std::invalid_argument("ModelConfig: p_drop out of [0,1]");
    }
}

std::size_t rank_quota(const ModelConfig& cfg) {
    if (cfg.rank_mode == RankMode::kSqrtLaw) {
        return static_cast<std::size_t>(
            std::floor(static_cast<double>(cfg.d_base) /
                       std::sqrt(static_cast<double>(cfg.n_experts))));
    }
    return cfg.fixed_rank;
}

Matrix init_partition(std::size_t n_experts, std::size_t d_base) {
    if (n_experts == 0 || d_base % n_experts != 0) {
        throw std::invalid_argument("init_partition: d_base not divisible by n_experts");
    }
    const std::size_t block = d_base / n_experts;
    Matrix pi(n_experts, d_base);
    for (std::size_t k = 0; k < d_base; ++k) pi.at(k / block, k) = 1.0;
    return pi;
}

Matrix init_topology(std::size_t n_experts, Rng& rng) {
    Matrix a(n_experts, n_experts);
    for (std::size_t i = 0; i < n_experts; ++i) {
        for (std::size_t j = 0; j < n_experts; ++j) {
            a.at(i, j) = (i == j) ? 4.0 : rng.gaussian(0.0, 0.02);
        }
    }
    return a;
}

namespace {

void fill_gaussian(Matrix& m, Rng& rng, double stddev) {
    for (auto& v : m.data) v = rng.gaussian(0.0, stddev);
}

// Gram-Schmidt over the shorter dimension; optional backbone init.
void orthonormalize_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double proj = 0.0;
            for (std::size_t k = 0; k < m.cols; ++k) proj += m.at(i, k) * m.at(j, k);
            for (std::size_t k = 0; k < m.cols; ++k) m.at(i, k) -= proj * m.at(j, k);
        }
        double n = 0.0;
        for (std::size_t k = 0; k < m.cols; ++k) n += m.at(i, k) * m.at(i, k);
        n = std::sqrt(n);
        if (n > 1e-12) {
            for (std::size_t k = 0; k < m.cols; ++k) m.at(i, k) /= n;
        }
    }
}

}  // namespace

CdspParams CdspParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    CdspParams p;
    p.cfg = cfg;
    p.w_in = Matrix(cfg.input_dim, cfg.d_model);
    fill_gaussian(p.w_in, rng, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)));
    p.b_in = Matrix(1, cfg.d_model);
    p.w_out = Matrix(cfg.d_model, cfg.n_classes);
    fill_gaussian(p.w_out, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    p.b_out = Matrix(1, cfg.n_classes);
    p.w_g = Matrix(cfg.n_experts, cfg.d_model + cfg.task_embed_dim);
    fill_gaussian(p.w_g, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_model + cfg.task_embed_dim)));
    p.task_embed = Matrix(cfg.n_tasks, cfg.task_embed_dim);
    fill_gaussian(p.task_embed, rng, 1.0);
    p.u_base = Matrix(cfg.d_model, cfg.d_base);
    fill_gaussian(p.u_base, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    // Output-side projection starts small so untrained experts contribute
    // near-zero noise; useful directions then grow instead of being pruned
    // out of the head and dragging the modulation gradients negative.
    p.v_base = Matrix(cfg.d_base, cfg.d_model);
    fill_gaussian(p.v_base, rng, 0.1 / std::sqrt(static_cast<double>(cfg.d_base)));
    if (cfg.orthonormal_backbone_init) {
        orthonormalize_rows(p.u_base);   // rows of U span d_base
        orthonormalize_rows(p.v_base);
    }
    p.topology = init_topology(cfg.n_experts, rng);
    return p;
}

CdspGrads CdspGrads::zeros_like(const CdspParams& p) {
    CdspGrads g;
    g.w_in = Matrix(p.w_in.rows, p.w_in.cols);
    g.b_in = Matrix(p.b_in.rows, p.b_in.cols);
    g.w_out = Matrix(p.w_out.rows, p.w_out.cols);
    g.b_out = Matrix(p.b_out.rows, p.b_out.cols);
    g.w_g = Matrix(p.w_g.rows, p.w_g.cols);
    g.task_embed = Matrix(p.task_embed.rows, p.task_embed.cols);
    g.u_base = Matrix(p.u_base.rows, p.u_base.cols);
    g.v_base = Matrix(p.v_base.rows, p.v_base.cols);
    g.topology = Matrix(p.topology.rows, p.topology.cols);
    return g;
}

void CdspGrads::scale(double s) {
    for (Matrix* m : {&w_in, &b_in, &w_out, &b_out, &w_g, &task_embed, &u_base, &v_base,
                      &topology}) {
        for (auto& v : m->data) v *= s;
    }
}

std::vector<double> control_force(const Matrix& topology, std::size_t expert,
                                  std::size_t d_base) {
    const std::size_t n = topology.rows;
    const std::size_t block = d_base / n;
    std::vector<double> out(d_base);
    for (std::size_t k = 0; k < d_base; ++k) {
        out[k] = sigmoid(topology.at(expert, k / block));
    }
    return out;
}

std::vector<std::size_t> select_subspace(const std::vector<double>& control, std::size_t r) {
    return argtop_r(control, r);
}

double strength_modulation(const std::vector<double>& control,
                           const std::vector<std::size_t>& subspace) {
    double m = 0.0;
    for (std::size_t k : subspace) m += control[k];
    return m / static_cast<double>(subspace.size());
}

std::vector<double> expert_forward(const std::vector<double>& x, const Matrix& u_base,
                                   const Matrix& v_base, const std::vector<std::size_t>& s) {
    const std::size_t r = s.size();
    std::vector<double> pre(r, 0.0);
    for (std::size_t p = 0; p < r; ++p) {
        const std::size_t col = s[p];
        double acc = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) acc += x[d] * u_base.at(d, col);
        pre[p] = acc;
    }
    std::vector<double> out(v_base.cols, 0.0);
    for (std::size_t p = 0; p < r; ++p) {
        const double h = silu(pre[p]);
        const double* vrow = v_base.row(s[p]);
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += h * vrow[d];
    }
    return out;
}

std::pair<Matrix, ForwardTrace> moe_forward(const Matrix& inputs,
                                            const std::vector<int>& task_ids,
                                            const CdspParams& params, bool training,
                                            Rng& rng) {
    const ModelConfig& cfg = params.cfg;
    const std::size_t batch = inputs.rows;
    if (task_ids.size() != batch) {
        throw std::invalid_argument("moe_forward: task_ids length mismatch");
    }
    if (inputs.cols != cfg.input_dim) {
        throw std::invalid_argument("moe_forward: input width mismatch");
    }
    const std::size_t r = rank_quota(cfg);

    ForwardTrace trace;
    trace.inputs = &inputs;
    trace.control.resize(cfg.n_experts);
    trace.subspace.resize(cfg.n_experts);
    for (std::size_t i = 0; i < cfg.n_experts; ++i) {
        trace.control[i] = control_force(params.topology, i, cfg.d_base);
        trace.subspace[i] = select_subspace(trace.control[i], r);
    }

    Matrix logits(batch, cfg.n_classes);
    trace.examples.resize(batch);

    for (std::size_t ex = 0; ex < batch; ++ex) {
        ExampleTrace& t = trace.examples[ex];
        const double* x = inputs.row(ex);
        const int task = task_ids[ex];
        if (task >= static_cast<int>(cfg.n_tasks)) {
            throw std::invalid_argument("moe_forward: task_id out of range");
        }
        t.task_id = task;

        // Stem
        t.stem_out.assign(cfg.d_model, 0.0);
        for (std::size_t k = 0; k < cfg.input_dim; ++k) {
            const double xv = x[k];
            if (xv == 0.0) continue;
            const double* wrow = params.w_in.row(k);
            for (std::size_t d = 0; d < cfg.d_model; ++d) t.stem_out[d] += xv * wrow[d];
        }
        for (std::size_t d = 0; d < cfg.d_model; ++d) t.stem_out[d] += params.b_in.at(0, d);

        // Router input: LayerNorm(stem) ++ masked task embedding
        {
            double mean = 0.0;
            for (double v : t.stem_out) mean += v;
            mean /= static_cast<double>(cfg.d_model);
            double var = 0.0;
            for (double v : t.stem_out) var += (v - mean) * (v - mean);
            var /= static_cast<double>(cfg.d_model);
            t.ln_inv_std = 1.0 / std::sqrt(var + 1e-5);
            t.ln_out.resize(cfg.d_model);
            for (std::size_t d = 0; d < cfg.d_model; ++d) {
                t.ln_out[d] = (t.stem_out[d] - mean) * t.ln_inv_std;
            }
        }
        t.mask_active = false;
        if (task >= 0) {
            // Stochastic draw only during training; at eval the id alone decides.
            t.mask_active = training ? !rng.bernoulli(cfg.p_drop) : true;
        }

        std::vector<double> gate_logits(cfg.n_experts, 0.0);
        for (std::size_t e = 0; e < cfg.n_experts; ++e) {
            const double* wrow = params.w_g.row(e);
            double acc = 0.0;
            for (std::size_t d = 0; d < cfg.d_model; ++d) acc += wrow[d] * t.ln_out[d];
            if (t.mask_active) {
                const double* emb = params.task_embed.row(task);
                for (std::size_t d = 0; d < cfg.task_embed_dim; ++d) {
                    acc += wrow[cfg.d_model + d] * emb[d];
                }
            }
            gate_logits[e] = acc;
        }
        t.gate = softmax(gate_logits);
        t.experts = argtop_r(t.gate, cfg.top_k);

        // Sparse expert execution plus modulation
        t.moe_out.assign(cfg.d_model, 0.0);
        for (std::size_t pos = 0; pos < t.experts.size(); ++pos) {
            const std::size_t i = t.experts[pos];
            const auto& s = trace.subspace[i];
            std::vector<double> pre(r, 0.0);
            for (std::size_t p = 0; p < r; ++p) {
                const std::size_t col = s[p];
                double acc = 0.0;
                for (std::size_t d = 0; d < cfg.d_model; ++d) {
                    acc += t.stem_out[d] * params.u_base.at(d, col);
                }
                pre[p] = acc;
            }
            std::vector<double> hidden(r);
            std::vector<double> y_raw(cfg.d_model, 0.0);
            for (std::size_t p = 0; p < r; ++p) {
                hidden[p] = silu(pre[p]);
                const double* vrow = params.v_base.row(s[p]);
                for (std::size_t d = 0; d < cfg.d_model; ++d) y_raw[d] += hidden[p] * vrow[d];
            }
            const double m = strength_modulation(trace.control[i], s);
            const double coef = t.gate[i] * m;
            for (std::size_t d = 0; d < cfg.d_model; ++d) t.moe_out[d] += coef * y_raw[d];

            t.pre.push_back(std::move(pre));
            t.hidden.push_back(std::move(hidden));
            t.y_raw.push_back(std::move(y_raw));
            t.modulation.push_back(m);
        }

        // Head
        double* lrow = logits.row(ex);
        for (std::size_t c = 0; c < cfg.n_classes; ++c) lrow[c] = params.b_out.at(0, c);
        for (std::size_t d = 0; d < cfg.d_model; ++d) {
            const double yd = t.moe_out[d];
            if (yd == 0.0) continue;
            const double* wrow = params.w_out.row(d);
            for (std::size_t c = 0; c < cfg.n_classes; ++c) lrow[c] += yd * wrow[c];
        }
    }
    check_finite(logits, "moe_forward logits");
    return {std::move(logits), std::move(trace)};
}

double task_loss(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits) {
    const std::size_t batch = logits.rows;
    if (labels.size() != batch) throw std::invalid_argument("task_loss: label count mismatch");
    if (d_logits) *d_logits = Matrix(batch, logits.cols);
    double loss = 0.0;
    for (std::size_t ex = 0; ex < batch; ++ex) {
        const int label = labels[ex];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.cols) {
            throw std::out_of_range("task_loss: label out of range");
        }
        std::vector<double> row(logits.row(ex), logits.row(ex) + logits.cols);
        const auto probs = softmax(row);
        loss -= std::log(std::max(probs[label], 1e-300));
        if (d_logits) {
            double* drow = d_logits->row(ex);
            for (std::size_t c = 0; c < logits.cols; ++c) {
                drow[c] = (probs[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) /
                          static_cast<double>(batch);
            }
        }
    }
    return loss / static_cast<double>(batch);
}

CdspGrads backward(const ForwardTrace& trace, const Matrix& d_logits,
                   const CdspParams& params, ExpertGradMap* expert_grads) {
    const ModelConfig& cfg = params.cfg;
    const Matrix& inputs = *trace.inputs;
    if (d_logits.rows != trace.examples.size()) {
        throw std::invalid_argument("backward: trace/d_logits mismatch");
    }
    CdspGrads g = CdspGrads::zeros_like(params);
    const std::size_t block = cfg.block_size();
    const std::size_t r = trace.subspace.empty() ? 0 : trace.subspace[0].size();

    if (expert_grads) expert_grads->clear();
    auto expert_record = [&](std::size_t i) -> ExpertGradRecord& {
        auto it = expert_grads->find(i);
        if (it == expert_grads->end()) {
            ExpertGradRecord rec;
            rec.subspace = trace.subspace[i];
            rec.g_u = Matrix(cfg.d_model, r);
            rec.g_v = Matrix(r, cfg.d_model);
            it = expert_grads->emplace(i, std::move(rec)).first;
        }
        return it->second;
    };

    for (std::size_t ex = 0; ex < trace.examples.size(); ++ex) {
        const ExampleTrace& t = trace.examples[ex];
        const double* dlog = d_logits.row(ex);

        // Head
        std::vector<double> dy(cfg.d_model, 0.0);
        for (std::size_t c = 0; c < cfg.n_classes; ++c) g.b_out.at(0, c) += dlog[c];
        for (std::size_t d = 0; d < cfg.d_model; ++d) {
            const double yd = t.moe_out[d];
            double* wout_g = g.w_out.row(d);
            const double* wout = params.w_out.row(d);
            double acc = 0.0;
            for (std::size_t c = 0; c < cfg.n_classes; ++c) {
                wout_g[c] += yd * dlog[c];
                acc += wout[c] * dlog[c];
            }
            dy[d] = acc;
        }

        std::vector<double> ds(cfg.d_model, 0.0);      // into stem output
        std::vector<double> d_gate(cfg.n_experts, 0.0);

        // Experts
        for (std::size_t pos = 0; pos < t.experts.size(); ++pos) {
            const std::size_t i = t.experts[pos];
            const auto& s = trace.subspace[i];
            const double m = t.modulation[pos];
            const double gate = t.gate[i];
            double dy_dot_yraw = 0.0;
            for (std::size_t d = 0; d < cfg.d_model; ++d) dy_dot_yraw += dy[d] * t.y_raw[pos][d];
            d_gate[i] += m * dy_dot_yraw;
            const double dm = gate * dy_dot_yraw;
            const double coef = gate * m;

            ExpertGradRecord* rec = expert_grads ? &expert_record(i) : nullptr;

            for (std::size_t p = 0; p < s.size(); ++p) {
                const std::size_t col = s[p];
                const double h = t.hidden[pos][p];
                const double* vrow = params.v_base.row(col);
                double dh = 0.0;
                double* vg = g.v_base.row(col);
                for (std::size_t d = 0; d < cfg.d_model; ++d) {
                    const double dyr = coef * dy[d];
                    vg[d] += h * dyr;
                    dh += dyr * vrow[d];
                }
                if (rec) {
                    double* rvg = rec->g_v.row(p);
                    for (std::size_t d = 0; d < cfg.d_model; ++d) rvg[d] += h * coef * dy[d];
                }
                const double dpre = dh * silu_prime(t.pre[pos][p]);
                for (std::size_t d = 0; d < cfg.d_model; ++d) {
                    g.u_base.at(d, col) += t.stem_out[d] * dpre;
                    ds[d] += params.u_base.at(d, col) * dpre;
                }
                if (rec) {
                    for (std::size_t d = 0; d < cfg.d_model; ++d) {
                        rec->g_u.at(d, p) += t.stem_out[d] * dpre;
                    }
                }
            }

            // Bridge: dm -> I over S_i -> A row i, selection held constant.
            const double dm_per = dm / static_cast<double>(s.size());
            std::vector<std::size_t> owner_count(cfg.n_experts, 0);
            for (std::size_t k : s) ++owner_count[k / block];
            for (std::size_t j = 0; j < cfg.n_experts; ++j) {
                if (owner_count[j] == 0) continue;
                g.topology.at(i, j) += dm_per * static_cast<double>(owner_count[j]) *
                                       sigmoid_prime(params.topology.at(i, j));
            }
        }

        // Router softmax
        double dg_dot_g = 0.0;
        for (std::size_t e = 0; e < cfg.n_experts; ++e) dg_dot_g += d_gate[e] * t.gate[e];
        std::vector<double> dz(cfg.n_experts);
        for (std::size_t e = 0; e < cfg.n_experts; ++e) {
            dz[e] = t.gate[e] * (d_gate[e] - dg_dot_g);
        }
        std::vector<double> d_ln(cfg.d_model, 0.0);
        for (std::size_t e = 0; e < cfg.n_experts; ++e) {
            const double dze = dz[e];
            if (dze == 0.0) continue;
            double* wg_g = g.w_g.row(e);
            const double* wg = params.w_g.row(e);
            for (std::size_t d = 0; d < cfg.d_model; ++d) {
                wg_g[d] += dze * t.ln_out[d];
                d_ln[d] += dze * wg[d];
            }
            if (t.mask_active) {
                const double* emb = params.task_embed.row(t.task_id);
                double* emb_g = g.task_embed.row(t.task_id);
                for (std::size_t d = 0; d < cfg.task_embed_dim; ++d) {
                    wg_g[cfg.d_model + d] += dze * emb[d];
                    emb_g[d] += dze * wg[cfg.d_model + d];
                }
            }
        }

        // LayerNorm backward (population variance, no affine):
        // dx = inv_std * (dy - mean(dy) - y * mean(dy . y))
        {
            const double n = static_cast<double>(cfg.d_model);
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (std::size_t d = 0; d < cfg.d_model; ++d) {
                mean_dy += d_ln[d];
                mean_dyy += d_ln[d] * t.ln_out[d];
            }
            mean_dy /= n;
            mean_dyy /= n;
            for (std::size_t d = 0; d < cfg.d_model; ++d) {
                ds[d] += t.ln_inv_std * (d_ln[d] - mean_dy - t.ln_out[d] * mean_dyy);
            }
        }

        // Stem
        const double* x = inputs.row(ex);
        for (std::size_t d = 0; d < cfg.d_model; ++d) g.b_in.at(0, d) += ds[d];
        for (std::size_t k = 0; k < cfg.input_dim; ++k) {
            const double xv = x[k];
            if (xv == 0.0) continue;
            double* wrow = g.w_in.row(k);
            for (std::size_t d = 0; d < cfg.d_model; ++d) wrow[d] += xv * ds[d];
        }
    }
    return g;
}

ExpertGradMap capture_expert_grads(const ForwardTrace& trace, const Matrix& d_logits,
                                   const CdspParams& params) {
    ExpertGradMap map;
    backward(trace, d_logits, params, &map);
    return map;
}

}  // namespace cdsp::model
