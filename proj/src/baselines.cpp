// SPDX-License-Identifier: Apache-2.0

#include "cdsp/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace cdsp::baselines {

namespace {

void fill_gaussian(Matrix& m, Rng& rng, double stddev) {
    for (auto& v : m.data) v = rng.gaussian(0.0, stddev);
}

}  // namespace

StandardMoEParams StandardMoEParams::init(const model::ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    StandardMoEParams p;
    p.cfg = cfg;
    const std::size_t d = cfg.fixed_rank;  // per-expert hidden width
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
    for (std::size_t e = 0; e < cfg.n_experts; ++e) {
        Matrix u(cfg.d_model, d);
        fill_gaussian(u, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
        Matrix v(d, cfg.d_model);
        fill_gaussian(v, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        p.u_expert.push_back(std::move(u));
        p.v_expert.push_back(std::move(v));
    }
    return p;
}

std::size_t StandardMoEParams::expert_param_count() const {
    std::size_t n = 0;
    for (const auto& m : u_expert) n += m.data.size();
    for (const auto& m : v_expert) n += m.data.size();
    return n;
}

StandardGrads StandardGrads::zeros_like(const StandardMoEParams& p) {
    StandardGrads g;
    g.w_in = Matrix(p.w_in.rows, p.w_in.cols);
    g.b_in = Matrix(p.b_in.rows, p.b_in.cols);
    g.w_out = Matrix(p.w_out.rows, p.w_out.cols);
    g.b_out = Matrix(p.b_out.rows, p.b_out.cols);
    g.w_g = Matrix(p.w_g.rows, p.w_g.cols);
    g.task_embed = Matrix(p.task_embed.rows, p.task_embed.cols);
    for (const auto& m : p.u_expert) g.u_expert.emplace_back(m.rows, m.cols);
    for (const auto& m : p.v_expert) g.v_expert.emplace_back(m.rows, m.cols);
    return g;
}

std::pair<Matrix, StandardTrace> standard_moe_forward(const Matrix& inputs,
                                                      const std::vector<int>& task_ids,
                                                      const StandardMoEParams& params,
                                                      bool training, bool blind, Rng& rng) {
    const model::ModelConfig& cfg = params.cfg;
    const std::size_t batch = inputs.rows;
    if (task_ids.size() != batch) {
        throw std::invalid_argument("standard_moe_forward: task_ids length mismatch");
    }
    const std::size_t d = cfg.fixed_rank;

    StandardTrace trace;
    trace.inputs = &inputs;
    trace.examples.resize(batch);
    Matrix logits(batch, cfg.n_classes);

    for (std::size_t ex = 0; ex < batch; ++ex) {
        StandardExampleTrace& t = trace.examples[ex];
        const double* x = inputs.row(ex);
        const int task = blind ? -1 : task_ids[ex];
        if (task >= static_cast<int>(cfg.n_tasks)) {
            throw std::invalid_argument("standard_moe_forward: task_id out of range");
        }
        t.task_id = task;

        t.stem_out.assign(cfg.d_model, 0.0);
        for (std::size_t k = 0; k < cfg.input_dim; ++k) {
            const double xv = x[k];
            if (xv == 0.0) continue;
            const double* wrow = params.w_in.row(k);
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) t.stem_out[dd] += xv * wrow[dd];
        }
        for (std::size_t dd = 0; dd < cfg.d_model; ++dd) t.stem_out[dd] += params.b_in.at(0, dd);

        {
            double mean = 0.0;
            for (double v : t.stem_out) mean += v;
            mean /= static_cast<double>(cfg.d_model);
            double var = 0.0;
            for (double v : t.stem_out) var += (v - mean) * (v - mean);
            var /= static_cast<double>(cfg.d_model);
            t.ln_inv_std = 1.0 / std::sqrt(var + 1e-5);
            t.ln_out.resize(cfg.d_model);
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                t.ln_out[dd] = (t.stem_out[dd] - mean) * t.ln_inv_std;
            }
        }
        t.mask_active = false;
        if (task >= 0) {
            t.mask_active = training ? !rng.bernoulli(cfg.p_drop) : true;
        }

        std::vector<double> gate_logits(cfg.n_experts, 0.0);
        for (std::size_t e = 0; e < cfg.n_experts; ++e) {
            const double* wrow = params.w_g.row(e);
            double acc = 0.0;
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) acc += wrow[dd] * t.ln_out[dd];
            if (t.mask_active) {
                const double* emb = params.task_embed.row(task);
                for (std::size_t dd = 0; dd < cfg.task_embed_dim; ++dd) {
                    acc += wrow[cfg.d_model + dd] * emb[dd];
                }
            }
            gate_logits[e] = acc;
        }
        t.gate = softmax(gate_logits);
        t.experts = argtop_r(t.gate, cfg.top_k);

        t.moe_out.assign(cfg.d_model, 0.0);
        for (std::size_t i : t.experts) {
            const Matrix& u = params.u_expert[i];
            const Matrix& v = params.v_expert[i];
            std::vector<double> pre(d, 0.0);
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                const double s = t.stem_out[dd];
                if (s == 0.0) continue;
                const double* urow = u.row(dd);
                for (std::size_t p = 0; p < d; ++p) pre[p] += s * urow[p];
            }
            std::vector<double> hidden(d);
            std::vector<double> y_raw(cfg.d_model, 0.0);
            for (std::size_t p = 0; p < d; ++p) {
                hidden[p] = silu(pre[p]);
                const double* vrow = v.row(p);
                for (std::size_t dd = 0; dd < cfg.d_model; ++dd) y_raw[dd] += hidden[p] * vrow[dd];
            }
            const double coef = t.gate[i];
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) t.moe_out[dd] += coef * y_raw[dd];
            t.pre.push_back(std::move(pre));
            t.hidden.push_back(std::move(hidden));
            t.y_raw.push_back(std::move(y_raw));
        }

        double* lrow = logits.row(ex);
        for (std::size_t c = 0; c < cfg.n_classes; ++c) lrow[c] = params.b_out.at(0, c);
        for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
            const double yd = t.moe_out[dd];
            if (yd == 0.0) continue;
            const double* wrow = params.w_out.row(dd);
            for (std::size_t c = 0; c < cfg.n_classes; ++c) lrow[c] += yd * wrow[c];
        }
    }
    check_finite(logits, "standard_moe_forward logits");
    return {std::move(logits), std::move(trace)};
}

StandardGrads standard_backward(const StandardTrace& trace, const Matrix& d_logits,
                                const StandardMoEParams& params,
                                const Matrix* extra_d_gate) {
    const model::ModelConfig& cfg = params.cfg;
    const Matrix& inputs = *trace.inputs;
    StandardGrads g = StandardGrads::zeros_like(params);
    const std::size_t d = cfg.fixed_rank;

    for (std::size_t ex = 0; ex < trace.examples.size(); ++ex) {
        const StandardExampleTrace& t = trace.examples[ex];
        const double* dlog = d_logits.row(ex);

        std::vector<double> dy(cfg.d_model, 0.0);
        for (std::size_t c = 0; c < cfg.n_classes; ++c) g.b_out.at(0, c) += dlog[c];
        for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
            const double yd = t.moe_out[dd];
            double* wout_g = g.w_out.row(dd);
            const double* wout = params.w_out.row(dd);
            double acc = 0.0;
            for (std::size_t c = 0; c < cfg.n_classes; ++c) {
                wout_g[c] += yd * dlog[c];
                acc += wout[c] * dlog[c];
            }
            dy[dd] = acc;
        }

        std::vector<double> ds(cfg.d_model, 0.0);
        std::vector<double> d_gate(cfg.n_experts, 0.0);
        if (extra_d_gate) {
            const double* xg = extra_d_gate->row(ex);
            for (std::size_t e = 0; e < cfg.n_experts; ++e) d_gate[e] = xg[e];
        }

        for (std::size_t pos = 0; pos < t.experts.size(); ++pos) {
            const std::size_t i = t.experts[pos];
            const Matrix& u = params.u_expert[i];
            const Matrix& v = params.v_expert[i];
            Matrix& ug = g.u_expert[i];
            Matrix& vg = g.v_expert[i];
            const double gate = t.gate[i];
            double dy_dot_yraw = 0.0;
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) dy_dot_yraw += dy[dd] * t.y_raw[pos][dd];
            d_gate[i] += dy_dot_yraw;

            for (std::size_t p = 0; p < d; ++p) {
                const double h = t.hidden[pos][p];
                const double* vrow = v.row(p);
                double* vgrow = vg.row(p);
                double dh = 0.0;
                for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                    const double dyr = gate * dy[dd];
                    vgrow[dd] += h * dyr;
                    dh += dyr * vrow[dd];
                }
                const double dpre = dh * silu_prime(t.pre[pos][p]);
                for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                    ug.at(dd, p) += t.stem_out[dd] * dpre;
                    ds[dd] += u.at(dd, p) * dpre;
                }
            }
        }

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
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                wg_g[dd] += dze * t.ln_out[dd];
                d_ln[dd] += dze * wg[dd];
            }
            if (t.mask_active) {
                const double* emb = params.task_embed.row(t.task_id);
                double* emb_g = g.task_embed.row(t.task_id);
                for (std::size_t dd = 0; dd < cfg.task_embed_dim; ++dd) {
                    wg_g[cfg.d_model + dd] += dze * emb[dd];
                    emb_g[dd] += dze * wg[cfg.d_model + dd];
                }
            }
        }

        {
            const double n = static_cast<double>(cfg.d_model);
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                mean_dy += d_ln[dd];
                mean_dyy += d_ln[dd] * t.ln_out[dd];
            }
            mean_dy /= n;
            mean_dyy /= n;
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) {
                ds[dd] += t.ln_inv_std * (d_ln[dd] - mean_dy - t.ln_out[dd] * mean_dyy);
            }
        }

        const double* x = inputs.row(ex);
        for (std::size_t dd = 0; dd < cfg.d_model; ++dd) g.b_in.at(0, dd) += ds[dd];
        for (std::size_t k = 0; k < cfg.input_dim; ++k) {
            const double xv = x[k];
            if (xv == 0.0) continue;
            double* wrow = g.w_in.row(k);
            for (std::size_t dd = 0; dd < cfg.d_model; ++dd) wrow[dd] += xv * ds[dd];
        }
    }
    return g;
}

double load_balance_loss(const Matrix& gate_probs, const std::vector<std::size_t>& top1,
                         Matrix* d_gate) {
    const std::size_t batch = gate_probs.rows;
    const std::size_t n = gate_probs.cols;
    if (top1.size() != batch) throw std::invalid_argument("load_balance_loss: size mismatch");
    std::vector<double> f(n, 0.0), p(n, 0.0);
    for (std::size_t ex = 0; ex < batch; ++ex) {
        f[top1[ex]] += 1.0;
        for (std::size_t e = 0; e < n; ++e) p[e] += gate_probs.at(ex, e);
    }
    double loss = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        f[e] /= static_cast<double>(batch);
        p[e] /= static_cast<double>(batch);
        loss += f[e] * p[e];
    }
    loss *= static_cast<double>(n);
    if (d_gate) {
        *d_gate = Matrix(batch, n);
        // f held constant (hard assignment is non-differentiable)
        for (std::size_t ex = 0; ex < batch; ++ex) {
            for (std::size_t e = 0; e < n; ++e) {
                d_gate->at(ex, e) = static_cast<double>(n) * f[e] / static_cast<double>(batch);
            }
        }
    }
    return loss;
}

}  // namespace cdsp::baselines
