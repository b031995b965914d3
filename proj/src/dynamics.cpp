// SPDX-License-Identifier: Apache-2.0

#include "cdsp/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cdsp/linalg.hpp"

namespace cdsp::dynamics {

namespace {
constexpr double kLogitClamp = 50.0;  // sigmoid saturated to machine precision far earlier
}

void ChainConfig::validate() const {
    if (eta <= 0.0) throw std::invalid_argument("ChainConfig: eta must be > 0");
    if (conflict < 0.0) throw std::invalid_argument("ChainConfig: conflict must be >= 0");
    if (partner_prob < 0.0 || partner_prob > 1.0) {
        throw std::invalid_argument("ChainConfig: partner_prob outside [0,1]");
    }
    if (noise_std < 0.0) throw std::invalid_argument("ChainConfig: noise_std must be >= 0");
    if (n_chains == 0 || steps == 0) throw std::invalid_argument("ChainConfig: empty run");
}

double drift(double logit, const ChainConfig& cfg) {
    const double sgn = logit > 0.0 ? 1.0 : (logit < 0.0 ? -1.0 : 0.0);
    return cfg.task_gain -
           cfg.lambda_c * cfg.partner_prob * cfg.conflict * sigmoid_prime(logit) -
           cfg.lambda_r * sgn;
}

Ensemble init_ensemble(const ChainConfig& cfg, Rng& rng) {
    cfg.validate();
    Ensemble ens;
    ens.logits.resize(cfg.n_chains);
    for (auto& a : ens.logits) {
        a = cfg.init_mode == InitMode::kZeroCentered ? rng.gaussian(0.0, cfg.init_eps) : 4.0;
    }
    ens.record_steps.push_back(0);
    ens.recorded.push_back(ens.logits);
    return ens;
}

void step_ensemble(Ensemble& ens, const ChainConfig& cfg, Rng& rng) {
    for (auto& a : ens.logits) {
        const double xi = cfg.noise_std > 0.0 ? rng.gaussian(0.0, cfg.noise_std) : 0.0;
        a += cfg.eta * (drift(a, cfg) + xi);
        a = std::clamp(a, -kLogitClamp, kLogitClamp);
    }
    ++ens.step;
    if (ens.step % cfg.record_every == 0 || ens.step == cfg.steps) {
        ens.record_steps.push_back(ens.step);
        ens.recorded.push_back(ens.logits);
    }
}

void run(Ensemble& ens, const ChainConfig& cfg, Rng& rng) {
    while (ens.step < cfg.steps) step_ensemble(ens, cfg, rng);
}

SupermartingaleReport empirical_supermartingale_check(const Ensemble& ens,
                                                      std::size_t min_samples) {
    SupermartingaleReport rep;
    rep.bin_mean_delta.assign(10, 0.0);
    rep.bin_count.assign(10, 0);
    rep.bin_flagged.assign(10, false);
    for (std::size_t k = 0; k + 1 < ens.recorded.size(); ++k) {
        const auto& cur = ens.recorded[k];
        const auto& nxt = ens.recorded[k + 1];
        for (std::size_t c = 0; c < cur.size(); ++c) {
            const double p0 = sigmoid(cur[c]);
            const double p1 = sigmoid(nxt[c]);
            auto bin = static_cast<std::size_t>(std::min(9.0, p0 * 10.0));
            rep.bin_mean_delta[bin] += p1 - p0;
            ++rep.bin_count[bin];
        }
    }
    std::size_t occupied = 0, nonpos = 0;
    for (std::size_t b = 0; b < 10; ++b) {
        if (rep.bin_count[b] == 0) continue;
        rep.bin_mean_delta[b] /= static_cast<double>(rep.bin_count[b]);
        rep.bin_flagged[b] = rep.bin_count[b] < min_samples;
        if (rep.bin_flagged[b]) continue;
        ++occupied;
        if (rep.bin_mean_delta[b] <= 0.0) ++nonpos;
    }
    rep.fraction_nonpositive =
        occupied == 0 ? 0.0 : static_cast<double>(nonpos) / static_cast<double>(occupied);
    return rep;
}

double system_entropy(const std::vector<double>& probabilities) {
    double h = 0.0;
    for (double p : probabilities) h += binary_entropy(p);
    return h;
}

double residual_entropy_estimate(const Ensemble& ens, double tail_fraction) {
    if (tail_fraction <= 0.0 || tail_fraction > 1.0) {
        throw std::invalid_argument("residual_entropy_estimate: bad tail_fraction");
    }
    const std::size_t n_rec = ens.recorded.size();
    const auto n_tail = static_cast<std::size_t>(std::ceil(n_rec * tail_fraction));
    if (n_tail == 0) throw std::invalid_argument("residual_entropy_estimate: tail too short");
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t k = n_rec - n_tail; k < n_rec; ++k) {
        for (double a : ens.recorded[k]) {
            acc += binary_entropy(sigmoid(a));
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double absorption_fraction(const Ensemble& ens, double threshold) {
    std::size_t n = 0;
    for (double a : ens.logits) {
        if (sigmoid(a) < threshold) ++n;
    }
    return static_cast<double>(n) / static_cast<double>(ens.logits.size());
}

ConflictProbabilityReport conflict_probability_experiment(std::size_t d_out,
                                                          std::size_t n_pairs, Rng& rng) {
    ConflictProbabilityReport rep;
    std::size_t neg = 0;
    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> a(d_out), b(d_out);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        for (auto& v : a) v = rng.gaussian();
        for (auto& v : b) v = rng.gaussian();
        const double s = cosine_similarity(a, b, 0.0);
        if (s < 0.0) ++neg;
        sum += s;
        sum_sq += s * s;
    }
    const double n = static_cast<double>(n_pairs);
    rep.negative_fraction = static_cast<double>(neg) / n;
    const double mean = sum / n;
    rep.cosine_std = std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
    return rep;
}

}  // namespace cdsp::dynamics
