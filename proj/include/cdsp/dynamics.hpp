// SPDX-License-Identifier: Apache-2.0
//
// Stochastic simulator for per-connection logit chains under drift + noise:
// super-martingale pruning, entropy descent, residual plasticity, and the
// high-dimensional conflict-probability Monte Carlo.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdsp/rng.hpp"

namespace cdsp::dynamics {

enum class InitMode { kZeroCentered, kSelfPreservation };

struct ChainConfig {
    double eta = 0.05;          // step size
    double lambda_c = 10.0;
    double lambda_r = 1e-4;
    double task_gain = 0.0;     // G, positive grows the connection
    double conflict = 0.5;      // C >= 0
    double partner_prob = 0.5;  // P_v
    double noise_std = 0.1;     // sigma_xi
    InitMode init_mode = InitMode::kZeroCentered;
    double init_eps = 0.02;
    std::size_t steps = 5000;
    std::size_t n_chains = 10000;
    std::size_t record_every = 10;  // trajectory thinning
    std::uint64_t seed = 0;

    void validate() const;
};

// Drift D(A) = G - lambda_c * P_v * C * sigma'(A) - lambda_r * sgn(A).
double drift(double logit, const ChainConfig& cfg);

struct Ensemble {
    std::vector<double> logits;          // current A per chain
    std::size_t step = 0;
    // Thinned trajectories: recorded[k][chain] at step record_steps[k].
    std::vector<std::size_t> record_steps;
    std::vector<std::vector<double>> recorded;
};

Ensemble init_ensemble(const ChainConfig& cfg, Rng& rng);
void step_ensemble(Ensemble& ens, const ChainConfig& cfg, Rng& rng);
void run(Ensemble& ens, const ChainConfig& cfg, Rng& rng);  // all cfg.steps

struct SupermartingaleReport {
    std::vector<double> bin_mean_delta;  // conditional E[P_{t+1}-P_t] per decile
    std::vector<std::size_t> bin_count;
    std::vector<bool> bin_flagged;       // too few samples
    double fraction_nonpositive = 0.0;   // over occupied bins
};

// Bins P_t into deciles over all recorded consecutive step pairs.
SupermartingaleReport empirical_supermartingale_check(const Ensemble& ens,
                                                      std::size_t min_samples = 50);

double system_entropy(const std::vector<double>& probabilities);

// Mean per-connection binary entropy over the trailing tail_fraction of the
// recorded trajectory.
double residual_entropy_estimate(const Ensemble& ens, double tail_fraction);

// Fraction of chains with sigma(logit) below threshold at the current step.
double absorption_fraction(const Ensemble& ens, double threshold = 0.01);

struct ConflictProbabilityReport {
    double negative_fraction = 0.0;
    double cosine_std = 0.0;
};

// Monte Carlo over pairs of isotropic Gaussian vectors in R^{d_out}.
ConflictProbabilityReport conflict_probability_experiment(std::size_t d_out,
                                                          std::size_t n_pairs, Rng& rng);

}  // namespace cdsp::dynamics
