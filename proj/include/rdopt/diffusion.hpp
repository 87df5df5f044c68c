// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>
#include <cstdint>
#include <vector>

#include "rdopt/channel.hpp"
#include "rdopt/dataset.hpp"
#include "rdopt/denoiser.hpp"
#include "rdopt/rng.hpp"

namespace rdopt {

// Variance schedule v_t with m_t = 1 - v_t, cumulative alpha_t = prod m_i,
// and posterior std sigma_t^2 = (1 - alpha_{t-1}) / (1 - alpha_t) * v_t
// (alpha_0 := 1, so sigma_1 = 0). Accessors are 1-based in t.
struct NoiseSchedule {
  int steps = 0;  // T
  arma::vec v;
  arma::vec m;
  arma::vec alpha;
  arma::vec sigma;

  double v_at(int t) const { return v(t - 1); }
  double m_at(int t) const { return m(t - 1); }
  double alpha_at(int t) const { return t == 0 ? 1.0 : alpha(t - 1); }
  double sigma_at(int t) const { return sigma(t - 1); }
};

// Linear v_t from v_first to v_last over T steps.
NoiseSchedule build_schedule(int steps, double v_first, double v_last);

// theta_t = sqrt(alpha_t) theta_0 + sqrt(1 - alpha_t) eps, normalized domain.
arma::vec forward_noise(const arma::vec& theta0_norm, int t, const arma::vec& eps,
                        const NoiseSchedule& schedule);

// [0, 2*pi) <-> [-1, 1) maps; denormalization wraps arbitrary reals.
arma::vec normalize_phase(const arma::vec& theta);
PhaseVector denormalize_phase(const arma::vec& normalized);

struct TrainConfig {
  int epochs = 500;
  int batch_size = 8;
  double learning_rate = 5e-4;
  double learning_rate_min = 1e-5;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> loss_trace;  // one entry per epoch
  AdamState adam;
};

// Noise-prediction training: each epoch shuffles the dataset, draws a
// uniform timestep and fresh Gaussian noise per sample, and applies one
// Adam update per batch on the mean squared noise-prediction error.
// The learning rate follows a cosine decay from `learning_rate` to
// `learning_rate_min`.
TrainResult train(const ExpertDataset& dataset, DenoiserParams& params,
                  const NoiseSchedule& schedule, const TrainConfig& cfg);

struct SampleResult {
  PhaseVector phases;
  int denoiser_evals = 0;
};

// Ancestral sampling: theta_T ~ N(0, I), then for t = T..1
//   mu = (theta_t - v_t / sqrt(1 - alpha_t) * eps_w) / sqrt(m_t),
//   theta_{t-1} = mu + sigma_t * eps  (no noise at t = 1).
// Exactly T denoiser evaluations.
SampleResult ddpm_sample(const DenoiserParams& params, const arma::vec& condition,
                         const NoiseSchedule& schedule, RandomSource& rng);

// Sub-step indices round(i T / S), i = 1..S.
std::vector<int> ddim_substeps(int steps, int sub_steps);

// Implicit sampling over S uniformly spaced sub-steps; deterministic given
// the initial draw:
//   theta_{t-1} = (theta_t - sqrt(1 - alpha_t) (1 - sqrt(m_t)) eps_w) / sqrt(m_t).
// Exactly S denoiser evaluations.
SampleResult ddim_sample(const DenoiserParams& params, const arma::vec& condition,
                         const NoiseSchedule& schedule, int sub_steps, RandomSource& rng);

}  // namespace rdopt
