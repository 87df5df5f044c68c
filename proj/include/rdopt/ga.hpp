// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>
#include <cstdint>
#include <vector>

#include "rdopt/channel.hpp"
#include "rdopt/estimation.hpp"
#include "rdopt/rng.hpp"

namespace rdopt {

struct GAConfig {
  int population = 50;
  int generations = 150;
  int elite = 2;
  int tournament_size = 3;
  double crossover_rate = 0.9;
  double blend_alpha = 0.5;
  double mutation_rate = 0.1;
  double mutation_sigma_rad = 0.3;

  void validate() const;
};

// Objective of the phase-shift search: closed-form downlink sum SE under
// full-power AP-uniform control.
double fitness(const CommParams& comm, const ChannelState& state, const arma::vec& theta,
               double rho_d);

struct GaResult {
  PhaseVector best;
  double best_fitness = 0.0;
  std::vector<double> fitness_trace;  // best-so-far, one entry per generation
};

// Elitist real-valued GA: tournament selection, blend crossover, Gaussian
// mutation, phases wrapped to [0, 2*pi). Single-threaded and deterministic
// for a given random source.
GaResult ga_optimize(const CommParams& comm, const ChannelState& state, double rho_d,
                     const GAConfig& ga, RandomSource& rng);

struct GridSearchResult {
  PhaseVector best;
  double best_fitness = 0.0;
  std::uint64_t evaluations = 0;
};

// Exhaustive search over a uniform per-dimension phase grid. Refuses
// N > 3 (grid size explodes); intended as a small-N oracle.
GridSearchResult brute_force_phase(const CommParams& comm, const ChannelState& state, double rho_d,
                                   int grid_points_per_dim);

}  // namespace rdopt
