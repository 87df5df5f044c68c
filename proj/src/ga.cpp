// SPDX-License-Identifier: Apache-2.0
#include "rdopt/ga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rdopt {

void GAConfig::validate() const {
  if (population < 2) throw std::invalid_argument("ga: population must be >= 2");
  if (generations < 1) throw std::invalid_argument("ga: generations must be >= 1");
  if (elite < 0 || elite >= population)
    throw std::invalid_argument("ga: elite must be in [0, population)");
  if (tournament_size < 1 || tournament_size > population)
    throw std::invalid_argument("ga: tournament size out of range");
  if (crossover_rate < 0.0 || crossover_rate > 1.0 || mutation_rate < 0.0 || mutation_rate > 1.0)
    throw std::invalid_argument("ga: rates must be probabilities");
  if (mutation_sigma_rad < 0.0) throw std::invalid_argument("ga: mutation sigma must be >= 0");
}

double fitness(const CommParams& comm, const ChannelState& state, const arma::vec& theta,
               double rho_d) {
  const EstimationStats stats =
      estimation_stats(state, theta, comm.tau_p, comm.pilot_power, comm.noise_power);
  const PowerControl power = power_control_full(stats.gamma);
  const arma::vec sinr = sinr_closed_form(stats, power, rho_d, comm.noise_power);
  return sum_se(sinr, comm.tau_d(), comm.tau_c);
}

namespace {

arma::vec random_phases(int n, RandomSource& rng) {
  arma::vec theta(n);
  for (int i = 0; i < n; ++i) theta(i) = rng.uniform(0.0, 2.0 * arma::datum::pi);
  return theta;
}

int tournament_pick(const std::vector<double>& scores, int tournament_size, int population,
                    RandomSource& rng) {
  int best = static_cast<int>(rng.uniform_index(population));
  for (int i = 1; i < tournament_size; ++i) {
    const int candidate = static_cast<int>(rng.uniform_index(population));
    if (scores[candidate] > scores[best]) best = candidate;
  }
  return best;
}

}  // namespace

GaResult ga_optimize(const CommParams& comm, const ChannelState& state, double rho_d,
                     const GAConfig& ga, RandomSource& rng) {
  ga.validate();
  const int n = state.ris_elements();

  std::vector<arma::vec> population(ga.population);
  std::vector<double> scores(ga.population);
  for (int i = 0; i < ga.population; ++i) {
    population[i] = random_phases(n, rng);
    scores[i] = fitness(comm, state, population[i], rho_d);
  }

  GaResult result;
  {
    const auto best_it = std::max_element(scores.begin(), scores.end());
    result.best_fitness = *best_it;
    result.best.theta = population[std::distance(scores.begin(), best_it)];
  }
  result.fitness_trace.reserve(ga.generations);

  std::vector<int> order(ga.population);
  for (int gen = 0; gen < ga.generations; ++gen) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] > scores[b]; });

    std::vector<arma::vec> next;
    next.reserve(ga.population);
    for (int e = 0; e < ga.elite; ++e) next.push_back(population[order[e]]);

    while (static_cast<int>(next.size()) < ga.population) {
      const arma::vec& pa = population[tournament_pick(scores, ga.tournament_size, ga.population, rng)];
      const arma::vec& pb = population[tournament_pick(scores, ga.tournament_size, ga.population, rng)];
      arma::vec child_a = pa;
      arma::vec child_b = pb;
      if (rng.uniform(0.0, 1.0) < ga.crossover_rate) {
        for (int i = 0; i < n; ++i) {
          const double lo = std::min(pa(i), pb(i));
          const double hi = std::max(pa(i), pb(i));
          const double span = ga.blend_alpha * (hi - lo);
          child_a(i) = PhaseVector::wrap(rng.uniform(lo - span, hi + span));
          child_b(i) = PhaseVector::wrap(rng.uniform(lo - span, hi + span));
        }
      }
      for (arma::vec* child : {&child_a, &child_b}) {
        for (int i = 0; i < n; ++i)
          if (rng.uniform(0.0, 1.0) < ga.mutation_rate)
            (*child)(i) = PhaseVector::wrap((*child)(i) + ga.mutation_sigma_rad * rng.gaussian());
        if (static_cast<int>(next.size()) < ga.population) next.push_back(*child);
      }
    }

    population = std::move(next);
    for (int i = 0; i < ga.population; ++i) {
      scores[i] = fitness(comm, state, population[i], rho_d);
      if (scores[i] > result.best_fitness) {
        result.best_fitness = scores[i];
        result.best.theta = population[i];
      }
    }
    result.fitness_trace.push_back(result.best_fitness);
  }
  return result;
}

GridSearchResult brute_force_phase(const CommParams& comm, const ChannelState& state, double rho_d,
                                   int grid_points_per_dim) {
  const int n = state.ris_elements();
  if (n > 3)
    throw std::invalid_argument("brute force: refusing N > 3 (exhaustive grid infeasible)");
  if (grid_points_per_dim < 2) throw std::invalid_argument("brute force: need >= 2 grid points");

  arma::vec grid(grid_points_per_dim);
  for (int j = 0; j < grid_points_per_dim; ++j)
    grid(j) = 2.0 * arma::datum::pi * j / grid_points_per_dim;

  GridSearchResult result;
  result.best_fitness = -arma::datum::inf;
  arma::vec theta(n, arma::fill::zeros);
  std::vector<int> idx(n, 0);
  for (;;) {
    for (int d = 0; d < n; ++d) theta(d) = grid(idx[d]);
    const double value = fitness(comm, state, theta, rho_d);
    ++result.evaluations;
    if (value > result.best_fitness) {
      result.best_fitness = value;
      result.best.theta = theta;
    }
    int d = 0;
    for (; d < n; ++d) {
      if (++idx[d] < grid_points_per_dim) break;
      idx[d] = 0;
    }
    if (d == n) break;
  }
  return result;
}

}  // namespace rdopt
