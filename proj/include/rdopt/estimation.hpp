// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>
#include <cstdint>

#include "rdopt/channel.hpp"
#include "rdopt/rng.hpp"

namespace rdopt {

// LMMSE statistics per (AP, user) pair:
//   delta = total aggregated-channel variance,
//   c_coef = LMMSE scaling,
//   gamma = estimated-channel variance (gamma <= delta).
struct EstimationStats {
  arma::mat delta;
  arma::mat c_coef;
  arma::mat gamma;
};

struct PowerControl {
  arma::mat eta;  // M x K, sum_k eta_mk gamma_mk <= 1 per AP
};

// delta_mk = beta_mk + Tr(Theta Rmr Theta^H Rrk) with Rmr = beta_ap_ris * R
// and Rrk = beta_ris_user * R, then the LMMSE coefficients
//   c = sqrt(tau_p p_p) delta / (tau_p p_p delta + sigma^2),
//   gamma = sqrt(tau_p p_p) delta c.
EstimationStats estimation_stats(const ChannelState& state, const arma::vec& theta, int tau_p,
                                 double pilot_power, double noise_power = 1.0);

// AP-uniform full power: eta_mk = 1 / sum_k' gamma_mk', equality in the
// per-AP constraint. Throws on a degenerate all-zero gamma row.
PowerControl power_control_full(const arma::mat& gamma);

// Closed-form effective SINR per user (statistical-CSI conjugate
// beamforming, use-and-then-forget bound).
arma::vec sinr_closed_form(const EstimationStats& stats, const PowerControl& power, double rho_d,
                           double noise_power);

// (tau_d / tau_c) * sum_k log2(1 + Delta_k).
double sum_se(const arma::vec& sinr, int tau_d, int tau_c);

// One noisy pilot round: u_hat_mk = c_mk (sqrt(tau_p p_p) u_mk + n_mk),
// n_mk ~ CN(0, sigma^2) independent across (m, k) by pilot orthogonality.
arma::cx_mat simulate_pilot_estimate(const EstimationStats& stats, const arma::cx_mat& u,
                                     int tau_p, double pilot_power, double noise_power,
                                     RandomSource& rng);

// Convenience overload drawing nothing but the pilot noise.
arma::cx_mat simulate_pilot_estimate(const ChannelState& state, const ChannelRealization& real,
                                     const arma::vec& theta, int tau_p, double pilot_power,
                                     double noise_power, RandomSource& rng);

// Empirical SINR from fresh (realization, pilot-noise) draws: estimates the
// mean desired signal and the beamforming-uncertainty / multi-user
// interference variances, then forms |D|^2 / (var BU + var MUI + sigma^2).
// Chunked with per-chunk seeds; the result does not depend on thread count.
arma::vec monte_carlo_sinr(const CommParams& comm, const ChannelState& state,
                           const arma::vec& theta, const PowerControl& power, double rho_d,
                           std::uint64_t trials, std::uint64_t seed);

}  // namespace rdopt
