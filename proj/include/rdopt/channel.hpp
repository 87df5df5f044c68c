// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>

#include "rdopt/rng.hpp"

namespace rdopt {

// Deployment and air-interface constants. Powers are linear values
// normalized to the unit noise floor (sigma_n2 = 1 by convention).
struct SystemConfig {
  int ap_count = 8;        // M
  int user_count = 3;      // K
  int ris_elements = 16;   // N, perfect square (square RIS grid)
  int tau_c = 200;         // symbols per coherence interval
  int tau_p = 3;           // uplink training symbols, >= K
  double pilot_power = 100.0;    // p_p, linear
  double downlink_power = 1.0;   // rho_d, linear (sweeps override per point)
  double noise_power = 1.0;      // sigma_n^2
  double area_side_m = 1000.0;
  double carrier_wavelength_m = 299792458.0 / 1.9e9;
  double ris_element_spacing_m = carrier_wavelength_m / 4.0;
  double element_area_m2 = ris_element_spacing_m * ris_element_spacing_m;  // A
  double ap_height_m = 15.0;
  double user_height_m = 1.65;
  double ris_height_m = 15.0;
  double min_ap_user_distance_m = 10.0;
  bool shadow_fading = false;
  double shadow_sigma_db = 8.0;

  int tau_d() const { return tau_c - tau_p; }
  // Throws std::invalid_argument when any invariant is broken.
  void validate() const;
};

// Frame/power parameters consumed by the estimation and SE layer.
struct CommParams {
  int tau_c = 200;
  int tau_p = 3;
  double pilot_power = 100.0;
  double noise_power = 1.0;

  int tau_d() const { return tau_c - tau_p; }
};

inline CommParams make_comm_params(const SystemConfig& cfg) {
  return CommParams{cfg.tau_c, cfg.tau_p, cfg.pilot_power, cfg.noise_power};
}

// One network drop: geometry plus all large-scale statistics. The RIS
// element area A is folded into beta_ap_ris / beta_ris_user so that the
// link covariance is exactly beta * R downstream.
struct ChannelState {
  arma::vec beta_ap_ris;    // M, includes A
  arma::vec beta_ris_user;  // K, includes A
  arma::mat beta_direct;    // M x K
  arma::mat R;              // N x N spatial correlation, unit diagonal
  arma::mat R_sqrt;         // symmetric PSD square root of R
  arma::mat ap_pos;         // M x 3, meters
  arma::mat user_pos;       // K x 3
  arma::vec ris_pos;        // 3

  int ap_count() const { return static_cast<int>(beta_ap_ris.n_elem); }
  int user_count() const { return static_cast<int>(beta_ris_user.n_elem); }
  int ris_elements() const { return static_cast<int>(R.n_rows); }

  // Recomputes R_sqrt from R (eigendecomposition, negative eigenvalues
  // clamped to zero). Needed after building a state by hand.
  void finalize();
};

// One small-scale fading draw.
struct ChannelRealization {
  arma::cx_mat g;  // M x N, row m = AP m -> RIS
  arma::cx_mat h;  // K x N, row k = RIS -> user k
  arma::cx_mat l;  // M x K direct channels
};

// RIS phase configuration, theta in [0, 2*pi)^N. The diffusion model
// works on the normalized image in [-1, 1).
struct PhaseVector {
  arma::vec theta;

  arma::vec normalized() const;
  static PhaseVector from_normalized(const arma::vec& x);
  static double wrap(double angle);
};

// Three-slope path loss in dB, d in km. Constant below the inner
// breakpoint, -20 dB/decade between breakpoints, -35 dB/decade beyond.
double pathloss_three_slope_db(double d_km);

// sinc-kernel spatial correlation for a sqrt(N) x sqrt(N) planar grid:
// [R]_{n,n'} = sinc(2 d_{nn'} / lambda).
arma::mat build_ris_correlation(int n_elements, double spacing_m, double wavelength_m);

// Uniform AP/user placement with a minimum AP-user distance floor, RIS at
// the center of the y=0 edge. Deterministic given the random source state.
ChannelState draw_drop(const SystemConfig& cfg, RandomSource& rng);

// Correlated Rayleigh draws: g_m ~ CN(0, beta_m R), h_k ~ CN(0, beta_k R),
// l_mk ~ CN(0, beta_mk).
ChannelRealization draw_small_scale(const ChannelState& state, RandomSource& rng);

// u_mk = l_mk + h_k^H Theta g_m.
arma::cx_mat aggregate_channel(const ChannelRealization& realization, const arma::vec& theta);

// Tr(Theta Rmr Theta^H Rrk) for Theta = diag(exp(j theta)); real and >= 0
// for Hermitian PSD inputs.
double cascaded_second_moment(const arma::cx_mat& r_ap_ris, const arma::cx_mat& r_ris_user,
                              const arma::vec& theta);

}  // namespace rdopt
