// SPDX-License-Identifier: Apache-2.0
#include "rdopt/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace rdopt {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Classical three-slope constants.
constexpr double kPathlossConstDb = 140.7;
constexpr double kBreakInnerKm = 0.010;  // d0
constexpr double kBreakOuterKm = 0.050;  // d1

bool is_perfect_square(int n) {
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return r * r == n;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace

void SystemConfig::validate() const {
  if (ap_count < 1 || user_count < 1 || ris_elements < 1)
    throw std::invalid_argument("config: M, K, N must be >= 1");
  if (!is_perfect_square(ris_elements))
    throw std::invalid_argument("config: N must be a perfect square");
  if (tau_p < user_count) throw std::invalid_argument("config: tau_p must be >= K");
  if (tau_c <= tau_p) throw std::invalid_argument("config: tau_d = tau_c - tau_p must be > 0");
  if (pilot_power < 0.0 || downlink_power < 0.0 || noise_power < 0.0)
    throw std::invalid_argument("config: powers must be >= 0");
  if (area_side_m <= 0.0 || carrier_wavelength_m <= 0.0 || ris_element_spacing_m <= 0.0 ||
      element_area_m2 <= 0.0)
    throw std::invalid_argument("config: geometry constants must be > 0");
}

void ChannelState::finalize() {
  arma::vec eigval;
  arma::mat eigvec;
  if (!arma::eig_sym(eigval, eigvec, R))
    throw std::runtime_error("channel: eigendecomposition of R failed");
  eigval.transform([](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; });
  R_sqrt = eigvec * arma::diagmat(eigval) * eigvec.t();
}

arma::vec PhaseVector::normalized() const {
  return (theta - arma::datum::pi) / arma::datum::pi;
}

double PhaseVector::wrap(double angle) {
  double w = std::fmod(angle, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w;
}

PhaseVector PhaseVector::from_normalized(const arma::vec& x) {
  PhaseVector pv;
  pv.theta.set_size(x.n_elem);
  for (arma::uword i = 0; i < x.n_elem; ++i) pv.theta(i) = wrap((x(i) + 1.0) * arma::datum::pi);
  return pv;
}

double pathloss_three_slope_db(double d_km) {
  if (!(d_km > 0.0)) throw std::invalid_argument("pathloss: distance must be > 0");
  const double mid_offset = -kPathlossConstDb - 15.0 * std::log10(kBreakOuterKm);
  if (d_km > kBreakOuterKm) return -kPathlossConstDb - 35.0 * std::log10(d_km);
  if (d_km > kBreakInnerKm) return mid_offset - 20.0 * std::log10(d_km);
  return mid_offset - 20.0 * std::log10(kBreakInnerKm);
}

arma::mat build_ris_correlation(int n_elements, double spacing_m, double wavelength_m) {
  if (!is_perfect_square(n_elements))
    throw std::invalid_argument("correlation: N must be a perfect square");
  if (spacing_m <= 0.0 || wavelength_m <= 0.0)
    throw std::invalid_argument("correlation: spacing and wavelength must be > 0");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_elements))));
  arma::mat grid(n_elements, 2);
  for (int n = 0; n < n_elements; ++n) {
    grid(n, 0) = spacing_m * (n % side);
    grid(n, 1) = spacing_m * (n / side);
  }
  arma::mat r(n_elements, n_elements);
  for (int a = 0; a < n_elements; ++a) {
    r(a, a) = 1.0;
    for (int b = a + 1; b < n_elements; ++b) {
      const double dx = grid(a, 0) - grid(b, 0);
      const double dy = grid(a, 1) - grid(b, 1);
      const double d = std::sqrt(dx * dx + dy * dy);
      const double x = 2.0 * d / wavelength_m;
      const double arg = arma::datum::pi * x;
      r(a, b) = r(b, a) = std::sin(arg) / arg;
    }
  }
  return r;
}

namespace {

double distance_km(const arma::vec& a, const arma::vec& b) {
  return arma::norm(a - b) / 1000.0;
}

double shadowed_linear(const SystemConfig& cfg, double pl_db, RandomSource& rng) {
  if (cfg.shadow_fading) pl_db += cfg.shadow_sigma_db * rng.gaussian();
  return db_to_linear(pl_db);
}

}  // namespace

ChannelState draw_drop(const SystemConfig& cfg, RandomSource& rng) {
  cfg.validate();
  const int m_aps = cfg.ap_count;
  const int k_users = cfg.user_count;

  ChannelState state;
  state.ris_pos = {cfg.area_side_m / 2.0, 0.0, cfg.ris_height_m};

  state.ap_pos.set_size(m_aps, 3);
  for (int m = 0; m < m_aps; ++m) {
    state.ap_pos(m, 0) = rng.uniform(0.0, cfg.area_side_m);
    state.ap_pos(m, 1) = rng.uniform(0.0, cfg.area_side_m);
    state.ap_pos(m, 2) = cfg.ap_height_m;
  }

  // Rejection resampling keeps every user at least the floor distance
  // (horizontal) away from every AP.
  state.user_pos.set_size(k_users, 3);
  for (int k = 0; k < k_users; ++k) {
    for (;;) {
      const double x = rng.uniform(0.0, cfg.area_side_m);
      const double y = rng.uniform(0.0, cfg.area_side_m);
      bool ok = true;
      for (int m = 0; m < m_aps && ok; ++m) {
        const double dx = x - state.ap_pos(m, 0);
        const double dy = y - state.ap_pos(m, 1);
        ok = dx * dx + dy * dy >= cfg.min_ap_user_distance_m * cfg.min_ap_user_distance_m;
      }
      if (ok) {
        state.user_pos(k, 0) = x;
        state.user_pos(k, 1) = y;
        state.user_pos(k, 2) = cfg.user_height_m;
        break;
      }
    }
  }

  state.beta_ap_ris.set_size(m_aps);
  for (int m = 0; m < m_aps; ++m) {
    const double d = distance_km(state.ap_pos.row(m).t(), state.ris_pos);
    state.beta_ap_ris(m) =
        cfg.element_area_m2 * shadowed_linear(cfg, pathloss_three_slope_db(d), rng);
  }
  state.beta_ris_user.set_size(k_users);
  for (int k = 0; k < k_users; ++k) {
    const double d = distance_km(state.user_pos.row(k).t(), state.ris_pos);
    state.beta_ris_user(k) =
        cfg.element_area_m2 * shadowed_linear(cfg, pathloss_three_slope_db(d), rng);
  }
  state.beta_direct.set_size(m_aps, k_users);
  for (int m = 0; m < m_aps; ++m)
    for (int k = 0; k < k_users; ++k) {
      const double d = distance_km(state.ap_pos.row(m).t(), state.user_pos.row(k).t());
      state.beta_direct(m, k) = shadowed_linear(cfg, pathloss_three_slope_db(d), rng);
    }

  state.R = build_ris_correlation(cfg.ris_elements, cfg.ris_element_spacing_m,
                                  cfg.carrier_wavelength_m);
  state.finalize();
  return state;
}

ChannelRealization draw_small_scale(const ChannelState& state, RandomSource& rng) {
  const int m_aps = state.ap_count();
  const int k_users = state.user_count();
  const int n = state.ris_elements();
  if (state.R_sqrt.n_rows != static_cast<arma::uword>(n))
    throw std::runtime_error("channel: state not finalized (missing R_sqrt)");

  ChannelRealization real;
  real.g.set_size(m_aps, n);
  real.h.set_size(k_users, n);
  real.l.set_size(m_aps, k_users);

  arma::cx_vec z(n);
  for (int m = 0; m < m_aps; ++m) {
    for (int i = 0; i < n; ++i) z(i) = rng.cgaussian();
    real.g.row(m) = (std::sqrt(state.beta_ap_ris(m)) * (state.R_sqrt * z)).st();
  }
  for (int k = 0; k < k_users; ++k) {
    for (int i = 0; i < n; ++i) z(i) = rng.cgaussian();
    real.h.row(k) = (std::sqrt(state.beta_ris_user(k)) * (state.R_sqrt * z)).st();
  }
  for (int m = 0; m < m_aps; ++m)
    for (int k = 0; k < k_users; ++k)
      real.l(m, k) = std::sqrt(state.beta_direct(m, k)) * rng.cgaussian();
  return real;
}

arma::cx_mat aggregate_channel(const ChannelRealization& realization, const arma::vec& theta) {
  const arma::uword n = realization.g.n_cols;
  if (theta.n_elem != n || realization.h.n_cols != n)
    throw std::invalid_argument("aggregate: dimension mismatch");
  arma::cx_vec phase(n);
  for (arma::uword i = 0; i < n; ++i) phase(i) = std::polar(1.0, theta(i));
  // u = l + g Theta h^H, row m / column k.
  return realization.l + realization.g * arma::diagmat(phase) * realization.h.t();
}

double cascaded_second_moment(const arma::cx_mat& r_ap_ris, const arma::cx_mat& r_ris_user,
                              const arma::vec& theta) {
  const arma::uword n = theta.n_elem;
  if (r_ap_ris.n_rows != n || r_ap_ris.n_cols != n || r_ris_user.n_rows != n ||
      r_ris_user.n_cols != n)
    throw std::invalid_argument("cascaded moment: dimension mismatch");
  arma::cx_mat phase_matrix(n, n, arma::fill::zeros);
  for (arma::uword i = 0; i < n; ++i) phase_matrix(i, i) = std::polar(1.0, theta(i));
  const arma::cx_mat reflected = phase_matrix * r_ap_ris * phase_matrix.t();
  const std::complex<double> tr = arma::trace(reflected * r_ris_user);
  return tr.real();
}

}  // namespace rdopt
