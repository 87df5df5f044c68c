// SPDX-License-Identifier: Apache-2.0
#include "rdopt/estimation.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "rdopt/parallel.hpp"

namespace rdopt {

EstimationStats estimation_stats(const ChannelState& state, const arma::vec& theta, int tau_p,
                                 double pilot_power, double noise_power) {
  if (tau_p < state.user_count())
    throw std::invalid_argument("estimation: tau_p must be >= K");
  if (pilot_power < 0.0) throw std::invalid_argument("estimation: pilot power must be >= 0");
  const int m_aps = state.ap_count();
  const int k_users = state.user_count();
  const arma::cx_mat r_cx(state.R, arma::mat(state.R.n_rows, state.R.n_cols, arma::fill::zeros));

  EstimationStats stats;
  stats.delta.set_size(m_aps, k_users);
  stats.c_coef.set_size(m_aps, k_users);
  stats.gamma.set_size(m_aps, k_users);

  const double a = std::sqrt(static_cast<double>(tau_p) * pilot_power);
  for (int m = 0; m < m_aps; ++m) {
    for (int k = 0; k < k_users; ++k) {
      const arma::cx_mat r_ap_ris = state.beta_ap_ris(m) * r_cx;
      const arma::cx_mat r_ris_user = state.beta_ris_user(k) * r_cx;
      const double delta =
          state.beta_direct(m, k) + cascaded_second_moment(r_ap_ris, r_ris_user, theta);
      const double c = pilot_power > 0.0 ? a * delta / (a * a * delta + noise_power) : 0.0;
      stats.delta(m, k) = delta;
      stats.c_coef(m, k) = c;
      stats.gamma(m, k) = a * delta * c;
    }
  }
  return stats;
}

PowerControl power_control_full(const arma::mat& gamma) {
  PowerControl power;
  power.eta.set_size(gamma.n_rows, gamma.n_cols);
  for (arma::uword m = 0; m < gamma.n_rows; ++m) {
    const double row_sum = arma::accu(gamma.row(m));
    if (!(row_sum > 0.0))
      throw std::invalid_argument("power control: AP with zero total gamma");
    power.eta.row(m).fill(1.0 / row_sum);
  }
  return power;
}

arma::vec sinr_closed_form(const EstimationStats& stats, const PowerControl& power, double rho_d,
                           double noise_power) {
  const arma::uword m_aps = stats.gamma.n_rows;
  const arma::uword k_users = stats.gamma.n_cols;
  if (power.eta.n_rows != m_aps || power.eta.n_cols != k_users)
    throw std::invalid_argument("sinr: eta dimension mismatch");
  if (rho_d < 0.0 || noise_power < 0.0)
    throw std::invalid_argument("sinr: powers must be >= 0");

  arma::vec sinr(k_users);
  for (arma::uword k = 0; k < k_users; ++k) {
    double desired = 0.0;
    for (arma::uword m = 0; m < m_aps; ++m)
      desired += std::sqrt(power.eta(m, k) * rho_d) * stats.gamma(m, k);
    double bu = 0.0;
    for (arma::uword m = 0; m < m_aps; ++m)
      bu += power.eta(m, k) * stats.delta(m, k) * stats.gamma(m, k);
    double mui = 0.0;
    for (arma::uword kp = 0; kp < k_users; ++kp) {
      if (kp == k) continue;
      for (arma::uword m = 0; m < m_aps; ++m)
        mui += power.eta(m, kp) * stats.delta(m, k) * stats.gamma(m, kp);
    }
    sinr(k) = desired * desired / (rho_d * bu + rho_d * mui + noise_power);
  }
  return sinr;
}

double sum_se(const arma::vec& sinr, int tau_d, int tau_c) {
  if (tau_d <= 0 || tau_c <= 0 || tau_d > tau_c)
    throw std::invalid_argument("sum_se: invalid frame split");
  double total = 0.0;
  for (arma::uword k = 0; k < sinr.n_elem; ++k) {
    if (sinr(k) < 0.0) throw std::invalid_argument("sum_se: negative SINR");
    total += std::log2(1.0 + sinr(k));
  }
  return static_cast<double>(tau_d) / static_cast<double>(tau_c) * total;
}

arma::cx_mat simulate_pilot_estimate(const EstimationStats& stats, const arma::cx_mat& u,
                                     int tau_p, double pilot_power, double noise_power,
                                     RandomSource& rng) {
  if (u.n_rows != stats.c_coef.n_rows || u.n_cols != stats.c_coef.n_cols)
    throw std::invalid_argument("pilot estimate: dimension mismatch");
  const double a = std::sqrt(static_cast<double>(tau_p) * pilot_power);
  const double noise_std = std::sqrt(noise_power);
  arma::cx_mat u_hat(u.n_rows, u.n_cols);
  for (arma::uword m = 0; m < u.n_rows; ++m)
    for (arma::uword k = 0; k < u.n_cols; ++k)
      u_hat(m, k) = stats.c_coef(m, k) * (a * u(m, k) + noise_std * rng.cgaussian());
  return u_hat;
}

arma::cx_mat simulate_pilot_estimate(const ChannelState& state, const ChannelRealization& real,
                                     const arma::vec& theta, int tau_p, double pilot_power,
                                     double noise_power, RandomSource& rng) {
  const EstimationStats stats =
      estimation_stats(state, theta, tau_p, pilot_power, noise_power);
  return simulate_pilot_estimate(stats, aggregate_channel(real, theta), tau_p, pilot_power,
                                 noise_power, rng);
}

namespace {

// Raw moment accumulators for one user pair structure.
struct McPartial {
  arma::cx_vec sum_s1;     // K
  arma::vec sum_sq_s1;     // K
  arma::cx_mat sum_s2;     // K x K, column k' contribution onto user k
  arma::mat sum_sq_s2;     // K x K
  std::uint64_t count = 0;

  explicit McPartial(int k_users)
      : sum_s1(k_users, arma::fill::zeros),
        sum_sq_s1(k_users, arma::fill::zeros),
        sum_s2(k_users, k_users, arma::fill::zeros),
        sum_sq_s2(k_users, k_users, arma::fill::zeros) {}
};

}  // namespace

arma::vec monte_carlo_sinr(const CommParams& comm, const ChannelState& state,
                           const arma::vec& theta, const PowerControl& power, double rho_d,
                           std::uint64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("monte carlo: trials must be >= 1");
  const int m_aps = state.ap_count();
  const int k_users = state.user_count();
  const EstimationStats stats =
      estimation_stats(state, theta, comm.tau_p, comm.pilot_power, comm.noise_power);
  arma::mat weight(m_aps, k_users);
  for (int m = 0; m < m_aps; ++m)
    for (int k = 0; k < k_users; ++k) weight(m, k) = std::sqrt(power.eta(m, k) * rho_d);

  constexpr std::uint64_t kChunk = 4096;
  const std::uint64_t chunk_count = (trials + kChunk - 1) / kChunk;
  std::vector<McPartial> partials(chunk_count, McPartial(k_users));

  parallel_for(chunk_count, [&](std::size_t chunk) {
    RandomSource rng(derive_seed(seed, Stream::kMonteCarlo, chunk));
    const std::uint64_t begin = chunk * kChunk;
    const std::uint64_t end = std::min(trials, begin + kChunk);
    McPartial& acc = partials[chunk];
    for (std::uint64_t trial = begin; trial < end; ++trial) {
      const ChannelRealization real = draw_small_scale(state, rng);
      const arma::cx_mat u = aggregate_channel(real, theta);
      const arma::cx_mat u_hat = simulate_pilot_estimate(stats, u, comm.tau_p, comm.pilot_power,
                                                         comm.noise_power, rng);
      for (int k = 0; k < k_users; ++k) {
        std::complex<double> s1(0.0, 0.0);
        for (int m = 0; m < m_aps; ++m) s1 += weight(m, k) * u(m, k) * std::conj(u_hat(m, k));
        acc.sum_s1(k) += s1;
        acc.sum_sq_s1(k) += std::norm(s1);
        for (int kp = 0; kp < k_users; ++kp) {
          if (kp == k) continue;
          std::complex<double> s2(0.0, 0.0);
          for (int m = 0; m < m_aps; ++m)
            s2 += weight(m, kp) * u(m, k) * std::conj(u_hat(m, kp));
          acc.sum_s2(k, kp) += s2;
          acc.sum_sq_s2(k, kp) += std::norm(s2);
        }
      }
      ++acc.count;
    }
  });

  McPartial total(k_users);
  for (const McPartial& p : partials) {
    total.sum_s1 += p.sum_s1;
    total.sum_sq_s1 += p.sum_sq_s1;
    total.sum_s2 += p.sum_s2;
    total.sum_sq_s2 += p.sum_sq_s2;
    total.count += p.count;
  }

  const double n = static_cast<double>(total.count);
  arma::vec sinr(k_users);
  for (int k = 0; k < k_users; ++k) {
    const std::complex<double> d_hat = total.sum_s1(k) / n;
    double var_bu = 0.0;
    if (total.count > 1)
      var_bu = std::max(0.0, (total.sum_sq_s1(k) - n * std::norm(d_hat)) / (n - 1.0));
    double var_mui = 0.0;
    for (int kp = 0; kp < k_users; ++kp) {
      if (kp == k) continue;
      const std::complex<double> mean_s2 = total.sum_s2(k, kp) / n;
      if (total.count > 1)
        var_mui +=
            std::max(0.0, (total.sum_sq_s2(k, kp) - n * std::norm(mean_s2)) / (n - 1.0));
    }
    sinr(k) = std::norm(d_hat) / (var_bu + var_mui + comm.noise_power);
  }
  return sinr;
}

}  // namespace rdopt
