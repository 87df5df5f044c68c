// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdopt/channel.hpp"
#include "rdopt/ga.hpp"

namespace rdopt {

// One expert-labeled sample: standardized large-scale condition vector and
// the GA phase solution for it. rho_d and the achieved SE ride along as
// metadata (the condition itself excludes rho_d by default).
struct ExpertRecord {
  arma::vec condition;  // length M + K + M*K, standardized dB domain
  arma::vec theta0;     // length N, [0, 2*pi)
  double rho_d_db = 0.0;
  double achieved_se = 0.0;
};

struct ExpertDataset {
  std::uint64_t m_aps = 0;
  std::uint64_t k_users = 0;
  std::uint64_t n_ris = 0;
  arma::vec norm_mean;  // per-dimension mean of the dB-domain condition
  arma::vec norm_std;   // per-dimension population std
  std::vector<ExpertRecord> records;

  int condition_dim() const { return static_cast<int>(m_aps + k_users + m_aps * k_users); }

  // Raw condition in dB: [beta_ap_ris; beta_ris_user; vec(beta_direct)].
  static arma::vec raw_condition_db(const ChannelState& state);
  // Standardizes a fresh state with this dataset's statistics.
  arma::vec normalize_condition(const ChannelState& state) const;

  void save(const std::filesystem::path& path) const;
  static ExpertDataset load(const std::filesystem::path& path);
  std::string to_csv() const;
};

struct DatasetGenConfig {
  SystemConfig system;
  GAConfig ga;
  std::vector<double> rho_grid_db = {-10, 0, 10, 20, 30, 40};
  int samples = 200;
  std::uint64_t seed = 1;
};

// Algorithm: per sample draw a fresh drop, pick rho_d round-robin from the
// grid, run the GA expert and store the labeled record. Samples run in
// parallel with per-sample seeds; output is independent of thread count.
// When states_out is non-null the drawn states are stored alongside
// (index-aligned with records) for verification.
ExpertDataset generate_dataset(const DatasetGenConfig& cfg,
                               std::vector<ChannelState>* states_out = nullptr);

// The drop consumed by sample `index` of generate_dataset; exposed so the
// states backing a dataset can be reproduced from the seed alone.
ChannelState draw_drop_for_sample(const SystemConfig& cfg, std::uint64_t seed,
                                  std::uint64_t index);

}  // namespace rdopt
