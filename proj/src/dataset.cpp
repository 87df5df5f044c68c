// SPDX-License-Identifier: Apache-2.0
#include "rdopt/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rdopt/io.hpp"
#include "rdopt/parallel.hpp"

namespace rdopt {

namespace {
constexpr char kMagic[5] = {'R', 'D', 'O', 'P', '1'};
}

arma::vec ExpertDataset::raw_condition_db(const ChannelState& state) {
  arma::vec cond(state.beta_ap_ris.n_elem + state.beta_ris_user.n_elem +
                 state.beta_direct.n_elem);
  arma::uword at = 0;
  for (arma::uword m = 0; m < state.beta_ap_ris.n_elem; ++m)
    cond(at++) = 10.0 * std::log10(state.beta_ap_ris(m));
  for (arma::uword k = 0; k < state.beta_ris_user.n_elem; ++k)
    cond(at++) = 10.0 * std::log10(state.beta_ris_user(k));
  const arma::vec direct = arma::vectorise(state.beta_direct);
  for (arma::uword i = 0; i < direct.n_elem; ++i) cond(at++) = 10.0 * std::log10(direct(i));
  return cond;
}

arma::vec ExpertDataset::normalize_condition(const ChannelState& state) const {
  const arma::vec raw = raw_condition_db(state);
  if (raw.n_elem != norm_mean.n_elem)
    throw std::invalid_argument("dataset: condition dimension mismatch");
  return (raw - norm_mean) / norm_std;
}

ExpertDataset generate_dataset(const DatasetGenConfig& cfg,
                               std::vector<ChannelState>* states_out) {
  if (cfg.samples < 1) throw std::invalid_argument("dataset: samples must be >= 1");
  if (cfg.rho_grid_db.empty()) throw std::invalid_argument("dataset: empty rho grid");
  cfg.system.validate();
  cfg.ga.validate();

  const CommParams comm = make_comm_params(cfg.system);
  std::vector<ChannelState> states(cfg.samples);
  std::vector<arma::vec> raw_conditions(cfg.samples);
  std::vector<ExpertRecord> records(cfg.samples);

  parallel_for(cfg.samples, [&](std::size_t i) {
    states[i] = draw_drop_for_sample(cfg.system, cfg.seed, i);
    raw_conditions[i] = ExpertDataset::raw_condition_db(states[i]);
    const double rho_db = cfg.rho_grid_db[i % cfg.rho_grid_db.size()];
    const double rho = std::pow(10.0, rho_db / 10.0);
    RandomSource ga_rng(derive_seed(cfg.seed, Stream::kGa, i));
    const GaResult ga = ga_optimize(comm, states[i], rho, cfg.ga, ga_rng);
    records[i].theta0 = ga.best.theta;
    records[i].rho_d_db = rho_db;
    records[i].achieved_se = ga.best_fitness;
  });

  ExpertDataset dataset;
  dataset.m_aps = static_cast<std::uint64_t>(cfg.system.ap_count);
  dataset.k_users = static_cast<std::uint64_t>(cfg.system.user_count);
  dataset.n_ris = static_cast<std::uint64_t>(cfg.system.ris_elements);

  const arma::uword dim = raw_conditions.front().n_elem;
  dataset.norm_mean.zeros(dim);
  dataset.norm_std.zeros(dim);
  for (const arma::vec& c : raw_conditions) dataset.norm_mean += c;
  dataset.norm_mean /= static_cast<double>(cfg.samples);
  for (const arma::vec& c : raw_conditions)
    dataset.norm_std += arma::square(c - dataset.norm_mean);
  dataset.norm_std =
      arma::sqrt(dataset.norm_std / static_cast<double>(cfg.samples));
  dataset.norm_std.transform([](double s) { return s > 1e-12 ? s : 1.0; });

  for (int i = 0; i < cfg.samples; ++i)
    records[i].condition = (raw_conditions[i] - dataset.norm_mean) / dataset.norm_std;
  dataset.records = std::move(records);
  if (states_out) *states_out = std::move(states);
  return dataset;
}

ChannelState draw_drop_for_sample(const SystemConfig& cfg, std::uint64_t seed,
                                  std::uint64_t index) {
  RandomSource rng(derive_seed(seed, Stream::kDrop, index));
  return draw_drop(cfg, rng);
}

void ExpertDataset::save(const std::filesystem::path& path) const {
  std::ostringstream os(std::ios::binary);
  io::write_bytes(os, kMagic, sizeof(kMagic));
  io::write_u64(os, m_aps);
  io::write_u64(os, k_users);
  io::write_u64(os, n_ris);
  io::write_u64(os, records.size());
  io::write_u64(os, norm_mean.n_elem);
  for (arma::uword i = 0; i < norm_mean.n_elem; ++i) io::write_f64(os, norm_mean(i));
  for (arma::uword i = 0; i < norm_std.n_elem; ++i) io::write_f64(os, norm_std(i));
  for (const ExpertRecord& rec : records) {
    for (arma::uword i = 0; i < rec.condition.n_elem; ++i) io::write_f64(os, rec.condition(i));
    for (arma::uword i = 0; i < rec.theta0.n_elem; ++i) io::write_f64(os, rec.theta0(i));
    io::write_f64(os, rec.rho_d_db);
    io::write_f64(os, rec.achieved_se);
  }
  io::write_file_atomic(path, os.str());
}

ExpertDataset ExpertDataset::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path.string());
  char magic[5];
  io::read_bytes(is, magic, sizeof(magic));
  if (std::string(magic, 5) != std::string(kMagic, 5))
    throw std::runtime_error("dataset: bad magic in " + path.string());

  ExpertDataset ds;
  ds.m_aps = io::read_u64(is);
  ds.k_users = io::read_u64(is);
  ds.n_ris = io::read_u64(is);
  const std::uint64_t count = io::read_u64(is);
  const std::uint64_t dim = io::read_u64(is);
  if (dim != ds.m_aps + ds.k_users + ds.m_aps * ds.k_users)
    throw std::runtime_error("dataset: inconsistent condition length");
  ds.norm_mean.set_size(dim);
  ds.norm_std.set_size(dim);
  for (std::uint64_t i = 0; i < dim; ++i) ds.norm_mean(i) = io::read_f64(is);
  for (std::uint64_t i = 0; i < dim; ++i) ds.norm_std(i) = io::read_f64(is);
  ds.records.resize(count);
  for (ExpertRecord& rec : ds.records) {
    rec.condition.set_size(dim);
    for (std::uint64_t i = 0; i < dim; ++i) rec.condition(i) = io::read_f64(is);
    rec.theta0.set_size(ds.n_ris);
    for (std::uint64_t i = 0; i < ds.n_ris; ++i) rec.theta0(i) = io::read_f64(is);
    rec.rho_d_db = io::read_f64(is);
    rec.achieved_se = io::read_f64(is);
  }
  return ds;
}

std::string ExpertDataset::to_csv() const {
  std::vector<std::string> header;
  const int dim = condition_dim();
  for (int i = 0; i < dim; ++i) header.push_back("cond_" + std::to_string(i));
  for (std::uint64_t i = 0; i < n_ris; ++i) header.push_back("theta_" + std::to_string(i));
  header.push_back("rho_d_db");
  header.push_back("achieved_se");
  io::CsvWriter csv(header);
  std::vector<std::string> row;
  for (const ExpertRecord& rec : records) {
    row.clear();
    for (arma::uword i = 0; i < rec.condition.n_elem; ++i)
      row.push_back(io::format_double(rec.condition(i)));
    for (arma::uword i = 0; i < rec.theta0.n_elem; ++i)
      row.push_back(io::format_double(rec.theta0(i)));
    row.push_back(io::format_double(rec.rho_d_db));
    row.push_back(io::format_double(rec.achieved_se));
    csv.add_row(row);
  }
  return csv.content();
}

}  // namespace rdopt
