// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <armadillo>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rdopt {

// Shape of the noise-prediction network. The sequence is the length-N phase
// vector (one channel); a single stride-2 convolution halves it, one
// self-attention block mixes positions, one nearest-neighbor upsample +
// convolution restores the length. The condition and time embeddings meet
// the sequence as a 32-dim vector added to the encoder output.
struct DenoiserDims {
  int seq_len = 16;   // N, must be even
  int cond_dim = 35;  // dim_c

  static constexpr int kWidth = 32;
  static constexpr int kCondHidden = 64;
  static constexpr int kTimeDim = 32;

  int down_len() const { return seq_len / 2; }
  void validate() const;
  bool operator==(const DenoiserDims& o) const {
    return seq_len == o.seq_len && cond_dim == o.cond_dim;
  }
};

struct DenoiserParams {
  DenoiserDims dims;

  std::vector<double> cond_w1, cond_b1;  // cond_dim -> 64
  std::vector<double> cond_w2, cond_b2;  // 64 -> 32
  std::vector<double> time_w, time_b;    // 32 -> 32 on the sinusoidal embedding
  std::vector<double> enc_w, enc_b;      // conv k3, 1 -> 32 channels, stride 2
  std::vector<double> ln_gain, ln_bias;  // pre-attention layer norm
  std::vector<double> attn_wq, attn_bq;
  std::vector<double> attn_wk, attn_bk;
  std::vector<double> attn_wv, attn_bv;
  std::vector<double> attn_wo, attn_bo;
  std::vector<double> dec_w, dec_b;      // conv k3, 32 -> 32, after 2x upsample
  std::vector<double> out_w, out_b;      // conv k3, 32 -> 1

  // All-zero tensors with the right shapes (gradient / moment containers).
  static DenoiserParams zeros(const DenoiserDims& dims);
  // Fan-in uniform init; the output projection starts at zero unless
  // zero_output is disabled (gradient checks need it non-degenerate).
  static DenoiserParams random_init(const DenoiserDims& dims, std::uint64_t seed,
                                    bool zero_output = true);

  std::size_t parameter_count() const;
};

// Fixed-order tensor enumeration shared by Adam, serialization and the
// gradient checker.
std::vector<std::pair<std::string, std::vector<double>*>> named_tensors(DenoiserParams& p);
std::vector<std::pair<std::string, const std::vector<double>*>> named_tensors(
    const DenoiserParams& p);

// Sinusoidal embedding [sin(t w_i) | cos(t w_i)], w_i = 10000^(-2i/dim).
arma::vec time_embedding(double t, int dim);

// Forward intermediates; reusing one cache avoids reallocation in loops.
struct DenoiserCache {
  arma::vec x, cond;
  int t = 0;
  std::vector<double> se, ce1, a1, ce2, te, svec;
  std::vector<double> e, h, mu, istd, hn, ln;
  std::vector<double> q, k, v, attn, att, ao, h2;
  std::vector<double> up, d, dd;
  arma::vec y;
};

// Deterministic forward pass; returns the predicted noise (length N).
void denoiser_forward(const DenoiserParams& params, const arma::vec& theta_t,
                      const arma::vec& condition, int t, DenoiserCache& cache);
arma::vec denoiser_forward(const DenoiserParams& params, const arma::vec& theta_t,
                           const arma::vec& condition, int t);

struct DenoiserBatchItem {
  arma::vec theta_t;
  arma::vec condition;
  int t = 1;
  arma::vec eps_target;
};

// Loss = mean over batch and dimensions of ||eps - eps_w||^2; fills `grads`
// with the exact derivative. Returns the loss.
double denoiser_backward(const DenoiserParams& params, const std::vector<DenoiserBatchItem>& batch,
                         DenoiserParams& grads);

struct AdamState {
  DenoiserParams m;
  DenoiserParams v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(const DenoiserDims& dims);
};

// Standard bias-corrected Adam update, in place.
void adam_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state, double lr);

struct Checkpoint {
  DenoiserParams params;
  AdamState adam;
  bool has_adam = false;
};

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params,
                     const AdamState* adam = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rdopt
