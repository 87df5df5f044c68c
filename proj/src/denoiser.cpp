// SPDX-License-Identifier: Apache-2.0
#include "rdopt/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rdopt/io.hpp"

namespace rdopt {

namespace {

constexpr int kW = DenoiserDims::kWidth;
constexpr int kCH = DenoiserDims::kCondHidden;
constexpr int kTD = DenoiserDims::kTimeDim;
constexpr double kLnEps = 1e-5;
constexpr char kMagic[5] = {'R', 'D', 'N', 'W', '1'};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

void fill_uniform(std::vector<double>& w, double bound, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w) v = dist(eng);
}

}  // namespace

void DenoiserDims::validate() const {
  if (seq_len < 2 || seq_len % 2 != 0)
    throw std::invalid_argument("denoiser: sequence length must be even and >= 2");
  if (cond_dim < 1) throw std::invalid_argument("denoiser: condition dim must be >= 1");
}

DenoiserParams DenoiserParams::zeros(const DenoiserDims& dims) {
  dims.validate();
  DenoiserParams p;
  p.dims = dims;
  p.cond_w1.assign(static_cast<std::size_t>(kCH) * dims.cond_dim, 0.0);
  p.cond_b1.assign(kCH, 0.0);
  p.cond_w2.assign(static_cast<std::size_t>(kW) * kCH, 0.0);
  p.cond_b2.assign(kW, 0.0);
  p.time_w.assign(static_cast<std::size_t>(kW) * kTD, 0.0);
  p.time_b.assign(kW, 0.0);
  p.enc_w.assign(static_cast<std::size_t>(kW) * 3, 0.0);
  p.enc_b.assign(kW, 0.0);
  p.ln_gain.assign(kW, 0.0);
  p.ln_bias.assign(kW, 0.0);
  p.attn_wq.assign(static_cast<std::size_t>(kW) * kW, 0.0);
  p.attn_bq.assign(kW, 0.0);
  p.attn_wk.assign(static_cast<std::size_t>(kW) * kW, 0.0);
  p.attn_bk.assign(kW, 0.0);
  p.attn_wv.assign(static_cast<std::size_t>(kW) * kW, 0.0);
  p.attn_bv.assign(kW, 0.0);
  p.attn_wo.assign(static_cast<std::size_t>(kW) * kW, 0.0);
  p.attn_bo.assign(kW, 0.0);
  p.dec_w.assign(static_cast<std::size_t>(kW) * kW * 3, 0.0);
  p.dec_b.assign(kW, 0.0);
  p.out_w.assign(static_cast<std::size_t>(kW) * 3, 0.0);
  p.out_b.assign(1, 0.0);
  return p;
}

DenoiserParams DenoiserParams::random_init(const DenoiserDims& dims, std::uint64_t seed,
                                           bool zero_output) {
  DenoiserParams p = zeros(dims);
  std::mt19937_64 eng(seed);
  fill_uniform(p.cond_w1, 1.0 / std::sqrt(static_cast<double>(dims.cond_dim)), eng);
  fill_uniform(p.cond_w2, 1.0 / std::sqrt(static_cast<double>(kCH)), eng);
  fill_uniform(p.time_w, 1.0 / std::sqrt(static_cast<double>(kTD)), eng);
  fill_uniform(p.enc_w, 1.0 / std::sqrt(3.0), eng);
  fill_uniform(p.attn_wq, 1.0 / std::sqrt(static_cast<double>(kW)), eng);
  fill_uniform(p.attn_wk, 1.0 / std::sqrt(static_cast<double>(kW)), eng);
  fill_uniform(p.attn_wv, 1.0 / std::sqrt(static_cast<double>(kW)), eng);
  fill_uniform(p.attn_wo, 1.0 / std::sqrt(static_cast<double>(kW)), eng);
  fill_uniform(p.dec_w, 1.0 / std::sqrt(static_cast<double>(kW) * 3.0), eng);
  if (!zero_output) fill_uniform(p.out_w, 1.0 / std::sqrt(static_cast<double>(kW) * 3.0), eng);
  std::fill(p.ln_gain.begin(), p.ln_gain.end(), 1.0);
  return p;
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, tensor] : named_tensors(*this)) total += tensor->size();
  return total;
}

#define RDOPT_DENOISER_TENSORS(P)                                                              \
  {                                                                                            \
    {"cond_w1", &(P).cond_w1}, {"cond_b1", &(P).cond_b1}, {"cond_w2", &(P).cond_w2},           \
        {"cond_b2", &(P).cond_b2}, {"time_w", &(P).time_w}, {"time_b", &(P).time_b},           \
        {"enc_w", &(P).enc_w}, {"enc_b", &(P).enc_b}, {"ln_gain", &(P).ln_gain},               \
        {"ln_bias", &(P).ln_bias}, {"attn_wq", &(P).attn_wq}, {"attn_bq", &(P).attn_bq},       \
        {"attn_wk", &(P).attn_wk}, {"attn_bk", &(P).attn_bk}, {"attn_wv", &(P).attn_wv},       \
        {"attn_bv", &(P).attn_bv}, {"attn_wo", &(P).attn_wo}, {"attn_bo", &(P).attn_bo},       \
        {"dec_w", &(P).dec_w}, {"dec_b", &(P).dec_b}, {"out_w", &(P).out_w}, {                 \
      "out_b", &(P).out_b                                                                      \
    }                                                                                          \
  }

std::vector<std::pair<std::string, std::vector<double>*>> named_tensors(DenoiserParams& p) {
  return RDOPT_DENOISER_TENSORS(p);
}

std::vector<std::pair<std::string, const std::vector<double>*>> named_tensors(
    const DenoiserParams& p) {
  return RDOPT_DENOISER_TENSORS(p);
}

#undef RDOPT_DENOISER_TENSORS

arma::vec time_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time embedding: dim must be even and >= 2");
  const int half = dim / 2;
  arma::vec emb(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    emb(i) = std::sin(t * freq);
    emb(half + i) = std::cos(t * freq);
  }
  return emb;
}

namespace {

void resize_cache(DenoiserCache& c, const DenoiserDims& dims) {
  const int n = dims.seq_len;
  const int len = dims.down_len();
  c.se.resize(kTD);
  c.ce1.resize(kCH);
  c.a1.resize(kCH);
  c.ce2.resize(kW);
  c.te.resize(kW);
  c.svec.resize(kW);
  c.e.resize(static_cast<std::size_t>(kW) * len);
  c.h.resize(static_cast<std::size_t>(kW) * len);
  c.mu.resize(len);
  c.istd.resize(len);
  c.hn.resize(static_cast<std::size_t>(kW) * len);
  c.ln.resize(static_cast<std::size_t>(kW) * len);
  c.q.resize(static_cast<std::size_t>(kW) * len);
  c.k.resize(static_cast<std::size_t>(kW) * len);
  c.v.resize(static_cast<std::size_t>(kW) * len);
  c.attn.resize(static_cast<std::size_t>(len) * len);
  c.att.resize(static_cast<std::size_t>(kW) * len);
  c.ao.resize(static_cast<std::size_t>(kW) * len);
  c.h2.resize(static_cast<std::size_t>(kW) * len);
  c.up.resize(static_cast<std::size_t>(kW) * n);
  c.d.resize(static_cast<std::size_t>(kW) * n);
  c.dd.resize(static_cast<std::size_t>(kW) * n);
  c.y.set_size(n);
}

}  // namespace

void denoiser_forward(const DenoiserParams& params, const arma::vec& theta_t,
                      const arma::vec& condition, int t, DenoiserCache& cache) {
  const DenoiserDims& dims = params.dims;
  const int n = dims.seq_len;
  const int len = dims.down_len();
  if (static_cast<int>(theta_t.n_elem) != n)
    throw std::invalid_argument("denoiser: input length mismatch");
  if (static_cast<int>(condition.n_elem) != dims.cond_dim)
    throw std::invalid_argument("denoiser: condition length mismatch");
  resize_cache(cache, dims);
  cache.x = theta_t;
  cache.cond = condition;
  cache.t = t;

  // Condition encoder.
  for (int o = 0; o < kCH; ++o) {
    double acc = params.cond_b1[o];
    const double* row = params.cond_w1.data() + static_cast<std::size_t>(o) * dims.cond_dim;
    for (int i = 0; i < dims.cond_dim; ++i) acc += row[i] * condition(i);
    cache.ce1[o] = acc;
    cache.a1[o] = silu(acc);
  }
  for (int o = 0; o < kW; ++o) {
    double acc = params.cond_b2[o];
    const double* row = params.cond_w2.data() + static_cast<std::size_t>(o) * kCH;
    for (int i = 0; i < kCH; ++i) acc += row[i] * cache.a1[i];
    cache.ce2[o] = acc;
  }

  // Time embedding projection.
  const arma::vec se = time_embedding(static_cast<double>(t), kTD);
  for (int i = 0; i < kTD; ++i) cache.se[i] = se(i);
  for (int o = 0; o < kW; ++o) {
    double acc = params.time_b[o];
    const double* row = params.time_w.data() + static_cast<std::size_t>(o) * kTD;
    for (int i = 0; i < kTD; ++i) acc += row[i] * cache.se[i];
    cache.te[o] = acc;
    cache.svec[o] = cache.ce2[o] + acc;
  }

  // Encoder: stride-2 conv (kernel 3, zero padding) + conditioning + SiLU.
  for (int o = 0; o < kW; ++o) {
    const double* w = params.enc_w.data() + static_cast<std::size_t>(o) * 3;
    double* e_row = cache.e.data() + static_cast<std::size_t>(o) * len;
    double* h_row = cache.h.data() + static_cast<std::size_t>(o) * len;
    for (int p = 0; p < len; ++p) {
      double acc = params.enc_b[o] + cache.svec[o];
      for (int j = 0; j < 3; ++j) {
        const int q = 2 * p + j - 1;
        if (q >= 0 && q < n) acc += w[j] * theta_t(q);
      }
      e_row[p] = acc;
      h_row[p] = silu(acc);
    }
  }

  // Pre-attention layer norm over the channel width.
  for (int p = 0; p < len; ++p) {
    double mean = 0.0;
    for (int o = 0; o < kW; ++o) mean += cache.h[static_cast<std::size_t>(o) * len + p];
    mean /= kW;
    double var = 0.0;
    for (int o = 0; o < kW; ++o) {
      const double d = cache.h[static_cast<std::size_t>(o) * len + p] - mean;
      var += d * d;
    }
    var /= kW;
    const double istd = 1.0 / std::sqrt(var + kLnEps);
    cache.mu[p] = mean;
    cache.istd[p] = istd;
    for (int o = 0; o < kW; ++o) {
      const std::size_t at = static_cast<std::size_t>(o) * len + p;
      cache.hn[at] = (cache.h[at] - mean) * istd;
      cache.ln[at] = params.ln_gain[o] * cache.hn[at] + params.ln_bias[o];
    }
  }

  // Single-head self-attention.
  auto project = [&](const std::vector<double>& w, const std::vector<double>& b,
                     std::vector<double>& out) {
    for (int o = 0; o < kW; ++o) {
      const double* row = w.data() + static_cast<std::size_t>(o) * kW;
      double* out_row = out.data() + static_cast<std::size_t>(o) * len;
      for (int p = 0; p < len; ++p) {
        double acc = b[o];
        for (int i = 0; i < kW; ++i) acc += row[i] * cache.ln[static_cast<std::size_t>(i) * len + p];
        out_row[p] = acc;
      }
    }
  };
  project(params.attn_wq, params.attn_bq, cache.q);
  project(params.attn_wk, params.attn_bk, cache.k);
  project(params.attn_wv, params.attn_bv, cache.v);

  const double scale = 1.0 / std::sqrt(static_cast<double>(kW));
  for (int p = 0; p < len; ++p) {
    double* row = cache.attn.data() + static_cast<std::size_t>(p) * len;
    double max_logit = -arma::datum::inf;
    for (int pq = 0; pq < len; ++pq) {
      double logit = 0.0;
      for (int o = 0; o < kW; ++o)
        logit += cache.q[static_cast<std::size_t>(o) * len + p] *
                 cache.k[static_cast<std::size_t>(o) * len + pq];
      logit *= scale;
      row[pq] = logit;
      if (logit > max_logit) max_logit = logit;
    }
    double norm = 0.0;
    for (int pq = 0; pq < len; ++pq) {
      row[pq] = std::exp(row[pq] - max_logit);
      norm += row[pq];
    }
    for (int pq = 0; pq < len; ++pq) row[pq] /= norm;
  }
  for (int o = 0; o < kW; ++o) {
    const double* v_row = cache.v.data() + static_cast<std::size_t>(o) * len;
    double* att_row = cache.att.data() + static_cast<std::size_t>(o) * len;
    for (int p = 0; p < len; ++p) {
      const double* probs = cache.attn.data() + static_cast<std::size_t>(p) * len;
      double acc = 0.0;
      for (int pq = 0; pq < len; ++pq) acc += probs[pq] * v_row[pq];
      att_row[p] = acc;
    }
  }
  for (int o = 0; o < kW; ++o) {
    const double* row = params.attn_wo.data() + static_cast<std::size_t>(o) * kW;
    for (int p = 0; p < len; ++p) {
      double acc = params.attn_bo[o];
      for (int i = 0; i < kW; ++i)
        acc += row[i] * cache.att[static_cast<std::size_t>(i) * len + p];
      cache.ao[static_cast<std::size_t>(o) * len + p] = acc;
      cache.h2[static_cast<std::size_t>(o) * len + p] =
          cache.h[static_cast<std::size_t>(o) * len + p] + acc;
    }
  }

  // Decoder: nearest-neighbor 2x upsample, conv, SiLU.
  for (int o = 0; o < kW; ++o) {
    const double* h2_row = cache.h2.data() + static_cast<std::size_t>(o) * len;
    double* up_row = cache.up.data() + static_cast<std::size_t>(o) * n;
    for (int p = 0; p < len; ++p) {
      up_row[2 * p] = h2_row[p];
      up_row[2 * p + 1] = h2_row[p];
    }
  }
  for (int o = 0; o < kW; ++o) {
    double* d_row = cache.d.data() + static_cast<std::size_t>(o) * n;
    double* dd_row = cache.dd.data() + static_cast<std::size_t>(o) * n;
    for (int pos = 0; pos < n; ++pos) {
      double acc = params.dec_b[o];
      for (int i = 0; i < kW; ++i) {
        const double* w = params.dec_w.data() + (static_cast<std::size_t>(o) * kW + i) * 3;
        const double* up_row = cache.up.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < 3; ++j) {
          const int q = pos + j - 1;
          if (q >= 0 && q < n) acc += w[j] * up_row[q];
        }
      }
      d_row[pos] = acc;
      dd_row[pos] = silu(acc);
    }
  }

  // Output projection (zero-initialized at training start).
  for (int pos = 0; pos < n; ++pos) {
    double acc = params.out_b[0];
    for (int i = 0; i < kW; ++i) {
      const double* w = params.out_w.data() + static_cast<std::size_t>(i) * 3;
      const double* dd_row = cache.dd.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < 3; ++j) {
        const int q = pos + j - 1;
        if (q >= 0 && q < n) acc += w[j] * dd_row[q];
      }
    }
    cache.y(pos) = acc;
  }
}

arma::vec denoiser_forward(const DenoiserParams& params, const arma::vec& theta_t,
                           const arma::vec& condition, int t) {
  DenoiserCache cache;
  denoiser_forward(params, theta_t, condition, t, cache);
  return cache.y;
}

namespace {

// Scratch buffers for one backward pass.
struct BackwardScratch {
  std::vector<double> ddd, dd_pre, dup, dh2, dh, dao, datt, dA, dS, dq, dk, dv, dln, dhn, de;
  std::vector<double> dsvec, da1, dce1;

  void resize(const DenoiserDims& dims) {
    const int n = dims.seq_len;
    const int len = dims.down_len();
    ddd.assign(static_cast<std::size_t>(kW) * n, 0.0);
    dd_pre.assign(static_cast<std::size_t>(kW) * n, 0.0);
    dup.assign(static_cast<std::size_t>(kW) * n, 0.0);
    dh2.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dh.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dao.assign(static_cast<std::size_t>(kW) * len, 0.0);
    datt.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dA.assign(static_cast<std::size_t>(len) * len, 0.0);
    dS.assign(static_cast<std::size_t>(len) * len, 0.0);
    dq.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dk.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dv.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dln.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dhn.assign(static_cast<std::size_t>(kW) * len, 0.0);
    de.assign(static_cast<std::size_t>(kW) * len, 0.0);
    dsvec.assign(kW, 0.0);
    da1.assign(kCH, 0.0);
    dce1.assign(kCH, 0.0);
  }
};

void backward_item(const DenoiserParams& params, const DenoiserCache& c, const arma::vec& dy,
                   DenoiserParams& g, BackwardScratch& s) {
  const DenoiserDims& dims = params.dims;
  const int n = dims.seq_len;
  const int len = dims.down_len();
  s.resize(dims);

  // Output conv.
  for (int pos = 0; pos < n; ++pos) {
    const double gy = dy(pos);
    if (gy == 0.0) continue;
    g.out_b[0] += gy;
    for (int i = 0; i < kW; ++i) {
      const double* dd_row = c.dd.data() + static_cast<std::size_t>(i) * n;
      double* ddd_row = s.ddd.data() + static_cast<std::size_t>(i) * n;
      const double* w = params.out_w.data() + static_cast<std::size_t>(i) * 3;
      double* gw = g.out_w.data() + static_cast<std::size_t>(i) * 3;
      for (int j = 0; j < 3; ++j) {
        const int q = pos + j - 1;
        if (q < 0 || q >= n) continue;
        gw[j] += gy * dd_row[q];
        ddd_row[q] += gy * w[j];
      }
    }
  }

  // Decoder SiLU + conv.
  for (int o = 0; o < kW; ++o) {
    const double* d_row = c.d.data() + static_cast<std::size_t>(o) * n;
    for (int pos = 0; pos < n; ++pos) {
      const std::size_t at = static_cast<std::size_t>(o) * n + pos;
      s.dd_pre[at] = s.ddd[at] * silu_grad(d_row[pos]);
    }
  }
  for (int o = 0; o < kW; ++o) {
    for (int pos = 0; pos < n; ++pos) {
      const double gd = s.dd_pre[static_cast<std::size_t>(o) * n + pos];
      if (gd == 0.0) continue;
      g.dec_b[o] += gd;
      for (int i = 0; i < kW; ++i) {
        const double* up_row = c.up.data() + static_cast<std::size_t>(i) * n;
        double* dup_row = s.dup.data() + static_cast<std::size_t>(i) * n;
        const double* w = params.dec_w.data() + (static_cast<std::size_t>(o) * kW + i) * 3;
        double* gw = g.dec_w.data() + (static_cast<std::size_t>(o) * kW + i) * 3;
        for (int j = 0; j < 3; ++j) {
          const int q = pos + j - 1;
          if (q < 0 || q >= n) continue;
          gw[j] += gd * up_row[q];
          dup_row[q] += gd * w[j];
        }
      }
    }
  }

  // Upsample (sum the two copies) and residual split.
  for (int o = 0; o < kW; ++o) {
    const double* dup_row = s.dup.data() + static_cast<std::size_t>(o) * n;
    for (int p = 0; p < len; ++p) {
      const double v = dup_row[2 * p] + dup_row[2 * p + 1];
      s.dh2[static_cast<std::size_t>(o) * len + p] = v;
      s.dh[static_cast<std::size_t>(o) * len + p] = v;   // residual branch
      s.dao[static_cast<std::size_t>(o) * len + p] = v;  // attention branch
    }
  }

  // Attention output projection.
  for (int o = 0; o < kW; ++o) {
    const double* row = params.attn_wo.data() + static_cast<std::size_t>(o) * kW;
    double* grow = g.attn_wo.data() + static_cast<std::size_t>(o) * kW;
    for (int p = 0; p < len; ++p) {
      const double ga = s.dao[static_cast<std::size_t>(o) * len + p];
      if (ga == 0.0) continue;
      g.attn_bo[o] += ga;
      for (int i = 0; i < kW; ++i) {
        grow[i] += ga * c.att[static_cast<std::size_t>(i) * len + p];
        s.datt[static_cast<std::size_t>(i) * len + p] += ga * row[i];
      }
    }
  }

  // att = A V.
  for (int o = 0; o < kW; ++o) {
    const double* v_row = c.v.data() + static_cast<std::size_t>(o) * len;
    double* dv_row = s.dv.data() + static_cast<std::size_t>(o) * len;
    const double* datt_row = s.datt.data() + static_cast<std::size_t>(o) * len;
    for (int p = 0; p < len; ++p) {
      const double gatt = datt_row[p];
      if (gatt == 0.0) continue;
      const double* probs = c.attn.data() + static_cast<std::size_t>(p) * len;
      double* dA_row = s.dA.data() + static_cast<std::size_t>(p) * len;
      for (int pq = 0; pq < len; ++pq) {
        dA_row[pq] += gatt * v_row[pq];
        dv_row[pq] += gatt * probs[pq];
      }
    }
  }

  // Softmax rows.
  for (int p = 0; p < len; ++p) {
    const double* probs = c.attn.data() + static_cast<std::size_t>(p) * len;
    const double* dA_row = s.dA.data() + static_cast<std::size_t>(p) * len;
    double dot = 0.0;
    for (int pq = 0; pq < len; ++pq) dot += dA_row[pq] * probs[pq];
    double* dS_row = s.dS.data() + static_cast<std::size_t>(p) * len;
    for (int pq = 0; pq < len; ++pq) dS_row[pq] = probs[pq] * (dA_row[pq] - dot);
  }

  // Scores S[p][pq] = scale * q_p . k_pq.
  const double scale = 1.0 / std::sqrt(static_cast<double>(kW));
  for (int p = 0; p < len; ++p) {
    const double* dS_row = s.dS.data() + static_cast<std::size_t>(p) * len;
    for (int pq = 0; pq < len; ++pq) {
      const double gs = dS_row[pq] * scale;
      if (gs == 0.0) continue;
      for (int o = 0; o < kW; ++o) {
        s.dq[static_cast<std::size_t>(o) * len + p] +=
            gs * c.k[static_cast<std::size_t>(o) * len + pq];
        s.dk[static_cast<std::size_t>(o) * len + pq] +=
            gs * c.q[static_cast<std::size_t>(o) * len + p];
      }
    }
  }

  // Q/K/V projections back to the normalized activations.
  auto project_back = [&](const std::vector<double>& w, std::vector<double>& gw,
                          std::vector<double>& gb, const std::vector<double>& dout) {
    for (int o = 0; o < kW; ++o) {
      const double* row = w.data() + static_cast<std::size_t>(o) * kW;
      double* grow = gw.data() + static_cast<std::size_t>(o) * kW;
      const double* dout_row = dout.data() + static_cast<std::size_t>(o) * len;
      for (int p = 0; p < len; ++p) {
        const double gp = dout_row[p];
        if (gp == 0.0) continue;
        gb[o] += gp;
        for (int i = 0; i < kW; ++i) {
          grow[i] += gp * c.ln[static_cast<std::size_t>(i) * len + p];
          s.dln[static_cast<std::size_t>(i) * len + p] += gp * row[i];
        }
      }
    }
  };
  project_back(params.attn_wq, g.attn_wq, g.attn_bq, s.dq);
  project_back(params.attn_wk, g.attn_wk, g.attn_bk, s.dk);
  project_back(params.attn_wv, g.attn_wv, g.attn_bv, s.dv);

  // Layer norm.
  for (int o = 0; o < kW; ++o) {
    const double* dln_row = s.dln.data() + static_cast<std::size_t>(o) * len;
    const double* hn_row = c.hn.data() + static_cast<std::size_t>(o) * len;
    for (int p = 0; p < len; ++p) {
      g.ln_gain[o] += dln_row[p] * hn_row[p];
      g.ln_bias[o] += dln_row[p];
      s.dhn[static_cast<std::size_t>(o) * len + p] = dln_row[p] * params.ln_gain[o];
    }
  }
  for (int p = 0; p < len; ++p) {
    double m1 = 0.0;
    double m2 = 0.0;
    for (int o = 0; o < kW; ++o) {
      const std::size_t at = static_cast<std::size_t>(o) * len + p;
      m1 += s.dhn[at];
      m2 += s.dhn[at] * c.hn[at];
    }
    m1 /= kW;
    m2 /= kW;
    for (int o = 0; o < kW; ++o) {
      const std::size_t at = static_cast<std::size_t>(o) * len + p;
      s.dh[at] += c.istd[p] * (s.dhn[at] - m1 - c.hn[at] * m2);
    }
  }

  // Encoder SiLU, conditioning add, conv.
  for (int o = 0; o < kW; ++o) {
    const double* e_row = c.e.data() + static_cast<std::size_t>(o) * len;
    double* de_row = s.de.data() + static_cast<std::size_t>(o) * len;
    const double* dh_row = s.dh.data() + static_cast<std::size_t>(o) * len;
    double acc = 0.0;
    const double* w = params.enc_w.data() + static_cast<std::size_t>(o) * 3;
    (void)w;
    double* gw = g.enc_w.data() + static_cast<std::size_t>(o) * 3;
    for (int p = 0; p < len; ++p) {
      const double ge = dh_row[p] * silu_grad(e_row[p]);
      de_row[p] = ge;
      acc += ge;
      g.enc_b[o] += ge;
      for (int j = 0; j < 3; ++j) {
        const int q = 2 * p + j - 1;
        if (q >= 0 && q < n) gw[j] += ge * c.x(q);
      }
    }
    s.dsvec[o] = acc;
  }

  // Time projection.
  for (int o = 0; o < kW; ++o) {
    const double gs = s.dsvec[o];
    if (gs == 0.0) continue;
    g.time_b[o] += gs;
    double* grow = g.time_w.data() + static_cast<std::size_t>(o) * kTD;
    for (int i = 0; i < kTD; ++i) grow[i] += gs * c.se[i];
  }

  // Condition encoder.
  for (int o = 0; o < kW; ++o) {
    const double gs = s.dsvec[o];
    if (gs == 0.0) continue;
    g.cond_b2[o] += gs;
    const double* row = params.cond_w2.data() + static_cast<std::size_t>(o) * kCH;
    double* grow = g.cond_w2.data() + static_cast<std::size_t>(o) * kCH;
    for (int i = 0; i < kCH; ++i) {
      grow[i] += gs * c.a1[i];
      s.da1[i] += gs * row[i];
    }
  }
  for (int o = 0; o < kCH; ++o) {
    const double gc = s.da1[o] * silu_grad(c.ce1[o]);
    if (gc == 0.0) continue;
    g.cond_b1[o] += gc;
    double* grow = g.cond_w1.data() + static_cast<std::size_t>(o) * dims.cond_dim;
    for (int i = 0; i < dims.cond_dim; ++i) grow[i] += gc * c.cond(i);
  }
}

}  // namespace

double denoiser_backward(const DenoiserParams& params, const std::vector<DenoiserBatchItem>& batch,
                         DenoiserParams& grads) {
  if (batch.empty()) throw std::invalid_argument("denoiser: empty batch");
  grads = DenoiserParams::zeros(params.dims);
  const int n = params.dims.seq_len;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * n);

  DenoiserCache cache;
  BackwardScratch scratch;
  double loss = 0.0;
  arma::vec dy(n);
  for (const DenoiserBatchItem& item : batch) {
    denoiser_forward(params, item.theta_t, item.condition, item.t, cache);
    for (int i = 0; i < n; ++i) {
      const double r = cache.y(i) - item.eps_target(i);
      loss += r * r * scale;
      dy(i) = 2.0 * r * scale;
    }
    backward_item(params, cache, dy, grads, scratch);
  }
  return loss;
}

AdamState AdamState::create(const DenoiserDims& dims) {
  AdamState state;
  state.m = DenoiserParams::zeros(dims);
  state.v = DenoiserParams::zeros(dims);
  return state;
}

void adam_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p_list = named_tensors(params);
  auto g_list = named_tensors(grads);
  auto m_list = named_tensors(state.m);
  auto v_list = named_tensors(state.v);
  for (std::size_t ti = 0; ti < p_list.size(); ++ti) {
    std::vector<double>& w = *p_list[ti].second;
    const std::vector<double>& gr = *g_list[ti].second;
    std::vector<double>& m = *m_list[ti].second;
    std::vector<double>& v = *v_list[ti].second;
    if (w.size() != gr.size()) throw std::invalid_argument("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gr[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gr[i] * gr[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params,
                     const AdamState* adam) {
  std::ostringstream os(std::ios::binary);
  io::write_bytes(os, kMagic, sizeof(kMagic));
  io::write_u64(os, static_cast<std::uint64_t>(params.dims.seq_len));
  io::write_u64(os, static_cast<std::uint64_t>(params.dims.cond_dim));
  const auto tensors = named_tensors(params);
  io::write_u64(os, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    io::write_u64(os, name.size());
    io::write_bytes(os, name.data(), name.size());
    io::write_u64(os, tensor->size());
  }
  os.put(adam ? 1 : 0);
  for (const auto& [name, tensor] : tensors)
    for (double w : *tensor) io::write_f64(os, w);
  if (adam) {
    io::write_u64(os, adam->step);
    io::write_f64(os, adam->beta1);
    io::write_f64(os, adam->beta2);
    io::write_f64(os, adam->epsilon);
    for (const auto& [name, tensor] : named_tensors(adam->m))
      for (double w : *tensor) io::write_f64(os, w);
    for (const auto& [name, tensor] : named_tensors(adam->v))
      for (double w : *tensor) io::write_f64(os, w);
  }
  io::write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[5];
  io::read_bytes(is, magic, sizeof(magic));
  if (std::string(magic, 5) != std::string(kMagic, 5))
    throw std::runtime_error("checkpoint: bad magic in " + path.string());

  DenoiserDims dims;
  dims.seq_len = static_cast<int>(io::read_u64(is));
  dims.cond_dim = static_cast<int>(io::read_u64(is));
  Checkpoint ck;
  ck.params = DenoiserParams::zeros(dims);
  auto tensors = named_tensors(ck.params);
  const std::uint64_t count = io::read_u64(is);
  if (count != tensors.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
  for (const auto& [name, tensor] : tensors) {
    const std::uint64_t name_len = io::read_u64(is);
    std::string stored(name_len, '\0');
    io::read_bytes(is, stored.data(), name_len);
    if (stored != name) throw std::runtime_error("checkpoint: unexpected tensor " + stored);
    const std::uint64_t size = io::read_u64(is);
    if (size != tensor->size()) throw std::runtime_error("checkpoint: size mismatch for " + stored);
  }
  const int has_adam = is.get();
  if (has_adam == EOF) throw std::runtime_error("checkpoint: truncated file");
  for (const auto& [name, tensor] : tensors)
    for (double& w : *tensor) w = io::read_f64(is);
  ck.has_adam = has_adam != 0;
  ck.adam = AdamState::create(dims);
  if (ck.has_adam) {
    ck.adam.step = io::read_u64(is);
    ck.adam.beta1 = io::read_f64(is);
    ck.adam.beta2 = io::read_f64(is);
    ck.adam.epsilon = io::read_f64(is);
    for (const auto& [name, tensor] : named_tensors(ck.adam.m))
      for (double& w : *tensor) w = io::read_f64(is);
    for (const auto& [name, tensor] : named_tensors(ck.adam.v))
      for (double& w : *tensor) w = io::read_f64(is);
  }
  return ck;
}

}  // namespace rdopt
