/*
 * Copyright 2026 The stgsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Loop-level reference implementations used as test oracles. Deliberately
// naive: no Eigen, no tape, plain index arithmetic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "stgsl/rng.hpp"
#include "stgsl/stgc_net.hpp"
#include "stgsl/tensor.hpp"

namespace oracle {

using stgsl::Matrix;
using stgsl::Tensor;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return std::log1p(std::exp(x)); }

inline Matrix normalized_adjacency(const Matrix& a, const Matrix& m, double eps) {
  const auto n = a.rows();
  Matrix e(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) e(i, j) = a(i, j) * std::max(0.0, m(i, j));
  std::vector<double> d(static_cast<std::size_t>(n), eps);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d[static_cast<std::size_t>(i)] += e(i, j);
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = e(i, j) / std::sqrt(d[static_cast<std::size_t>(i)]) /
                  std::sqrt(d[static_cast<std::size_t>(j)]);
  return out;
}

// x is [B][T][N][C]; y[b,t,i,o] = sum_j sum_c a[i,j] x[b,t,j,c] w[c,o]
inline Tensor spatial_conv(const Tensor& x, const Matrix& a, const Matrix& w) {
  const std::size_t nb = x.dim(0), nt = x.dim(1), n = x.dim(2), ci = x.dim(3);
  const auto co = static_cast<std::size_t>(w.cols());
  Tensor y({nb, nt, n, co});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < co; ++o) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < ci; ++c)
              s += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                   x[((b * nt + t) * n + j) * ci + c] *
                   w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(o));
          y[((b * nt + t) * n + i) * co + o] = s;
        }
  return y;
}

// Same-padded convolution along time; kernel [k][ci][co].
inline Tensor temporal_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const std::size_t nb = x.dim(0), nt = x.dim(1), n = x.dim(2), ci = x.dim(3);
  const std::size_t k = kernel.dim(0), co = kernel.dim(2);
  const auto half = static_cast<long>(k / 2);
  Tensor y({nb, nt, n, co});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < co; ++o) {
          double s = bias[o];
          for (std::size_t q = 0; q < k; ++q) {
            const long src = static_cast<long>(t) + static_cast<long>(q) - half;
            if (src < 0 || src >= static_cast<long>(nt)) continue;
            for (std::size_t c = 0; c < ci; ++c)
              s += x[((b * nt + static_cast<std::size_t>(src)) * n + i) * ci + c] *
                   kernel[(q * ci + c) * co + o];
          }
          y[((b * nt + t) * n + i) * co + o] = s;
        }
  return y;
}

// Max over a width-3 time neighbourhood; out-of-range positions are ignored.
inline Tensor max_pool3(const Tensor& x) {
  const std::size_t nb = x.dim(0), nt = x.dim(1), n = x.dim(2), c = x.dim(3);
  Tensor y(x.shape);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          for (long d = -1; d <= 1; ++d) {
            const long src = static_cast<long>(t) + d;
            if (src < 0 || src >= static_cast<long>(nt)) continue;
            best = std::max(best, x[((b * nt + static_cast<std::size_t>(src)) * n + i) * c + ch]);
          }
          y[((b * nt + t) * n + i) * c + ch] = best;
        }
  return y;
}

inline Tensor temporal_inception(const Tensor& x, const stgsl::InceptionParams& p) {
  std::vector<Tensor> outs;
  for (std::size_t br = 0; br < stgsl::kInceptionBranches; ++br) {
    Tensor h = br + 1 == stgsl::kInceptionBranches ? oracle::max_pool3(x) : x;
    for (const auto& [k, b] : p.convs[br]) h = oracle::temporal_conv(h, k, b);
    outs.push_back(std::move(h));
  }
  const std::size_t nb = x.dim(0), nt = x.dim(1), n = x.dim(2);
  std::size_t total = 0;
  for (const auto& o : outs) total += o.dim(3);
  Tensor y({nb, nt, n, total});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (const auto& o : outs) {
          const std::size_t c = o.dim(3);
          for (std::size_t ch = 0; ch < c; ++ch)
            y[((b * nt + t) * n + i) * total + off + ch] =
                std::max(0.0, o[((b * nt + t) * n + i) * c + ch]);
          off += c;
        }
      }
  return y;
}

// Mann-Whitney AUC by counting every positive/negative pair.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  return wins / pairs;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double scale = 0.0;
  for (double v : b) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(scale, 1e-300));
  return worst;
}

inline Tensor random_tensor(const stgsl::Shape& shape, stgsl::Engine& rng) {
  Tensor t(shape);
  for (auto& v : t.data) v = stgsl::standard_normal(rng);
  return t;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, stgsl::Engine& rng) {
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stgsl::standard_normal(rng);
  return m;
}

inline Matrix random_binary_symmetric(std::size_t n, double p, stgsl::Engine& rng) {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (stgsl::uniform_open(rng) < p) {
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
        a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
      }
  return a;
}

// Random inception parameters with the branch layout of a channels-wide block.
inline stgsl::InceptionParams random_inception(std::size_t c_in, std::size_t channels,
                                               stgsl::Engine& rng) {
  const std::size_t q = channels / 4;
  stgsl::InceptionParams p;
  auto conv = [&](std::size_t k, std::size_t ci, std::size_t co) {
    return std::make_pair(random_tensor({k, ci, co}, rng), random_tensor({co}, rng));
  };
  p.convs[0] = {conv(1, c_in, q)};
  p.convs[1] = {conv(1, c_in, q), conv(3, q, q)};
  p.convs[2] = {conv(1, c_in, q), conv(5, q, q)};
  p.convs[3] = {conv(1, c_in, q)};
  return p;
}

}  // namespace oracle
