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

#include "stgsl/graph_learn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "adjoints.hpp"

namespace stgsl {

namespace {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// 0-based packed offset of (i, j) with j <= i.
inline std::size_t packed(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }

inline double relaxed_keep(double p, double g_keep, double g_drop, double tau) {
  return logistic((std::log(p) + g_keep - std::log1p(-p) - g_drop) / tau);
}

}  // namespace

std::size_t theta_index(std::size_t i, std::size_t j, std::size_t n) {
  if (j < 1 || j > i || i > n)
    throw std::out_of_range("theta_index(" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside 1 <= j <= i <= " + std::to_string(n));
  return i * (i - 1) / 2 + j;
}

std::size_t nodes_from_theta_length(std::size_t len) {
  const auto n = static_cast<std::size_t>((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0 + 0.5);
  if (theta_length(n) != len)
    throw std::invalid_argument("theta length " + std::to_string(len) +
                                " is not N(N+1)/2 for any N");
  return n;
}

Matrix expand_symmetric(std::span<const double> theta) {
  Tape tape;
  Var t = tape.constant(Tensor({theta.size()}, std::vector<double>(theta.begin(), theta.end())));
  return tape.value(ops::expand_symmetric(tape, t)).to_matrix();
}

Matrix sparsify(const Matrix& a, double alpha) {
  Tape tape;
  Var x = tape.constant(Tensor::from_matrix(a));
  Var al = tape.constant(Tensor::scalar(alpha));
  return tape.value(ops::sparsify(tape, x, al)).to_matrix();
}

double sparsity_loss(std::span<const double> theta) {
  Tape tape;
  Var t = tape.constant(Tensor({theta.size()}, std::vector<double>(theta.begin(), theta.end())));
  return tape.value(ops::sparsity_loss(tape, t)).item();
}

BinaryAdjacency gumbel_binarize(const Matrix& prob, double tau, Engine& rng, SampleMode mode) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_binarize: temperature must be > 0");
  if (prob.rows() != prob.cols())
    throw std::invalid_argument("gumbel_binarize: probability matrix must be square");
  const auto n = static_cast<std::size_t>(prob.rows());
  const std::size_t pairs = theta_length(n);

  BinaryAdjacency out;
  out.tau = tau;
  out.hard = Matrix::Zero(prob.rows(), prob.cols());
  out.soft.resize(pairs);
  out.gumbel_keep.assign(pairs, 0.0);
  out.gumbel_drop.assign(pairs, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const std::size_t k = packed(i, j);
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      const double p = std::clamp(prob(ii, jj), kProbClamp, 1.0 - kProbClamp);
      if (mode == SampleMode::Train) {
        out.gumbel_keep[k] = gumbel(rng);
        out.gumbel_drop[k] = gumbel(rng);
      }
      const double keep_logit = std::log(p) + out.gumbel_keep[k];
      const double drop_logit = std::log1p(-p) + out.gumbel_drop[k];
      const double h = keep_logit > drop_logit ? 1.0 : 0.0;
      out.hard(ii, jj) = h;
      out.hard(jj, ii) = h;
      out.soft[k] = relaxed_keep(p, out.gumbel_keep[k], out.gumbel_drop[k], tau);
    }
  }
  return out;
}

GraphParams GraphParams::init(std::size_t n_nodes, std::size_t n_layers, Engine& rng,
                              double theta_std, double theta_mean) {
  GraphParams g;
  g.n_nodes = n_nodes;
  g.theta.resize(theta_length(n_nodes));
  for (double& t : g.theta) t = theta_mean + theta_std * standard_normal(rng);
  g.alpha = 0.0;
  const auto n = static_cast<Eigen::Index>(n_nodes);
  g.layer_weights.assign(n_layers, Matrix::Ones(n, n));
  return g;
}

void GraphParams::validate() const {
  if (n_nodes < 2) throw std::invalid_argument("GraphParams: need at least 2 nodes");
  if (theta.size() != theta_length(n_nodes))
    throw std::invalid_argument("GraphParams: theta has " + std::to_string(theta.size()) +
                                " entries, expected " + std::to_string(theta_length(n_nodes)));
  for (const Matrix& m : layer_weights) {
    if (static_cast<std::size_t>(m.rows()) != n_nodes ||
        static_cast<std::size_t>(m.cols()) != n_nodes)
      throw std::invalid_argument("GraphParams: layer weight matrix is not N x N");
  }
}

// ---------------------------------------------------------------------------
// tape ops

namespace ops {

Var expand_symmetric(Tape& tape, Var theta) {
  const Tensor& t = tape.value(theta);
  const std::size_t n = nodes_from_theta_length(t.size());
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = t[packed(i, j)];
      out[i * n + j] = v;
      out[j * n + i] = v;
    }
  }
  return tape.record(OpKind::ExpandSymmetric, {theta}, std::move(out));
}

Var sparsify(Tape& tape, Var a, Var alpha) {
  const Tensor& x = tape.value(a);
  const double s_alpha = logistic(tape.value(alpha).item());
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(0.0, logistic(x[i]) - s_alpha);
  return tape.record(OpKind::Sparsify, {a, alpha}, std::move(out));
}

Var gumbel_straight_through(Tape& tape, Var prob, const BinaryAdjacency& sample,
                            bool straight_through, bool offset) {
  const Tensor& p = tape.value(prob);
  if (p.rank() != 2 || p.dim(0) != p.dim(1))
    throw std::invalid_argument("gumbel_straight_through: probability must be square");
  const std::size_t n = p.dim(0);
  if (static_cast<std::size_t>(sample.hard.rows()) != n || sample.soft.size() != theta_length(n))
    throw std::invalid_argument("gumbel_straight_through: sample does not match N = " +
                                std::to_string(n));

  Tensor out({n, n});
  Tensor soft({theta_length(n)});
  Tensor interior({theta_length(n)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const std::size_t k = packed(i, j);
      const double raw = p[i * n + j];
      const double pc = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      interior[k] = (raw > kProbClamp && raw < 1.0 - kProbClamp) ? 1.0 : 0.0;
      soft[k] = relaxed_keep(pc, sample.gumbel_keep[k], sample.gumbel_drop[k], sample.tau);
      const double hard = sample.hard(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double v = offset ? hard + (soft[k] - sample.soft[k]) : hard;
      out[i * n + j] = v;
      out[j * n + i] = v;
    }
  }
  Saved s;
  s.tensors = {std::move(soft), std::move(interior)};
  s.reals = {sample.tau};
  s.ints = {straight_through ? 1 : 0};
  return tape.record(OpKind::GumbelStraightThrough, {prob}, std::move(out), std::move(s));
}

Var sparsity_loss(Tape& tape, Var theta) {
  const Tensor& t = tape.value(theta);
  if (t.size() == 0) throw std::invalid_argument("sparsity_loss: empty theta");
  double acc = 0.0;
  for (double v : t.data) acc += logistic(v);
  return tape.record(OpKind::SparsityLoss, {theta}, Tensor::scalar(acc / static_cast<double>(t.size())));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// adjoints

namespace detail {

void expand_symmetric_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const>,
                              std::span<Tensor* const> grads) {
  const std::size_t n = node.value.dim(0);
  Tensor& dt = *grads[0];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const std::size_t k = packed(i, j);
      dt[k] += g[i * n + j];
      if (i != j) dt[k] += g[j * n + i];
    }
  }
}

void sparsify_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const> in,
                      std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const double sa = logistic(in[1]->item());
  double d_alpha = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (node.value[i] <= 0.0) continue;
    const double s = logistic(x[i]);
    if (grads[0]) (*grads[0])[i] += g[i] * s * (1.0 - s);
    d_alpha -= g[i];
  }
  if (grads[1]) (*grads[1])[0] += d_alpha * sa * (1.0 - sa);
}

void gumbel_st_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const> in,
                       std::span<Tensor* const> grads) {
  if (node.saved.ints.at(0) == 0) return;  // straight-through disabled
  const Tensor& soft = node.saved.tensors.at(0);
  const Tensor& interior = node.saved.tensors.at(1);
  const double tau = node.saved.reals.at(0);
  const Tensor& p = *in[0];
  const std::size_t n = p.dim(0);
  Tensor& dp = *grads[0];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const std::size_t k = packed(i, j);
      if (interior[k] == 0.0) continue;
      const double pij = p[i * n + j];
      const double ds_dp = soft[k] * (1.0 - soft[k]) / tau * (1.0 / pij + 1.0 / (1.0 - pij));
      const double g_pair = g[i * n + j] + (i != j ? g[j * n + i] : 0.0);
      dp[i * n + j] += g_pair * ds_dp;
    }
  }
}

void sparsity_loss_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                           std::span<Tensor* const> grads) {
  const Tensor& t = *in[0];
  const double scale = g.item() / static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = logistic(t[i]);
    (*grads[0])[i] += scale * s * (1.0 - s);
  }
}

}  // namespace detail

}  // namespace stgsl
