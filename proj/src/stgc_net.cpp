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

#include "stgsl/stgc_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "adjoints.hpp"
#include "stgsl/io.hpp"

namespace stgsl {

using Eigen::Index;

namespace {

inline Index ix(std::size_t v) { return static_cast<Index>(v); }

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Engine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.data) v = limit * (2.0 * uniform_open(rng) - 1.0);
  return t;
}

// Pointwise conv followed by an optional k-wide conv; branch 3 pools first.
struct BranchLayout {
  std::size_t reduce_kernel = 1;
  std::size_t conv_kernel = 0;  // 0: no second conv
  bool pool_first = false;
};

std::array<BranchLayout, kInceptionBranches> branch_layouts(const ModelConfig& c) {
  return {BranchLayout{1, 0, false}, BranchLayout{1, c.branch_kernels[0], false},
          BranchLayout{1, c.branch_kernels[1], false}, BranchLayout{1, 0, true}};
}

}  // namespace

// ---------------------------------------------------------------------------
// config / names / init

void ModelConfig::validate() const {
  require(n_nodes >= 2, "ModelConfig: need at least 2 nodes");
  require(n_layers >= 1, "ModelConfig: need at least one block");
  require(channels >= 4 && channels % 4 == 0, "ModelConfig: channels must be a positive multiple of 4");
  for (std::size_t k : branch_kernels)
    require(k % 2 == 1, "ModelConfig: inception kernels must be odd for same-padding");
  require(window >= min_window(), "ModelConfig: window " + std::to_string(window) +
                                      " shorter than the largest inception kernel");
  require(dropout >= 0.0 && dropout < 1.0, "ModelConfig: dropout must be in [0, 1)");
  require(tau > 0.0, "ModelConfig: tau must be > 0");
  require(lambda >= 0.0, "ModelConfig: lambda must be >= 0");
  require(degree_eps > 0.0, "ModelConfig: degree_eps must be > 0");
}

std::size_t ModelConfig::min_window() const {
  return std::max<std::size_t>({3, branch_kernels[0], branch_kernels[1]});
}

namespace pname {
std::string layer_weight(std::size_t layer) { return "M." + std::to_string(layer); }
std::string spatial_weight(std::size_t layer) { return "W." + std::to_string(layer); }
std::string inception(std::size_t layer, std::size_t branch, std::size_t k) {
  return "incep." + std::to_string(layer) + "." + std::to_string(branch) + "." + std::to_string(k);
}
}  // namespace pname

StgcModel StgcModel::init(const ModelConfig& config, Engine& rng) {
  config.validate();
  StgcModel model;
  model.config = config;
  const std::size_t n = config.n_nodes;
  const std::size_t h = config.channels;
  const std::size_t q = h / kInceptionBranches;

  GraphParams graph = GraphParams::init(n, config.n_layers, rng, config.theta_init_std,
                                          config.theta_init_mean);
  model.params.add(pname::kTheta, Tensor({graph.theta.size()}, graph.theta));
  model.params.add(pname::kAlpha, Tensor::scalar(graph.alpha));
  for (std::size_t l = 0; l < config.n_layers; ++l)
    model.params.add(pname::layer_weight(l), Tensor::from_matrix(graph.layer_weights[l]));

  const auto layouts = branch_layouts(config);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::size_t h_in = config.input_channels(l);
    model.params.add(pname::spatial_weight(l), glorot({h_in, h}, h_in, h, rng));
    for (std::size_t b = 0; b < kInceptionBranches; ++b) {
      const BranchLayout& bl = layouts[b];
      model.params.add(pname::inception(l, b, 0), glorot({1, h, q}, h, q, rng));
      model.params.add(pname::inception(l, b, 1), Tensor({q}));
      if (bl.conv_kernel) {
        const std::size_t k = bl.conv_kernel;
        model.params.add(pname::inception(l, b, 2), glorot({k, q, q}, k * q, k * q, rng));
        model.params.add(pname::inception(l, b, 3), Tensor({q}));
      }
    }
  }
  model.params.add(pname::kHeadW, glorot({h}, h, 1, rng));
  model.params.add(pname::kHeadB, Tensor({1}));
  return model;
}

GraphParams StgcModel::graph() const {
  GraphParams g;
  g.n_nodes = config.n_nodes;
  g.theta = params.at(pname::kTheta).to_vector();
  g.alpha = params.at(pname::kAlpha).item();
  for (std::size_t l = 0; l < config.n_layers; ++l)
    g.layer_weights.push_back(params.at(pname::layer_weight(l)).to_matrix());
  return g;
}

Matrix StgcModel::keep_probability() const {
  const GraphParams g = graph();
  return sparsify(expand_symmetric(g.theta), g.alpha);
}

// ---------------------------------------------------------------------------
// noise

ForwardNoise ForwardNoise::frozen(NoiseRecord record) {
  ForwardNoise n;
  n.frozen_ = true;
  n.record_ = std::move(record);
  return n;
}

void ForwardNoise::begin_pass() {
  mask_cursor_ = 0;
  if (recording_) record_ = NoiseRecord{};
}

BinaryAdjacency ForwardNoise::sample_graph(const Matrix& prob, double tau, SampleMode mode) {
  if (frozen_) {
    if (!record_.graph) throw std::logic_error("frozen noise has no recorded graph sample");
    if (record_.graph->hard.rows() != prob.rows())
      throw std::logic_error("frozen graph sample has the wrong size");
    if (record_.graph->tau != tau)
      throw std::logic_error("frozen graph sample recorded at a different temperature");
    return *record_.graph;
  }
  BinaryAdjacency s = gumbel_binarize(prob, tau, gumbel_, mode);
  if (recording_) record_.graph = s;
  return s;
}

Tensor ForwardNoise::dropout_mask(const Shape& shape, double rate) {
  if (frozen_) {
    if (mask_cursor_ >= record_.dropout_masks.size())
      throw std::logic_error("frozen noise ran out of dropout masks");
    const Tensor& m = record_.dropout_masks[mask_cursor_++];
    if (m.shape != shape) throw std::logic_error("frozen dropout mask has the wrong shape");
    return m;
  }
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.data) v = uniform_open(dropout_) >= rate ? keep_scale : 0.0;
  if (recording_) record_.dropout_masks.push_back(mask);
  ++mask_cursor_;
  return mask;
}

BoundParams bind_parameters(Tape& tape, const ParamSet& params, bool trainable) {
  BoundParams out;
  for (const auto& [name, value] : params.items())
    out[name] = trainable ? tape.parameter(name, value) : tape.constant(value);
  return out;
}

// ---------------------------------------------------------------------------
// tape ops

namespace ops {

Var normalized_adjacency(Tape& tape, Var adjacency, Var weights, double degree_eps) {
  const Tensor& a = tape.value(adjacency);
  const Tensor& m = tape.value(weights);
  require(a.rank() == 2 && a.dim(0) == a.dim(1) && a.shape == m.shape,
          "normalized_adjacency: expected matching N x N inputs");
  const std::size_t n = a.dim(0);
  Tensor e(a.shape);
  Tensor r({n});
  for (std::size_t i = 0; i < n; ++i) {
    double deg = degree_eps;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = m[i * n + j];
      e[i * n + j] = a[i * n + j] * (w > 0.0 ? w : 0.0);
      deg += e[i * n + j];
    }
    r[i] = 1.0 / std::sqrt(deg);
  }
  Tensor out(a.shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = r[i] * e[i * n + j] * r[j];
  Saved s;
  s.tensors = {std::move(e), std::move(r)};
  return tape.record(OpKind::NormalizedAdjacency, {adjacency, weights}, std::move(out), std::move(s));
}

Var spatial_conv(Tape& tape, Var x, Var a_norm, Var w) {
  const Tensor& xv = tape.value(x);
  const Tensor& av = tape.value(a_norm);
  const Tensor& wv = tape.value(w);
  require(xv.rank() == 4, "spatial_conv: input must be [B,T,N,C], got " + shape_string(xv.shape));
  const std::size_t n = xv.dim(2);
  const std::size_t h1 = xv.dim(3);
  require(av.shape == Shape{n, n}, "spatial_conv: adjacency " + shape_string(av.shape) +
                                       " does not match " + std::to_string(n) + " nodes");
  require(wv.rank() == 2 && wv.dim(0) == h1,
          "spatial_conv: weight " + shape_string(wv.shape) + " does not match " +
              std::to_string(h1) + " input channels");
  const std::size_t h2 = wv.dim(1);
  const std::size_t slices = xv.dim(0) * xv.dim(1);
  const std::size_t rows = slices * n;

  Tensor xw({rows, h2});
  xw.as_matrix(rows, h2).noalias() = xv.as_matrix(rows, h1) * wv.as_matrix(h1, h2);
  Tensor out({xv.dim(0), xv.dim(1), n, h2});
  const auto a = av.as_matrix(n, n);
  for (std::size_t s = 0; s < slices; ++s) {
    ConstMatrixMap src(xw.data.data() + s * n * h2, ix(n), ix(h2));
    MatrixMap dst(out.data.data() + s * n * h2, ix(n), ix(h2));
    dst.noalias() = a * src;
  }
  Saved saved;
  saved.tensors = {std::move(xw)};
  return tape.record(OpKind::SpatialConv, {x, a_norm, w}, std::move(out), std::move(saved));
}

Var temporal_conv(Tape& tape, Var x, Var kernel, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& kv = tape.value(kernel);
  const Tensor& bv = tape.value(bias);
  require(xv.rank() == 4, "temporal_conv: input must be [B,T,N,C]");
  require(kv.rank() == 3 && kv.dim(0) % 2 == 1 && kv.dim(1) == xv.dim(3),
          "temporal_conv: kernel " + shape_string(kv.shape) + " incompatible with input " +
              shape_string(xv.shape));
  const std::size_t bsz = xv.dim(0), t = xv.dim(1), n = xv.dim(2), cin = xv.dim(3);
  const std::size_t k = kv.dim(0), cout = kv.dim(2);
  require(bv.shape == Shape{cout}, "temporal_conv: bias must have " + std::to_string(cout) + " entries");
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto tt = static_cast<std::ptrdiff_t>(t);

  Tensor out({bsz, t, n, cout});
  auto y_all = out.as_matrix(bsz * t * n, cout);
  y_all.rowwise() = bv.as_matrix(1, cout).row(0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t base = b * t * n;
    for (std::size_t o = 0; o < k; ++o) {
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(o) - pad;
      const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(tt, tt - shift);
      if (t_hi <= t_lo) continue;
      const auto count = static_cast<std::size_t>(t_hi - t_lo) * n;
      ConstMatrixMap src(xv.data.data() + (base + static_cast<std::size_t>(t_lo + shift) * n) * cin,
                         ix(count), ix(cin));
      MatrixMap dst(out.data.data() + (base + static_cast<std::size_t>(t_lo) * n) * cout, ix(count),
                    ix(cout));
      ConstMatrixMap kw(kv.data.data() + o * cin * cout, ix(cin), ix(cout));
      dst.noalias() += src * kw;
    }
  }
  return tape.record(OpKind::TemporalConv, {x, kernel, bias}, std::move(out));
}

Var temporal_max_pool(Tape& tape, Var x, std::size_t kernel) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 4, "temporal_max_pool: input must be [B,T,N,C]");
  require(kernel % 2 == 1, "temporal_max_pool: kernel must be odd");
  const std::size_t bsz = xv.dim(0), t = xv.dim(1), n = xv.dim(2), c = xv.dim(3);
  const std::size_t r = kernel / 2;
  const std::size_t stride_t = n * c;
  Tensor out(xv.shape);
  Tensor arg(xv.shape);
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      const std::size_t lo = ti >= r ? ti - r : 0;
      const std::size_t hi = std::min(t - 1, ti + r);
      for (std::size_t e = 0; e < stride_t; ++e) {
        std::size_t best = lo;
        double best_v = xv[(b * t + lo) * stride_t + e];
        for (std::size_t s = lo + 1; s <= hi; ++s) {
          const double v = xv[(b * t + s) * stride_t + e];
          if (v > best_v) {
            best_v = v;
            best = s;
          }
        }
        out[(b * t + ti) * stride_t + e] = best_v;
        arg[(b * t + ti) * stride_t + e] = static_cast<double>(best);
      }
    }
  }
  Saved s;
  s.tensors = {std::move(arg)};
  return tape.record(OpKind::TemporalMaxPool, {x}, std::move(out), std::move(s));
}

Var concat_channels(Tape& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape lead(tape.value(parts[0]).shape.begin(), tape.value(parts[0]).shape.end() - 1);
  std::size_t total = 0;
  std::vector<std::int64_t> widths;
  for (Var v : parts) {
    const Tensor& t = tape.value(v);
    require(Shape(t.shape.begin(), t.shape.end() - 1) == lead,
            "concat_channels: leading dimensions differ");
    widths.push_back(static_cast<std::int64_t>(t.shape.back()));
    total += t.shape.back();
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor out(shape);
  const std::size_t rows = shape_size(lead);
  std::size_t offset = 0;
  for (Var v : parts) {
    const Tensor& t = tape.value(v);
    const std::size_t w = t.shape.back();
    out.as_matrix(rows, total).middleCols(ix(offset), ix(w)) = t.as_matrix(rows, w);
    offset += w;
  }
  Saved s;
  s.ints = std::move(widths);
  return tape.record(OpKind::ConcatChannels, parts, std::move(out), std::move(s));
}

Var dropout(Tape& tape, Var x, const Tensor& mask) {
  const Tensor& xv = tape.value(x);
  require(mask.shape == xv.shape, "dropout: mask shape mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Saved s;
  s.tensors = {mask};
  return tape.record(OpKind::Dropout, {x}, std::move(out), std::move(s));
}

Var mean_pool(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 4, "mean_pool: input must be [B,T,N,C]");
  const std::size_t bsz = xv.dim(0), c = xv.dim(3);
  const std::size_t per = xv.dim(1) * xv.dim(2);
  Tensor out({bsz, c});
  for (std::size_t b = 0; b < bsz; ++b) {
    out.as_matrix(bsz, c).row(ix(b)) =
        ConstMatrixMap(xv.data.data() + b * per * c, ix(per), ix(c)).colwise().sum() /
        static_cast<double>(per);
  }
  return tape.record(OpKind::MeanPool, {x}, std::move(out));
}

Var linear(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  require(xv.rank() == 2 && wv.shape == Shape{xv.dim(1)} && bv.size() == 1,
          "linear: expected [B,C] input, [C] weight and scalar bias");
  const std::size_t bsz = xv.dim(0), c = xv.dim(1);
  Tensor out({bsz});
  for (std::size_t i = 0; i < bsz; ++i) {
    double acc = bv[0];
    for (std::size_t j = 0; j < c; ++j) acc += xv[i * c + j] * wv[j];
    out[i] = acc;
  }
  return tape.record(OpKind::Linear, {x, w, b}, std::move(out));
}

Var bce_with_logits(Tape& tape, Var logits, const std::vector<double>& labels) {
  const Tensor& z = tape.value(logits);
  require(z.size() == labels.size() && !labels.empty(),
          "bce_with_logits: logits/labels length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // softplus(z) - y z, with softplus(z) = max(z, 0) + log1p(exp(-|z|))
    acc += std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i]))) - labels[i] * z[i];
  }
  Saved s;
  s.tensors = {Tensor({labels.size()}, labels)};
  return tape.record(OpKind::BceWithLogits, {logits},
                     Tensor::scalar(acc / static_cast<double>(labels.size())), std::move(s));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// adjoints

namespace detail {

void normalized_adjacency_adjoint(const Node& node, const Tensor& g,
                                  std::span<const Tensor* const> in,
                                  std::span<Tensor* const> grads) {
  const Tensor& a = *in[0];
  const Tensor& m = *in[1];
  const Tensor& e = node.saved.tensors.at(0);
  const Tensor& r = node.saved.tensors.at(1);
  const std::size_t n = a.dim(0);

  // out_ij = r_i e_ij r_j, r_i = (sum_j e_ij + eps)^-1/2
  std::vector<double> d_r(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gij = g[i * n + j] * e[i * n + j];
      d_r[i] += gij * r[j];
      d_r[j] += gij * r[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double d_deg = -0.5 * r[i] * r[i] * r[i] * d_r[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double d_e = g[i * n + j] * r[i] * r[j] + d_deg;
      const double w = m[i * n + j];
      if (grads[0]) (*grads[0])[i * n + j] += d_e * (w > 0.0 ? w : 0.0);
      if (grads[1] && w > 0.0) (*grads[1])[i * n + j] += d_e * a[i * n + j];
    }
  }
}

void spatial_conv_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const> in,
                          std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const Tensor& a = *in[1];
  const Tensor& w = *in[2];
  const Tensor& xw = node.saved.tensors.at(0);
  const std::size_t n = x.dim(2), h1 = x.dim(3), h2 = w.dim(1);
  const std::size_t slices = x.dim(0) * x.dim(1);
  const std::size_t rows = slices * n;
  const auto am = a.as_matrix(n, n);

  Matrix d_a = Matrix::Zero(ix(n), ix(n));
  Tensor d_xw({rows, h2});
  for (std::size_t s = 0; s < slices; ++s) {
    ConstMatrixMap gs(g.data.data() + s * n * h2, ix(n), ix(h2));
    ConstMatrixMap xws(xw.data.data() + s * n * h2, ix(n), ix(h2));
    if (grads[1]) d_a.noalias() += gs * xws.transpose();
    MatrixMap(d_xw.data.data() + s * n * h2, ix(n), ix(h2)).noalias() = am.transpose() * gs;
  }
  if (grads[1]) grads[1]->as_matrix(n, n) += d_a;
  if (grads[2])
    grads[2]->as_matrix(h1, h2).noalias() += x.as_matrix(rows, h1).transpose() * d_xw.as_matrix(rows, h2);
  if (grads[0])
    grads[0]->as_matrix(rows, h1).noalias() += d_xw.as_matrix(rows, h2) * w.as_matrix(h1, h2).transpose();
}

void temporal_conv_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                           std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const Tensor& kv = *in[1];
  const std::size_t bsz = x.dim(0), t = x.dim(1), n = x.dim(2), cin = x.dim(3);
  const std::size_t k = kv.dim(0), cout = kv.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto tt = static_cast<std::ptrdiff_t>(t);

  if (grads[2]) grads[2]->as_matrix(1, cout) += g.as_matrix(bsz * t * n, cout).colwise().sum();
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t base = b * t * n;
    for (std::size_t o = 0; o < k; ++o) {
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(o) - pad;
      const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(tt, tt - shift);
      if (t_hi <= t_lo) continue;
      const auto count = static_cast<std::size_t>(t_hi - t_lo) * n;
      const std::size_t src_row = base + static_cast<std::size_t>(t_lo + shift) * n;
      const std::size_t dst_row = base + static_cast<std::size_t>(t_lo) * n;
      ConstMatrixMap gy(g.data.data() + dst_row * cout, ix(count), ix(cout));
      if (grads[1]) {
        ConstMatrixMap src(x.data.data() + src_row * cin, ix(count), ix(cin));
        MatrixMap(grads[1]->data.data() + o * cin * cout, ix(cin), ix(cout)).noalias() +=
            src.transpose() * gy;
      }
      if (grads[0]) {
        ConstMatrixMap kw(kv.data.data() + o * cin * cout, ix(cin), ix(cout));
        MatrixMap(grads[0]->data.data() + src_row * cin, ix(count), ix(cin)).noalias() +=
            gy * kw.transpose();
      }
    }
  }
}

void temporal_max_pool_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const> in,
                               std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const Tensor& arg = node.saved.tensors.at(0);
  const std::size_t bsz = x.dim(0), t = x.dim(1);
  const std::size_t stride_t = x.dim(2) * x.dim(3);
  Tensor& dx = *grads[0];
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t e = 0; e < stride_t; ++e) {
        const std::size_t at = (b * t + ti) * stride_t + e;
        const auto src = static_cast<std::size_t>(arg[at]);
        dx[(b * t + src) * stride_t + e] += g[at];
      }
}

void concat_channels_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const>,
                             std::span<Tensor* const> grads) {
  const std::size_t total = g.shape.back();
  const std::size_t rows = g.size() / total;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto w = static_cast<std::size_t>(node.saved.ints[i]);
    if (grads[i]) grads[i]->as_matrix(rows, w) += g.as_matrix(rows, total).middleCols(ix(offset), ix(w));
    offset += w;
  }
}

void dropout_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const>,
                     std::span<Tensor* const> grads) {
  const Tensor& mask = node.saved.tensors.at(0);
  for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * mask[i];
}

void mean_pool_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                       std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const std::size_t bsz = x.dim(0), c = x.dim(3);
  const std::size_t per = x.dim(1) * x.dim(2);
  const double inv = 1.0 / static_cast<double>(per);
  for (std::size_t b = 0; b < bsz; ++b) {
    MatrixMap(grads[0]->data.data() + b * per * c, ix(per), ix(c)).rowwise() +=
        g.as_matrix(bsz, c).row(ix(b)) * inv;
  }
}

void linear_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                    std::span<Tensor* const> grads) {
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  const std::size_t bsz = x.dim(0), c = x.dim(1);
  for (std::size_t i = 0; i < bsz; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (grads[0]) (*grads[0])[i * c + j] += g[i] * w[j];
      if (grads[1]) (*grads[1])[j] += g[i] * x[i * c + j];
    }
    if (grads[2]) (*grads[2])[0] += g[i];
  }
}

void bce_with_logits_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const> in,
                             std::span<Tensor* const> grads) {
  const Tensor& z = *in[0];
  const Tensor& y = node.saved.tensors.at(0);
  const double scale = g.item() / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-z[i]));
    (*grads[0])[i] += scale * (s - y[i]);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// plain kernels

Matrix normalized_adjacency(const Matrix& adjacency, const Matrix& weights, double degree_eps) {
  Tape tape;
  Var a = tape.constant(Tensor::from_matrix(adjacency));
  Var m = tape.constant(Tensor::from_matrix(weights));
  return tape.value(ops::normalized_adjacency(tape, a, m, degree_eps)).to_matrix();
}

Tensor spatial_conv(const Tensor& x, const Matrix& a_norm, const Matrix& w) {
  Tape tape;
  Var xv = tape.constant(x);
  Var av = tape.constant(Tensor::from_matrix(a_norm));
  Var wv = tape.constant(Tensor::from_matrix(w));
  return tape.value(ops::spatial_conv(tape, xv, av, wv));
}

Tensor temporal_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  Tape tape;
  Var xv = tape.constant(x);
  return tape.value(ops::temporal_conv(tape, xv, tape.constant(kernel), tape.constant(bias)));
}

InceptionParams inception_params(const StgcModel& model, std::size_t layer) {
  InceptionParams p;
  for (std::size_t b = 0; b < kInceptionBranches; ++b) {
    for (std::size_t k = 0; model.params.contains(pname::inception(layer, b, k)); k += 2) {
      p.convs[b].emplace_back(model.params.at(pname::inception(layer, b, k)),
                              model.params.at(pname::inception(layer, b, k + 1)));
    }
  }
  return p;
}

namespace {

Var inception_on_tape(Tape& tape, Var x,
                      const std::array<std::vector<std::pair<Var, Var>>, kInceptionBranches>& convs) {
  std::vector<Var> outs;
  for (std::size_t b = 0; b < kInceptionBranches; ++b) {
    Var h = x;
    if (b == kInceptionBranches - 1) h = ops::temporal_max_pool(tape, h, 3);
    for (const auto& [kernel, bias] : convs[b]) h = ops::temporal_conv(tape, h, kernel, bias);
    outs.push_back(h);
  }
  return ops::relu(tape, ops::concat_channels(tape, outs));
}

}  // namespace

Tensor temporal_inception(const Tensor& x, const InceptionParams& params) {
  Tape tape;
  Var xv = tape.constant(x);
  std::array<std::vector<std::pair<Var, Var>>, kInceptionBranches> convs;
  for (std::size_t b = 0; b < kInceptionBranches; ++b) {
    require(!params.convs[b].empty(), "temporal_inception: branch without convolutions");
    for (const auto& [k, bias] : params.convs[b])
      convs[b].emplace_back(tape.constant(k), tape.constant(bias));
  }
  return tape.value(inception_on_tape(tape, xv, convs));
}

Var temporal_inception(Tape& tape, const BoundParams& p, Var x, std::size_t layer,
                       const ModelConfig& config) {
  require(tape.value(x).dim(1) >= config.min_window(),
          "temporal_inception: window of " + std::to_string(tape.value(x).dim(1)) +
              " time points is shorter than the largest kernel");
  std::array<std::vector<std::pair<Var, Var>>, kInceptionBranches> convs;
  for (std::size_t b = 0; b < kInceptionBranches; ++b) {
    for (std::size_t k = 0;; k += 2) {
      auto kit = p.find(pname::inception(layer, b, k));
      if (kit == p.end()) break;
      convs[b].emplace_back(kit->second, p.at(pname::inception(layer, b, k + 1)));
    }
  }
  return inception_on_tape(tape, x, convs);
}

Var stgc_block(Tape& tape, const BoundParams& p, Var x, Var adjacency, std::size_t layer,
               const ModelConfig& config, RunMode mode, ForwardNoise* noise) {
  Var a_norm = ops::normalized_adjacency(tape, adjacency, p.at(pname::layer_weight(layer)),
                                         config.degree_eps);
  Var h = ops::spatial_conv(tape, x, a_norm, p.at(pname::spatial_weight(layer)));
  h = temporal_inception(tape, p, h, layer, config);
  if (mode == RunMode::Train && config.dropout > 0.0) {
    if (!noise) throw std::invalid_argument("stgc_block: train mode needs a noise source");
    h = ops::dropout(tape, h, noise->dropout_mask(tape.value(h).shape, config.dropout));
  }
  return h;
}

Tensor to_internal_layout(const Tensor& batch) {
  require(batch.rank() == 4 && batch.dim(1) == 1,
          "forward: batch must be [B, 1, N, T], got " + shape_string(batch.shape));
  const std::size_t bsz = batch.dim(0), n = batch.dim(2), t = batch.dim(3);
  Tensor x({bsz, t, n, 1});
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ti = 0; ti < t; ++ti) x[(b * t + ti) * n + i] = batch[(b * n + i) * t + ti];
  return x;
}

ForwardResult forward(Tape& tape, const BoundParams& p, const ModelConfig& config,
                      const Tensor& batch, const ForwardOptions& options, ForwardNoise* noise) {
  Tensor x0 = to_internal_layout(batch);
  require(x0.dim(2) == config.n_nodes, "forward: batch has " + std::to_string(x0.dim(2)) +
                                           " nodes, model expects " + std::to_string(config.n_nodes));
  if (noise) noise->begin_pass();

  Var theta_full = ops::expand_symmetric(tape, p.at(pname::kTheta));
  Var prob = ops::sparsify(tape, theta_full, p.at(pname::kAlpha));
  Var adjacency;
  switch (options.graph) {
    case GraphMode::Sampled: {
      if (!noise) throw std::invalid_argument("forward: sampled structure needs a noise source");
      const BinaryAdjacency sample =
          noise->sample_graph(tape.value(prob).to_matrix(), config.tau, SampleMode::Train);
      adjacency = ops::gumbel_straight_through(tape, prob, sample, options.straight_through,
                                               options.surrogate_offset);
      break;
    }
    case GraphMode::Threshold: {
      Engine unused(0);
      const BinaryAdjacency sample =
          gumbel_binarize(tape.value(prob).to_matrix(), config.tau, unused, SampleMode::Eval);
      adjacency = ops::gumbel_straight_through(tape, prob, sample, options.straight_through,
                                               options.surrogate_offset);
      break;
    }
    case GraphMode::Expected:
      adjacency = prob;
      break;
  }

  Var h = tape.constant(std::move(x0));
  for (std::size_t l = 0; l < config.n_layers; ++l)
    h = stgc_block(tape, p, h, adjacency, l, config, options.mode, noise);
  Var pooled = ops::mean_pool(tape, h);
  Var logits = ops::linear(tape, pooled, p.at(pname::kHeadW), p.at(pname::kHeadB));
  return {logits, adjacency};
}

LossTerms loss(Tape& tape, Var logits, const std::vector<double>& labels, Var theta,
               double lambda) {
  LossTerms terms;
  terms.bce = ops::bce_with_logits(tape, logits, labels);
  terms.sparsity = ops::sparsity_loss(tape, theta);
  terms.total = ops::add(tape, terms.bce, ops::scale(tape, terms.sparsity, lambda));
  return terms;
}

std::vector<double> predict_logits(const StgcModel& model, const Tensor& batch, GraphMode graph,
                                   ForwardNoise* noise, Precision precision) {
  Tape tape(precision);
  const BoundParams p = bind_parameters(tape, model.params, false);
  ForwardOptions opts;
  opts.mode = RunMode::Eval;
  opts.graph = graph;
  const ForwardResult r = forward(tape, p, model.config, batch, opts, noise);
  return tape.value(r.logits).to_vector();
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'T', 'G', 'S', 'L', 'C', 'K', '1'};

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const StgcModel& model, const std::filesystem::path& path) {
  using nlohmann::json;
  const ModelConfig& c = model.config;
  json header;
  header["format_version"] = kCheckpointVersion;
  header["N"] = c.n_nodes;
  header["L"] = c.n_layers;
  header["T"] = c.window;
  header["channels"] = c.channels;
  header["branch_kernels"] = c.branch_kernels;
  header["dropout"] = c.dropout;
  header["tau"] = c.tau;
  header["lambda"] = c.lambda;
  header["degree_eps"] = c.degree_eps;
  header["theta_init_std"] = c.theta_init_std;
  header["theta_init_mean"] = c.theta_init_mean;
  json tensors = json::array();
  for (const auto& [name, t] : model.params.items()) tensors.push_back({{"name", name}, {"shape", t.shape}});
  header["tensors"] = tensors;

  const std::string hdr = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  append_u64_le(out, hdr.size());
  out += hdr;
  for (const auto& [name, t] : model.params.items())
    for (double v : t.data) append_u64_le(out, std::bit_cast<std::uint64_t>(v));
  write_file_atomic(path, out);
}

StgcModel load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  const std::string raw = read_file(path);
  if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError(path.string() + ": not a stgsl checkpoint");
  const std::uint64_t hlen = read_u64_le(raw, 8);
  if (16 + hlen > raw.size()) throw IoError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(raw.substr(16, hlen));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointVersion)
    throw IoError(path.string() + ": unsupported checkpoint version");

  StgcModel model;
  ModelConfig& c = model.config;
  try {
    c.n_nodes = header.at("N").get<std::size_t>();
    c.n_layers = header.at("L").get<std::size_t>();
    c.window = header.at("T").get<std::size_t>();
    c.channels = header.at("channels").get<std::size_t>();
    c.branch_kernels = header.at("branch_kernels").get<std::array<std::size_t, 2>>();
    c.dropout = header.at("dropout").get<double>();
    c.tau = header.at("tau").get<double>();
    c.lambda = header.at("lambda").get<double>();
    c.degree_eps = header.at("degree_eps").get<double>();
    c.theta_init_std = header.at("theta_init_std").get<double>();
    c.theta_init_mean = header.at("theta_init_mean").get<double>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": incomplete checkpoint header: " + e.what());
  }
  c.validate();

  std::size_t at = 16 + hlen;
  for (const json& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<Shape>());
    if (at + 8 * t.size() > raw.size()) throw IoError(path.string() + ": truncated tensor data");
    for (double& v : t.data) {
      v = std::bit_cast<double>(read_u64_le(raw, at));
      at += 8;
    }
    model.params.add(entry.at("name").get<std::string>(), std::move(t));
  }
  if (at != raw.size()) throw IoError(path.string() + ": trailing bytes after tensor data");

  // Layout must match a freshly initialized model of this configuration.
  Engine probe(0);
  const StgcModel reference = StgcModel::init(c, probe);
  if (reference.params.count() != model.params.count())
    throw IoError(path.string() + ": parameter set does not match the recorded configuration");
  for (const auto& [name, t] : reference.params.items()) {
    if (!model.params.contains(name) || model.params.at(name).shape != t.shape)
      throw IoError(path.string() + ": parameter '" + name + "' missing or misshapen");
  }
  return model;
}

}  // namespace stgsl
