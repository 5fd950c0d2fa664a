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

#include "stgsl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adjoints.hpp"

namespace stgsl {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::Mul: return "mul";
    case OpKind::Sum: return "sum";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::ExpandSymmetric: return "expand_symmetric";
    case OpKind::Sparsify: return "sparsify";
    case OpKind::GumbelStraightThrough: return "gumbel_straight_through";
    case OpKind::SparsityLoss: return "sparsity_loss";
    case OpKind::NormalizedAdjacency: return "normalized_adjacency";
    case OpKind::SpatialConv: return "spatial_conv";
    case OpKind::TemporalConv: return "temporal_conv";
    case OpKind::TemporalMaxPool: return "temporal_max_pool";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::Dropout: return "dropout";
    case OpKind::MeanPool: return "mean_pool";
    case OpKind::Linear: return "linear";
    case OpKind::BceWithLogits: return "bce_with_logits";
    case OpKind::kCount: break;
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// generic adjoints

namespace {

void add_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const>,
                 std::span<Tensor* const> grads) {
  for (Tensor* dst : grads) {
    if (!dst) continue;
    for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += g[i];
  }
}

void scale_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const>,
                   std::span<Tensor* const> grads) {
  const double c = node.saved.reals.at(0);
  for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += c * g[i];
}

void mul_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                 std::span<Tensor* const> grads) {
  if (grads[0])
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * (*in[1])[i];
  if (grads[1])
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] += g[i] * (*in[0])[i];
}

void sum_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const>,
                 std::span<Tensor* const> grads) {
  const double s = g.item();
  for (double& x : grads[0]->data) x += s;
}

void relu_adjoint(const Node&, const Tensor& g, std::span<const Tensor* const> in,
                  std::span<Tensor* const> grads) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if ((*in[0])[i] > 0.0) (*grads[0])[i] += g[i];
}

void sigmoid_adjoint(const Node& node, const Tensor& g, std::span<const Tensor* const>,
                     std::span<Tensor* const> grads) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = node.value[i];
    (*grads[0])[i] += g[i] * s * (1.0 - s);
  }
}

constexpr std::array<Adjoint, kOpKindCount> make_registry() {
  std::array<Adjoint, kOpKindCount> r{};
  auto set = [&r](OpKind k, Adjoint a) { r[static_cast<std::size_t>(k)] = a; };
  set(OpKind::Add, add_adjoint);
  set(OpKind::Scale, scale_adjoint);
  set(OpKind::Mul, mul_adjoint);
  set(OpKind::Sum, sum_adjoint);
  set(OpKind::Relu, relu_adjoint);
  set(OpKind::Sigmoid, sigmoid_adjoint);
  set(OpKind::ExpandSymmetric, detail::expand_symmetric_adjoint);
  set(OpKind::Sparsify, detail::sparsify_adjoint);
  set(OpKind::GumbelStraightThrough, detail::gumbel_st_adjoint);
  set(OpKind::SparsityLoss, detail::sparsity_loss_adjoint);
  set(OpKind::NormalizedAdjacency, detail::normalized_adjacency_adjoint);
  set(OpKind::SpatialConv, detail::spatial_conv_adjoint);
  set(OpKind::TemporalConv, detail::temporal_conv_adjoint);
  set(OpKind::TemporalMaxPool, detail::temporal_max_pool_adjoint);
  set(OpKind::ConcatChannels, detail::concat_channels_adjoint);
  set(OpKind::Dropout, detail::dropout_adjoint);
  set(OpKind::MeanPool, detail::mean_pool_adjoint);
  set(OpKind::Linear, detail::linear_adjoint);
  set(OpKind::BceWithLogits, detail::bce_with_logits_adjoint);
  return r;
}

const std::array<Adjoint, kOpKindCount> kRegistry = make_registry();

}  // namespace

Adjoint adjoint_for(OpKind kind) {
  if (kind == OpKind::Leaf || kind == OpKind::kCount) return nullptr;
  return kRegistry[static_cast<std::size_t>(kind)];
}

// ---------------------------------------------------------------------------
// GradStore / Tape

const Tensor& GradStore::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::out_of_range("no gradient for parameter '" + name + "'");
  return it->second;
}

void Tape::round_if_single(Tensor& t) const {
  if (precision_ != Precision::Single) return;
  for (double& x : t.data) x = static_cast<double>(static_cast<float>(x));
}

Var Tape::parameter(const std::string& name, Tensor value) {
  round_if_single(value);
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.name = name;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  round_if_single(value);
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, Saved saved) {
  Node n;
  n.kind = kind;
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::logic_error(std::string("record(") + std::string(op_name(kind)) +
                             "): input is not on this tape");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }
  round_if_single(value);
  if (!value.all_finite())
    throw NumericError("non-finite value produced by " + std::string(op_name(kind)) + " (node " +
                       std::to_string(nodes_.size()) + ")");
  n.value = std::move(value);
  n.saved = std::move(saved);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

GradStore Tape::backward(Var loss) const {
  const auto root = static_cast<std::size_t>(loss.id);
  if (nodes_.at(root).value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(nodes_[root].value.shape));

  std::vector<Tensor> grads(nodes_.size());
  grads[root] = Tensor(nodes_[root].value.shape, 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t k = root + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (node.kind == OpKind::Leaf || !node.requires_grad || grads[k].data.empty()) continue;

    const Adjoint adjoint = adjoint_for(node.kind);
    if (!adjoint)
      throw std::logic_error("no adjoint registered for " + std::string(op_name(node.kind)));

    in_values.clear();
    in_grads.clear();
    for (int id : node.inputs) {
      const Node& src = nodes_[static_cast<std::size_t>(id)];
      in_values.push_back(&src.value);
      if (src.requires_grad) {
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.data.empty()) g = Tensor(src.value.shape, 0.0);
        in_grads.push_back(&g);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    adjoint(node, grads[k], in_values, in_grads);
    for (Tensor* g : in_grads) {
      if (g && !g->all_finite())
        throw NumericError("non-finite gradient from " + std::string(op_name(node.kind)) +
                           " (node " + std::to_string(k) + ")");
    }
    grads[k] = Tensor();  // release intermediate storage early
  }

  GradStore store;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& node = nodes_[k];
    if (node.kind != OpKind::Leaf || !node.requires_grad) continue;
    Tensor g = grads[k].data.empty() ? Tensor(node.value.shape, 0.0) : std::move(grads[k]);
    store.add(node.name, std::move(g));
  }
  return store;
}

// ---------------------------------------------------------------------------
// generic ops

namespace ops {

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape) +
                                " vs " + shape_string(b.shape));
}
}  // namespace

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape.record(OpKind::Add, {a, b}, std::move(out));
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = tape.value(a);
  for (double& v : out.data) v *= factor;
  Saved s;
  s.reals = {factor};
  return tape.record(OpKind::Scale, {a}, std::move(out), std::move(s));
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape.record(OpKind::Mul, {a, b}, std::move(out));
}

Var sum(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  return tape.record(OpKind::Sum, {a}, Tensor::scalar(s));
}

Var relu(Tape& tape, Var a) {
  Tensor out = tape.value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return tape.record(OpKind::Relu, {a}, std::move(out));
}

Var sigmoid(Tape& tape, Var a) {
  Tensor out = tape.value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return tape.record(OpKind::Sigmoid, {a}, std::move(out));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// ParamSet

Tensor& ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  items_.emplace_back(name, std::move(value));
  return items_.back().second;
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& p) { return p.first == name; });
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("unknown parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("unknown parameter '" + name + "'");
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParamSet& params, const GradStore& grads, AdamState& state) {
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (auto& [name, p] : params.items()) {
    if (!grads.contains(name)) continue;
    const Tensor& g = grads.at(name);
    if (g.shape != p.shape)
      throw std::invalid_argument("adam_step: gradient shape " + shape_string(g.shape) +
                                  " does not match parameter '" + name + "' " +
                                  shape_string(p.shape));
    auto [mit, m_new] = state.m.try_emplace(name, p.shape, 0.0);
    auto [vit, v_new] = state.v.try_emplace(name, p.shape, 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape != p.shape || v.shape != p.shape)
      throw std::invalid_argument("adam_step: moment shape mismatch for '" + name + "'");

    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (c.decoupled) {
        p[i] *= 1.0 - c.lr * c.weight_decay;
      } else {
        gi += c.weight_decay * p[i];
      }
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// finite differences

FdReport finite_diff_check(ParamSet& params, const std::string& name,
                           const std::function<double(const ParamSet&)>& loss_fn,
                           const GradStore& analytic, const FdOptions& options) {
  Tensor& p = params.at(name);
  const Tensor& g = analytic.at(name);
  if (g.shape != p.shape)
    throw std::invalid_argument("finite_diff_check: gradient shape mismatch for '" + name + "'");

  const double f0 = loss_fn(params);
  const double f0_again = loss_fn(params);
  if (f0 != f0_again)
    throw std::runtime_error("finite_diff_check: loss is not deterministic (" +
                             std::to_string(f0) + " vs " + std::to_string(f0_again) +
                             "); freeze all stochastic draws first");

  std::vector<std::size_t> coords(p.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > options.max_coords) {
    Engine rng(mix64(options.coord_seed ^ fnv1a(name)));
    shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  FdReport report;
  report.name = name;
  const double h = options.step;
  auto eval_at = [&](std::size_t idx, double x) {
    p[idx] = x;
    return loss_fn(params);
  };
  for (std::size_t idx : coords) {
    const double x0 = p[idx];
    const double fp = eval_at(idx, x0 + h);
    const double fm = eval_at(idx, x0 - h);
    // For a smooth loss the gap between the one-sided slopes is ~h f'' and
    // halves with the step; across a kink it does not.
    const double gap = (fp - f0) / h - (f0 - fm) / h;
    bool kink = false;
    if (std::abs(gap) > options.kink_abs) {
      const double fp2 = eval_at(idx, x0 + 0.5 * h);
      const double fm2 = eval_at(idx, x0 - 0.5 * h);
      const double gap2 = (fp2 - f0) / (0.5 * h) - (f0 - fm2) / (0.5 * h);
      kink = std::abs(gap2 - 0.5 * gap) > options.kink_rel * std::abs(gap);
    }
    p[idx] = x0;
    if (kink) {
      ++report.kinks;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(g[idx], numeric);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = idx;
      report.worst_analytic = g[idx];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace stgsl
