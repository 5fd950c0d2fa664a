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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stgsl/rng.hpp"
#include "stgsl/tensor.hpp"

namespace stgsl {

/// Raised when a NaN/Inf appears in a forward value or a gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OpKind : std::uint8_t {
  Leaf,
  // generic
  Add,
  Scale,
  Mul,
  Sum,
  Relu,
  Sigmoid,
  // graph structure
  ExpandSymmetric,
  Sparsify,
  GumbelStraightThrough,
  SparsityLoss,
  // network
  NormalizedAdjacency,
  SpatialConv,
  TemporalConv,
  TemporalMaxPool,
  ConcatChannels,
  Dropout,
  MeanPool,
  Linear,
  BceWithLogits,
  kCount
};

constexpr std::size_t kOpKindCount = static_cast<std::size_t>(OpKind::kCount);

std::string_view op_name(OpKind kind);

enum class Precision { Double, Single };

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Extra state an operation keeps for its adjoint.
struct Saved {
  std::vector<Tensor> tensors;
  std::vector<double> reals;
  std::vector<std::int64_t> ints;
};

struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<int> inputs;
  Tensor value;
  Saved saved;
  bool requires_grad = false;
  std::string name;  // leaves only
};

/// Signature of a registered adjoint: accumulate into every non-null input
/// gradient given the output gradient.
using Adjoint = void (*)(const Node& node, const Tensor& grad_out,
                         std::span<const Tensor* const> input_values,
                         std::span<Tensor* const> input_grads);

/// Adjoint for `kind`, or nullptr when none is registered.
Adjoint adjoint_for(OpKind kind);

/// Named gradients of the leaves marked as parameters.
class GradStore {
 public:
  void add(const std::string& name, Tensor grad) { grads_[name] = std::move(grad); }
  bool contains(const std::string& name) const { return grads_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  const std::map<std::string, Tensor>& all() const { return grads_; }
  std::size_t size() const { return grads_.size(); }

 private:
  std::map<std::string, Tensor> grads_;
};

/// Record of primal operations for one scalar-loss evaluation. Nodes are
/// appended in evaluation order, so the tape is acyclic by construction.
class Tape {
 public:
  explicit Tape(Precision precision = Precision::Double) : precision_(precision) {}

  Var parameter(const std::string& name, Tensor value);
  Var constant(Tensor value);

  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, Saved saved = {});

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  Precision precision() const { return precision_; }

  /// Reverse-mode accumulation from a scalar `loss`.
  ///
  /// Throws NumericError naming the first operation whose adjoint produced a
  /// non-finite gradient.
  GradStore backward(Var loss) const;

 private:
  void round_if_single(Tensor& t) const;

  Precision precision_;
  std::vector<Node> nodes_;
};

// Generic differentiable operations.
namespace ops {
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var mul(Tape& tape, Var a, Var b);
Var sum(Tape& tape, Var a);
Var relu(Tape& tape, Var a);
Var sigmoid(Tape& tape, Var a);
}  // namespace ops

/// Ordered, named collection of parameter tensors.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  std::size_t count() const { return items_.size(); }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
  bool decoupled = true;  // false: classic L2, wd * p added to the gradient
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// One Adam update with bias correction. With decoupled weight decay the
/// parameters are first multiplied by (1 - lr * wd).
void adam_step(ParamSet& params, const GradStore& grads, AdamState& state);

struct FdOptions {
  double step = 1e-5;
  std::size_t max_coords = 64;   // larger tensors are subsampled
  std::uint64_t coord_seed = 0;
  /// Kink test: when the one-sided slopes differ by more than `kink_abs`,
  /// the step is halved; a smooth loss halves the gap (to within `kink_rel`
  /// of it), a kink does not. Flagged coordinates are excluded.
  double kink_rel = 0.25;
  double kink_abs = 1e-9;
};

struct FdReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Relative error used throughout gradient checks.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Central finite-difference check of one parameter tensor.
///
/// `loss_fn` must be a deterministic function of the parameters (all
/// stochastic draws frozen); it is evaluated twice at the base point and the
/// check aborts if the values differ.
FdReport finite_diff_check(ParamSet& params, const std::string& name,
                           const std::function<double(const ParamSet&)>& loss_fn,
                           const GradStore& analytic, const FdOptions& options = {});

}  // namespace stgsl
