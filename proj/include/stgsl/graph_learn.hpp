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

#include <cstddef>
#include <vector>

#include "stgsl/autodiff.hpp"
#include "stgsl/rng.hpp"
#include "stgsl/tensor.hpp"

namespace stgsl {

/// Lower bound/upper bound applied to keep-probabilities before taking logs.
inline constexpr double kProbClamp = 1e-6;

/// Number of free parameters of a symmetric N x N matrix stored as its lower
/// triangle, diagonal included.
constexpr std::size_t theta_length(std::size_t n) { return n * (n + 1) / 2; }

/// Flat 1-based position of entry (i, j), 1 <= j <= i <= n, in the packed
/// lower triangle. Throws std::out_of_range outside that domain.
std::size_t theta_index(std::size_t i, std::size_t j, std::size_t n);

/// Inverse of theta_length; throws if `len` is not triangular.
std::size_t nodes_from_theta_length(std::size_t len);

enum class SampleMode { Train, Eval };

/// One binarized adjacency sample.
///
/// `gumbel_keep`/`gumbel_drop` hold the per-unordered-pair noise (packed like
/// theta); `soft` holds the relaxed keep values the straight-through gradient
/// is taken from. All three are mirrored into full matrices on use.
struct BinaryAdjacency {
  Matrix hard;                      // entries in {0, 1}, symmetric
  std::vector<double> soft;         // packed, one per unordered pair
  std::vector<double> gumbel_keep;  // packed g1
  std::vector<double> gumbel_drop;  // packed g2
  double tau = 0.2;
};

/// Full symmetric matrix from its packed lower triangle.
Matrix expand_symmetric(std::span<const double> theta);

/// Soft-threshold sparsification: ReLU(sigmoid(a_ij) - sigmoid(alpha)).
Matrix sparsify(const Matrix& a, double alpha);

/// Hard gumbel-softmax sample from a symmetric keep-probability matrix.
///
/// Train mode draws one pair of Gumbel(0,1) variables per unordered pair and
/// keeps the edge iff log p + g1 > log(1-p) + g2, which keeps it with
/// probability exactly p. Eval mode uses no noise (edge iff p > 0.5).
/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp].
BinaryAdjacency gumbel_binarize(const Matrix& prob, double tau, Engine& rng, SampleMode mode);

/// Mean of sigmoid(theta).
double sparsity_loss(std::span<const double> theta);

/// Trainable graph-structure parameters. `layer_weights` holds one N x N
/// aggregation-weight matrix per ST-GC block.
struct GraphParams {
  std::size_t n_nodes = 0;
  std::vector<double> theta;
  double alpha = 0.0;
  std::vector<Matrix> layer_weights;

  /// theta ~ Normal(0, theta_std^2), alpha = 0, every weight matrix all-ones.
  static GraphParams init(std::size_t n_nodes, std::size_t n_layers, Engine& rng,
                          double theta_std = 0.5, double theta_mean = 0.0);
  void validate() const;
};

namespace ops {
/// Tape version of expand_symmetric; the gradient of a packed entry sums both
/// mirrored positions.
Var expand_symmetric(Tape& tape, Var theta);
/// Tape version of sparsify; `alpha` is a one-element tensor.
Var sparsify(Tape& tape, Var a, Var alpha);
/// Forward value is `sample.hard` + (soft(p) - sample.soft), which equals
/// sample.hard exactly when p is the probability the sample was drawn from.
/// Backward uses the softmax Jacobian (straight-through). With
/// `straight_through == false` the adjoint contributes nothing, as if the
/// argmax were differentiated directly. With `offset == false` the forward
/// value is sample.hard exactly, for replaying a sample at another precision.
Var gumbel_straight_through(Tape& tape, Var prob, const BinaryAdjacency& sample,
                            bool straight_through = true, bool offset = true);
Var sparsity_loss(Tape& tape, Var theta);
}  // namespace ops

}  // namespace stgsl
