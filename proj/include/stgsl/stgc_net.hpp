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

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stgsl/autodiff.hpp"
#include "stgsl/graph_learn.hpp"
#include "stgsl/rng.hpp"
#include "stgsl/tensor.hpp"

namespace stgsl {

inline constexpr std::size_t kInceptionBranches = 4;

struct ModelConfig {
  std::size_t n_nodes = 116;
  std::size_t n_layers = 3;
  std::size_t channels = 64;   // output width of every block; divisible by 4
  std::size_t window = 12;     // T
  std::array<std::size_t, 2> branch_kernels{3, 5};  // kernels of the two conv branches
  double dropout = 0.5;
  double tau = 0.2;
  double lambda = 1e-4;
  double degree_eps = 1e-6;
  double theta_init_std = 0.5;
  double theta_init_mean = 0.0;

  void validate() const;
  std::size_t min_window() const;
  std::size_t input_channels(std::size_t layer) const { return layer == 0 ? 1 : channels; }
};

/// Parameter names used by the model and by checkpoints.
namespace pname {
inline constexpr const char* kTheta = "theta";
inline constexpr const char* kAlpha = "alpha";
inline constexpr const char* kHeadW = "head.w";
inline constexpr const char* kHeadB = "head.b";
std::string layer_weight(std::size_t layer);    // "M.<l>"
std::string spatial_weight(std::size_t layer);  // "W.<l>"
/// "incep.<l>.<branch>.<k>": branch 0 pointwise, 1 and 2 reduce->conv,
/// 3 maxpool->pointwise; k enumerates (kernel, bias) pairs in order.
std::string inception(std::size_t layer, std::size_t branch, std::size_t k);
}  // namespace pname

/// Full parameter set plus hyperparameters.
struct StgcModel {
  ModelConfig config;
  ParamSet params;

  static StgcModel init(const ModelConfig& config, Engine& rng);

  GraphParams graph() const;
  Matrix keep_probability() const;  // sparsified adjacency (probabilities)
};

enum class RunMode { Train, Eval };

/// How the spatial structure is produced for a forward pass.
enum class GraphMode {
  Sampled,    // hard gumbel sample (straight-through gradients)
  Threshold,  // deterministic: edge iff keep probability > 0.5
  Expected,   // keep probabilities used directly as edge weights
};

struct ForwardOptions {
  RunMode mode = RunMode::Train;
  GraphMode graph = GraphMode::Sampled;
  bool straight_through = true;
  bool surrogate_offset = true;  // see ops::gumbel_straight_through
};

/// Draws consumed by one forward pass.
struct NoiseRecord {
  std::optional<BinaryAdjacency> graph;
  std::vector<Tensor> dropout_masks;
};

/// Source of gumbel and dropout noise. A live source draws from its own
/// engines and can record what it drew; a frozen source replays a record so
/// that repeated forward passes see identical draws.
class ForwardNoise {
 public:
  ForwardNoise(Engine gumbel, Engine dropout, bool recording = false)
      : gumbel_(gumbel), dropout_(dropout), recording_(recording) {}
  static ForwardNoise frozen(NoiseRecord record);

  BinaryAdjacency sample_graph(const Matrix& prob, double tau, SampleMode mode);
  Tensor dropout_mask(const Shape& shape, double rate);

  /// Start of a forward pass; replay cursors return to the first draw.
  void begin_pass();
  const NoiseRecord& record() const { return record_; }
  bool is_frozen() const { return frozen_; }

 private:
  ForwardNoise() = default;
  Engine gumbel_;
  Engine dropout_;
  bool recording_ = false;
  bool frozen_ = false;
  NoiseRecord record_;
  std::size_t mask_cursor_ = 0;
};

/// Parameters bound to a tape.
using BoundParams = std::map<std::string, Var>;
BoundParams bind_parameters(Tape& tape, const ParamSet& params, bool trainable);

// ---------------------------------------------------------------------------
// plain kernels (layout [batch][time][node][channel])

/// D^-1/2 E D^-1/2 with E = adjacency o ReLU(weights), D = diag(row sums of E) + eps.
Matrix normalized_adjacency(const Matrix& adjacency, const Matrix& weights, double degree_eps);

/// Node mixing by `a_norm` and channel mixing by `w` at every (batch, time).
Tensor spatial_conv(const Tensor& x, const Matrix& a_norm, const Matrix& w);

/// Same-padded 1-D convolution along time; `kernel` is [k][c_in][c_out].
Tensor temporal_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct InceptionParams {
  // branch -> (kernel, bias) pairs in application order
  std::array<std::vector<std::pair<Tensor, Tensor>>, kInceptionBranches> convs;
};
InceptionParams inception_params(const StgcModel& model, std::size_t layer);

/// Four-branch temporal inception followed by ReLU; time length preserved.
Tensor temporal_inception(const Tensor& x, const InceptionParams& params);

namespace ops {
Var normalized_adjacency(Tape& tape, Var adjacency, Var weights, double degree_eps);
Var spatial_conv(Tape& tape, Var x, Var a_norm, Var w);
Var temporal_conv(Tape& tape, Var x, Var kernel, Var bias);
Var temporal_max_pool(Tape& tape, Var x, std::size_t kernel);
Var concat_channels(Tape& tape, const std::vector<Var>& parts);
/// Elementwise product with a precomputed mask (already scaled).
Var dropout(Tape& tape, Var x, const Tensor& mask);
Var mean_pool(Tape& tape, Var x);  // [B,T,N,C] -> [B,C]
Var linear(Tape& tape, Var x, Var w, Var b);  // [B,C] -> [B]
/// Mean binary cross-entropy on logits, in the log-sum-exp stable form.
Var bce_with_logits(Tape& tape, Var logits, const std::vector<double>& labels);
}  // namespace ops

/// Inception on the tape; `layer` selects the bound parameters.
Var temporal_inception(Tape& tape, const BoundParams& p, Var x, std::size_t layer,
                       const ModelConfig& config);

/// One ST-GC block: normalized adjacency, spatial conv, temporal inception,
/// dropout (train mode only).
Var stgc_block(Tape& tape, const BoundParams& p, Var x, Var adjacency, std::size_t layer,
               const ModelConfig& config, RunMode mode, ForwardNoise* noise);

/// Converts a [B, 1, N, T] window batch to the internal [B, T, N, 1] layout.
Tensor to_internal_layout(const Tensor& batch);

struct ForwardResult {
  Var logits;
  Var adjacency;
};

/// Full network on a [B, 1, N, T] batch. One structure sample is shared by
/// every block and every window of the batch.
ForwardResult forward(Tape& tape, const BoundParams& p, const ModelConfig& config,
                      const Tensor& batch, const ForwardOptions& options, ForwardNoise* noise);

struct LossTerms {
  Var total;
  Var bce;
  Var sparsity;
};

/// BCE + lambda * sparsity_loss(theta).
LossTerms loss(Tape& tape, Var logits, const std::vector<double>& labels, Var theta,
               double lambda);

/// Eval-style logits for a batch without gradient bookkeeping.
std::vector<double> predict_logits(const StgcModel& model, const Tensor& batch,
                                   GraphMode graph = GraphMode::Threshold,
                                   ForwardNoise* noise = nullptr,
                                   Precision precision = Precision::Double);

// ---------------------------------------------------------------------------
// checkpoints

inline constexpr int kCheckpointVersion = 1;

/// Writes the model as: 8-byte magic, u64 little-endian header length, JSON
/// header, then each tensor as little-endian float64 in header order.
void save_checkpoint(const StgcModel& model, const std::filesystem::path& path);
StgcModel load_checkpoint(const std::filesystem::path& path);

}  // namespace stgsl
