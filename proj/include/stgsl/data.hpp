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
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stgsl/rng.hpp"
#include "stgsl/tensor.hpp"

namespace stgsl {

/// One subject: ROI-by-time signal matrix with its label (0 = NC, 1 = EMCI).
struct BoldSeries {
  std::string subject_id;
  int label = 0;
  Matrix values;  // n_rois x n_timepoints

  std::size_t n_rois() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_timepoints() const { return static_cast<std::size_t>(values.cols()); }
};

/// Windows stacked as [batch, 1, n_rois, T] with one label per window.
struct WindowBatch {
  Tensor values;
  std::vector<double> labels;
};

/// Z-scores each row in place with the population (1/Z) standard deviation.
/// Rows with zero variance become all zeros.
void zscore_rows(Matrix& values);

/// Truncates to the first `timepoints` columns, then z-scores every row.
/// Throws if the series is shorter than `timepoints`.
void preprocess(BoldSeries& series, std::size_t timepoints);

/// Headerless CSV, one ROI per row.
Matrix read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const Matrix& values);

struct LoadOptions {
  std::size_t timepoints = 140;
};

/// Reads a manifest with header `subject_id,label,path` (paths relative to
/// the manifest's directory) and every series it references, then applies
/// `preprocess`. Throws IoError on missing files, bad cells, ROI-count
/// mismatch and series shorter than `options.timepoints`.
std::vector<BoldSeries> load_dataset(const std::filesystem::path& manifest,
                                     const LoadOptions& options = {});

/// Writes `series/<subject_id>.csv` for every subject plus `manifest.csv`
/// under `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    const std::vector<BoldSeries>& subjects);

struct Window {
  std::size_t start = 0;
  Matrix values;  // n_rois x T
};

/// Uniformly random contiguous window of length T.
Window sample_window(const BoldSeries& series, std::size_t window, Engine& rng);

/// Windows starting at 0, stride, 2 stride, ... while start + T <= Z.
std::vector<Window> enumerate_windows(const BoldSeries& series, std::size_t window,
                                      std::size_t stride);

WindowBatch make_batch(const std::vector<Matrix>& windows, const std::vector<double>& labels);

// ---------------------------------------------------------------------------
// synthetic data

struct SynthSpec {
  std::size_t n_rois = 16;
  std::size_t n_timepoints = 140;
  std::size_t n_subjects_per_class = 40;
  double edge_density = 0.2;   // planted adjacency density
  double coupling = 0.9;       // rho
  double noise_std = 0.1;      // sigma
  std::size_t k_diff = 8;      // class-discriminative edges
  std::size_t burn_in = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  std::vector<BoldSeries> subjects;  // raw (not z-scored) series
  Matrix planted_class0;             // symmetric 0/1, zero diagonal
  Matrix planted_class1;
  std::vector<std::pair<std::size_t, std::size_t>> discriminative_edges;  // (i, j), i < j, 0-based
};

/// D^-1/2 A D^-1/2 with isolated nodes left as zero rows/columns.
Matrix degree_normalize(const Matrix& adjacency);

/// Planted-graph linear autoregression x_{t+1} = rho * Ahat_class x_t + eps_t,
/// eps_t ~ Normal(0, sigma^2), x_0 = 0, with `burn_in` discarded steps.
/// Class 1's graph is class 0's with `k_diff` node pairs flipped.
SynthDataset synth_generate(const SynthSpec& spec);

/// planted.json: both class adjacencies (row-major) and the discriminative edges.
void write_planted_json(const std::filesystem::path& path, const SynthDataset& data);

// ---------------------------------------------------------------------------
// cross-validation splits

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct FoldPlan {
  std::size_t k = 0;
  std::vector<Fold> folds;
};

/// Moves `fraction` of `pool` (indices into `labels`) into a validation set,
/// stratified by class with largest-remainder rounding.
Fold stratified_holdout(const std::vector<int>& labels, const std::vector<std::size_t>& pool,
                        double fraction, Engine& rng);

/// Stratified k-fold split. Each class is shuffled and dealt round-robin
/// into the k test folds; `validation_fraction` of each training split is
/// carved out, stratified by class.
FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k,
                          double validation_fraction, std::uint64_t seed);

}  // namespace stgsl
