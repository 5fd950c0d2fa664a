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
#include <string>
#include <vector>

#include "stgsl/stgc_net.hpp"

namespace stgsl {

/// Which structure stands in for the sampled adjacency during analysis.
enum class Structure {
  Threshold,  // edge iff keep probability > 0.5
  Expected,   // keep probabilities as edge weights
};

std::string structure_name(Structure s);
Structure parse_structure(const std::string& name);

struct SalienceOptions {
  Structure structure = Structure::Threshold;
  bool sum_rows = false;  // default sums each column (incoming edges)
};

struct RankedRoi {
  std::size_t index = 0;  // 0-based
  double score = 0.0;
};

struct SalienceReport {
  std::vector<double> scores;          // in [0, 1]
  std::vector<RankedRoi> ranking;      // descending score, ties by index
  std::vector<Matrix> layer_matrices;  // per layer, min-max scaled
};

/// Min-max scaling over all entries; a constant input maps to zeros.
Matrix min_max(const Matrix& m);
std::vector<double> min_max(const std::vector<double>& v);

std::vector<RankedRoi> rank_scores(const std::vector<double>& scores);

/// Salience from an explicit structure and per-layer post-ReLU weights.
SalienceReport salience_from(const Matrix& structure, const std::vector<Matrix>& layer_weights,
                             bool sum_rows = false);

Matrix analysis_structure(const StgcModel& model, Structure structure);

SalienceReport salience_scores(const StgcModel& model, const SalienceOptions& options = {});

/// Averages the score vectors of several reports (e.g. one per fold). The
/// per-layer matrices are averaged too; the result is not re-normalized.
SalienceReport average_reports(const std::vector<SalienceReport>& reports);

struct RoiRow {
  std::size_t rank = 0;   // 1-based
  std::size_t index = 0;  // 1-based ROI index
  std::string name;
  double score = 0.0;
};

std::vector<RoiRow> top_fraction(const SalienceReport& report, double fraction,
                                 const std::vector<std::string>& roi_names);

/// Abbreviated AAL-116 labels, index 0 holding ROI 1.
const std::vector<std::string>& aal116_names();

/// AAL names when n == 116, otherwise "ROI1" .. "ROIn".
std::vector<std::string> default_roi_names(std::size_t n);

std::string salience_json(const SalienceReport& report, const std::vector<std::string>& roi_names,
                          const SalienceOptions& options);
std::string salience_csv(const SalienceReport& report, const std::vector<std::string>& roi_names,
                         double fraction = 1.0);
std::string matrix_csv(const Matrix& m);
std::string adjacency_json(const StgcModel& model);

}  // namespace stgsl
