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
#include "stgsl/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stgsl/graph_learn.hpp"
#include "stgsl/io.hpp"

namespace stgsl {

// Generated from data/aal116.csv at configure time.
extern const char* const kAal116Names[116];

std::string structure_name(Structure s) {
  return s == Structure::Threshold ? "threshold" : "expected";
}

Structure parse_structure(const std::string& name) {
  if (name == "threshold") return Structure::Threshold;
  if (name == "expected") return Structure::Expected;
  throw std::invalid_argument("unknown structure '" + name + "' (expected threshold|expected)");
}

Matrix min_max(const Matrix& m) {
  if (m.size() == 0) return m;
  const double lo = m.minCoeff();
  const double hi = m.maxCoeff();
  if (!(hi > lo)) return Matrix::Zero(m.rows(), m.cols());
  return (m.array() - lo) / (hi - lo);
}

std::vector<double> min_max(const std::vector<double>& v) {
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (!(*hi > *lo)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

std::vector<RankedRoi> rank_scores(const std::vector<double>& scores) {
  std::vector<RankedRoi> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({i, scores[i]});
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedRoi& a, const RankedRoi& b) { return a.score > b.score; });
  return out;
}

SalienceReport salience_from(const Matrix& structure, const std::vector<Matrix>& layer_weights,
                             bool sum_rows) {
  if (structure.rows() != structure.cols())
    throw std::invalid_argument("salience_from: structure must be square");
  const Eigen::Index n = structure.rows();
  SalienceReport report;
  Matrix total = Matrix::Zero(n, n);
  for (const Matrix& m : layer_weights) {
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("salience_from: layer weight shape mismatch");
    Matrix scaled = min_max(structure.cwiseProduct(m.cwiseMax(0.0)));
    total += scaled;
    report.layer_matrices.push_back(std::move(scaled));
  }
  const Eigen::VectorXd raw = sum_rows ? Eigen::VectorXd(total.rowwise().sum())
                                       : Eigen::VectorXd(total.colwise().sum().transpose());
  report.scores = min_max(std::vector<double>(raw.data(), raw.data() + raw.size()));
  report.ranking = rank_scores(report.scores);
  return report;
}

Matrix analysis_structure(const StgcModel& model, Structure structure) {
  const Matrix prob = model.keep_probability();
  if (structure == Structure::Expected) return prob;
  Engine unused(0);
  return gumbel_binarize(prob, model.config.tau, unused, SampleMode::Eval).hard;
}

SalienceReport salience_scores(const StgcModel& model, const SalienceOptions& options) {
  std::vector<Matrix> weights;
  for (std::size_t l = 0; l < model.config.n_layers; ++l)
    weights.push_back(model.params.at(pname::layer_weight(l)).to_matrix());
  return salience_from(analysis_structure(model, options.structure), weights, options.sum_rows);
}

SalienceReport average_reports(const std::vector<SalienceReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: nothing to average");
  SalienceReport out = reports.front();
  for (std::size_t r = 1; r < reports.size(); ++r) {
    const SalienceReport& x = reports[r];
    if (x.scores.size() != out.scores.size() || x.layer_matrices.size() != out.layer_matrices.size())
      throw std::invalid_argument("average_reports: reports differ in shape");
    for (std::size_t i = 0; i < out.scores.size(); ++i) out.scores[i] += x.scores[i];
    for (std::size_t l = 0; l < out.layer_matrices.size(); ++l) out.layer_matrices[l] += x.layer_matrices[l];
  }
  const double k = static_cast<double>(reports.size());
  for (double& s : out.scores) s /= k;
  for (Matrix& m : out.layer_matrices) m /= k;
  out.ranking = rank_scores(out.scores);
  return out;
}

std::vector<RoiRow> top_fraction(const SalienceReport& report, double fraction,
                                 const std::vector<std::string>& roi_names) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("top_fraction: fraction must be in (0, 1]");
  const std::size_t n = report.scores.size();
  if (roi_names.size() != n)
    throw std::invalid_argument("top_fraction: " + std::to_string(roi_names.size()) +
                                " names for " + std::to_string(n) + " ROIs");
  // The small offset keeps e.g. 0.1 * 116 = 11.600000000000001 from rounding up twice.
  const auto count = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::vector<RoiRow> rows;
  for (std::size_t r = 0; r < count; ++r) {
    const RankedRoi& roi = report.ranking[r];
    rows.push_back({r + 1, roi.index + 1, roi_names[roi.index], roi.score});
  }
  return rows;
}

const std::vector<std::string>& aal116_names() {
  static const std::vector<std::string> names(std::begin(kAal116Names), std::end(kAal116Names));
  return names;
}

std::vector<std::string> default_roi_names(std::size_t n) {
  if (n == 116) return aal116_names();
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= n; ++i) names.push_back("ROI" + std::to_string(i));
  return names;
}

std::string salience_json(const SalienceReport& report, const std::vector<std::string>& roi_names,
                          const SalienceOptions& options) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["structure"] = structure_name(options.structure);
  j["sum_over"] = options.sum_rows ? "rows" : "columns";
  j["scores"] = report.scores;
  ordered_json ranking = ordered_json::array();
  for (const RoiRow& row : top_fraction(report, 1.0, roi_names))
    ranking.push_back({{"rank", row.rank}, {"index", row.index}, {"name", row.name}, {"score", row.score}});
  j["ranking"] = std::move(ranking);
  return j.dump(2) + "\n";
}

std::string salience_csv(const SalienceReport& report, const std::vector<std::string>& roi_names,
                         double fraction) {
  std::ostringstream out;
  out << "rank,name,index,score\n";
  char score[32];
  for (const RoiRow& row : top_fraction(report, fraction, roi_names)) {
    std::snprintf(score, sizeof(score), "%.3f", row.score);
    out << row.rank << ',' << row.name << ',' << row.index << ',' << score << '\n';
  }
  return out.str();
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  return out.str();
}

std::string adjacency_json(const StgcModel& model) {
  using nlohmann::ordered_json;
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      out[static_cast<std::size_t>(i)].assign(m.row(i).data(), m.row(i).data() + m.cols());
    return out;
  };
  ordered_json j;
  j["N"] = model.config.n_nodes;
  j["L"] = model.config.n_layers;
  j["keep_probability"] = rows(model.keep_probability());
  j["threshold_structure"] = rows(analysis_structure(model, Structure::Threshold));
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < model.config.n_layers; ++l)
    layers.push_back(rows(model.params.at(pname::layer_weight(l)).to_matrix().cwiseMax(0.0)));
  j["layer_weights"] = std::move(layers);
  return j.dump() + "\n";
}

}  // namespace stgsl
