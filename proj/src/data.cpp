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

#include "stgsl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "stgsl/io.hpp"

namespace stgsl {

using Eigen::Index;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t row,
                    std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty() || !std::isfinite(v))
    throw IoError(path.string() + ":" + std::to_string(row + 1) + ": column " +
                  std::to_string(col + 1) + " is not a finite number: '" + cell + "'");
  return v;
}

}  // namespace

void zscore_rows(Matrix& values) {
  const double z = static_cast<double>(values.cols());
  if (values.cols() == 0) return;
  for (Index i = 0; i < values.rows(); ++i) {
    auto row = values.row(i);
    const double mean = row.sum() / z;
    row.array() -= mean;
    const double var = row.squaredNorm() / z;
    if (var > 0.0) row /= std::sqrt(var);
  }
}

void preprocess(BoldSeries& series, std::size_t timepoints) {
  if (series.n_timepoints() < timepoints)
    throw IoError("subject '" + series.subject_id + "' has " +
                  std::to_string(series.n_timepoints()) + " time points, need " +
                  std::to_string(timepoints));
  Matrix truncated = series.values.leftCols(static_cast<Index>(timepoints));
  series.values = std::move(truncated);
  zscore_rows(series.values);
}

Matrix read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open series file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      ++lineno;
      continue;
    }
    const auto cells = split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row.push_back(parse_double(cells[c], path, lineno, c));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path.string() + ":" + std::to_string(lineno + 1) + ": expected " +
                    std::to_string(rows.front().size()) + " columns, found " +
                    std::to_string(row.size()));
    rows.push_back(std::move(row));
    ++lineno;
  }
  if (rows.empty()) throw IoError(path.string() + ": empty series file");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

void write_series_csv(const std::filesystem::path& path, const Matrix& values) {
  std::string out;
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out.push_back(',');
      out += format_double(values(i, j));
    }
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<BoldSeries> load_dataset(const std::filesystem::path& manifest,
                                     const LoadOptions& options) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(manifest.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"subject_id", "label", "path"})
    throw IoError(manifest.string() + ": header must be 'subject_id,label,path'");

  const std::filesystem::path base = manifest.parent_path();
  std::vector<BoldSeries> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3)
      throw IoError(manifest.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
    BoldSeries s;
    s.subject_id = cells[0];
    if (cells[1] != "0" && cells[1] != "1")
      throw IoError(manifest.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    s.label = cells[1] == "1" ? 1 : 0;
    std::filesystem::path p = cells[2];
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p)) throw IoError("missing series file " + p.string());
    s.values = read_series_csv(p);
    if (!out.empty() && s.n_rois() != out.front().n_rois())
      throw IoError(p.string() + ": " + std::to_string(s.n_rois()) + " ROIs, but subject '" +
                    out.front().subject_id + "' has " + std::to_string(out.front().n_rois()));
    if (s.n_rois() < 2) throw IoError(p.string() + ": need at least 2 ROIs");
    preprocess(s, options.timepoints);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError(manifest.string() + ": no subjects listed");
  return out;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    const std::vector<BoldSeries>& subjects) {
  std::string manifest = "subject_id,label,path\n";
  for (const BoldSeries& s : subjects) {
    const std::string rel = "series/" + s.subject_id + ".csv";
    write_series_csv(dir / rel, s.values);
    manifest += s.subject_id + "," + std::to_string(s.label) + "," + rel + "\n";
  }
  const auto path = dir / "manifest.csv";
  write_file_atomic(path, manifest);
  return path;
}

Window sample_window(const BoldSeries& series, std::size_t window, Engine& rng) {
  const std::size_t z = series.n_timepoints();
  if (window == 0 || z < window)
    throw std::invalid_argument("sample_window: series '" + series.subject_id + "' has " +
                                std::to_string(z) + " time points, window is " + std::to_string(window));
  const std::size_t start = static_cast<std::size_t>(uniform_index(rng, z - window + 1));
  return {start, series.values.middleCols(static_cast<Index>(start), static_cast<Index>(window))};
}

std::vector<Window> enumerate_windows(const BoldSeries& series, std::size_t window,
                                      std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("enumerate_windows: stride must be >= 1");
  const std::size_t z = series.n_timepoints();
  if (window == 0 || z < window)
    throw std::invalid_argument("enumerate_windows: series '" + series.subject_id +
                                "' is shorter than the window");
  std::vector<Window> out;
  for (std::size_t s = 0; s + window <= z; s += stride)
    out.push_back({s, series.values.middleCols(static_cast<Index>(s), static_cast<Index>(window))});
  return out;
}

WindowBatch make_batch(const std::vector<Matrix>& windows, const std::vector<double>& labels) {
  if (windows.empty() || windows.size() != labels.size())
    throw std::invalid_argument("make_batch: need one label per window");
  const auto n = static_cast<std::size_t>(windows.front().rows());
  const auto t = static_cast<std::size_t>(windows.front().cols());
  WindowBatch batch;
  batch.values = Tensor({windows.size(), 1, n, t});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    if (static_cast<std::size_t>(windows[b].rows()) != n || static_cast<std::size_t>(windows[b].cols()) != t)
      throw std::invalid_argument("make_batch: windows differ in shape");
    std::copy(windows[b].data(), windows[b].data() + n * t, batch.values.data.begin() + static_cast<std::ptrdiff_t>(b * n * t));
  }
  batch.labels = labels;
  return batch;
}

// ---------------------------------------------------------------------------
// synthetic data

void SynthSpec::validate() const {
  if (n_rois < 2) throw std::invalid_argument("SynthSpec: need at least 2 ROIs");
  if (n_timepoints < 1) throw std::invalid_argument("SynthSpec: need at least 1 time point");
  if (n_subjects_per_class < 1) throw std::invalid_argument("SynthSpec: need subjects in each class");
  if (!(edge_density > 0.0 && edge_density < 1.0))
    throw std::invalid_argument("SynthSpec: edge density must be in (0, 1)");
  if (!(coupling > 0.0 && coupling < 1.0))
    throw std::invalid_argument("SynthSpec: coupling must be in (0, 1)");
  if (noise_std < 0.0) throw std::invalid_argument("SynthSpec: noise std must be >= 0");
  if (k_diff > n_rois * (n_rois - 1) / 2)
    throw std::invalid_argument("SynthSpec: k_diff exceeds the number of node pairs");
}

Matrix degree_normalize(const Matrix& adjacency) {
  const Eigen::VectorXd deg = adjacency.rowwise().sum();
  Eigen::VectorXd r(deg.size());
  for (Index i = 0; i < deg.size(); ++i) r(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  return r.asDiagonal() * adjacency * r.asDiagonal();
}

namespace {

double spectral_radius(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix simulate(const Matrix& propagation, const SynthSpec& spec, Engine& rng) {
  const auto n = static_cast<Index>(spec.n_rois);
  Matrix out(n, static_cast<Index>(spec.n_timepoints));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next(n);
  const std::size_t total = spec.burn_in + spec.n_timepoints;
  for (std::size_t t = 0; t < total; ++t) {
    if (t >= spec.burn_in) out.col(static_cast<Index>(t - spec.burn_in)) = x;
    next.noalias() = propagation * x;
    for (Index i = 0; i < n; ++i) next(i) += spec.noise_std * standard_normal(rng);
    x = next;
  }
  return out;
}

}  // namespace

SynthDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const SeedTree seeds(spec.seed);
  const auto n = static_cast<Index>(spec.n_rois);

  Engine graph_rng = seeds.stream("planted");
  SynthDataset data;
  data.planted_class0 = Matrix::Zero(n, n);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < spec.n_rois; ++i) {
    for (std::size_t j = i + 1; j < spec.n_rois; ++j) {
      pairs.emplace_back(i, j);
      if (uniform_open(graph_rng) < spec.edge_density) {
        data.planted_class0(static_cast<Index>(i), static_cast<Index>(j)) = 1.0;
        data.planted_class0(static_cast<Index>(j), static_cast<Index>(i)) = 1.0;
      }
    }
  }
  shuffle(pairs.begin(), pairs.end(), graph_rng);
  pairs.resize(spec.k_diff);
  std::sort(pairs.begin(), pairs.end());
  data.planted_class1 = data.planted_class0;
  for (const auto& [i, j] : pairs) {
    const double flipped = 1.0 - data.planted_class1(static_cast<Index>(i), static_cast<Index>(j));
    data.planted_class1(static_cast<Index>(i), static_cast<Index>(j)) = flipped;
    data.planted_class1(static_cast<Index>(j), static_cast<Index>(i)) = flipped;
  }
  data.discriminative_edges = pairs;

  const std::array<Matrix, 2> propagation = {spec.coupling * degree_normalize(data.planted_class0),
                                             spec.coupling * degree_normalize(data.planted_class1)};
  for (const Matrix& p : propagation) {
    const double radius = spectral_radius(p);
    if (!(radius < 1.0))
      throw std::invalid_argument("synth_generate: propagation matrix has spectral radius " +
                                  std::to_string(radius) + " >= 1");
  }

  std::size_t index = 0;
  for (int label = 0; label < 2; ++label) {
    for (std::size_t s = 0; s < spec.n_subjects_per_class; ++s, ++index) {
      Engine rng = seeds.stream("subject", index);
      BoldSeries series;
      char id[32];
      std::snprintf(id, sizeof(id), "sub-%04zu", index + 1);
      series.subject_id = id;
      series.label = label;
      series.values = simulate(propagation[static_cast<std::size_t>(label)], spec, rng);
      data.subjects.push_back(std::move(series));
    }
  }
  return data;
}

void write_planted_json(const std::filesystem::path& path, const SynthDataset& data) {
  using nlohmann::json;
  auto dense = [](const Matrix& m) {
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  json j;
  j["N"] = data.planted_class0.rows();
  j["class0_adjacency"] = dense(data.planted_class0);
  j["class1_adjacency"] = dense(data.planted_class1);
  json edges = json::array();
  for (const auto& [a, b] : data.discriminative_edges) edges.push_back({a, b});
  j["discriminative_edges"] = edges;
  write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// folds

Fold stratified_holdout(const std::vector<int>& labels, const std::vector<std::size_t>& pool,
                        double fraction, Engine& rng) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("stratified_holdout: fraction must be in [0, 1)");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i : pool) {
    if (i >= labels.size() || (labels[i] != 0 && labels[i] != 1))
      throw std::invalid_argument("stratified_holdout: bad index or label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  const std::size_t n = pool.size();
  const auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  // Largest-remainder allocation of the validation quota to the classes.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2 && n > 0; ++c) {
    const double exact = static_cast<double>(n_val) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  if (assigned < n_val) quota[remainder[1] > remainder[0] ? 1 : 0] += n_val - assigned;

  Fold out;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(quota[c], members.size());
    out.validation.insert(out.validation.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k,
                          double validation_fraction, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("stratified_kfold: validation fraction must be in [0, 1)");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("stratified_kfold: labels must be 0/1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[static_cast<std::size_t>(c)].size() < k)
      throw std::invalid_argument("stratified_kfold: class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                                  " members, fewer than k = " + std::to_string(k));
  }

  const SeedTree seeds(seed);
  Engine rng = seeds.stream("folds");
  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(k);
  for (auto& members : by_class) {
    shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) plan.folds[i % k].test.push_back(members[i]);
  }

  for (std::size_t f = 0; f < k; ++f) {
    Fold& fold = plan.folds[f];
    std::sort(fold.test.begin(), fold.test.end());
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!std::binary_search(fold.test.begin(), fold.test.end(), i)) pool.push_back(i);
    }
    Engine vrng = seeds.stream("validation", f);
    Fold split = stratified_holdout(labels, pool, validation_fraction, vrng);
    fold.train = std::move(split.train);
    fold.validation = std::move(split.validation);
  }
  return plan;
}

}  // namespace stgsl
