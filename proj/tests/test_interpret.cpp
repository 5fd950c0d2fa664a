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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "stgsl/interpret.hpp"

using namespace stgsl;

namespace {

// Salience by explicit loops: per-layer min-max of A o ReLU(M), summed over
// layers, column sums, then a final min-max.
std::vector<double> salience_oracle(const Matrix& a, const std::vector<Matrix>& ms) {
  const auto n = static_cast<std::size_t>(a.rows());
  std::vector<double> total(n * n, 0.0);
  for (const Matrix& m : ms) {
    std::vector<double> e(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        e[i * n + j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                       std::max(0.0, m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    const double lo = *std::min_element(e.begin(), e.end());
    const double hi = *std::max_element(e.begin(), e.end());
    for (std::size_t k = 0; k < n * n; ++k) total[k] += hi > lo ? (e[k] - lo) / (hi - lo) : 0.0;
  }
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[j] += total[i * n + j];
  const double lo = *std::min_element(s.begin(), s.end());
  const double hi = *std::max_element(s.begin(), s.end());
  for (double& v : s) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return s;
}

}  // namespace

TEST_CASE("salience matches the loop oracle") {
  Engine rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = oracle::random_binary_symmetric(5, 0.6, rng);
    std::vector<Matrix> ms{oracle::random_matrix(5, 5, rng), oracle::random_matrix(5, 5, rng)};
    SalienceReport r = salience_from(a, {ms[0].cwiseMax(0.0), ms[1].cwiseMax(0.0)});
    auto want = salience_oracle(a, ms);
    for (std::size_t i = 0; i < 5; ++i) CHECK(r.scores[i] == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK(r.layer_matrices.size() == 2);
  }
}

TEST_CASE("salience degenerate and dominant cases") {
  SalienceReport flat = salience_from(Matrix::Ones(4, 4), {Matrix::Ones(4, 4)});
  for (double v : flat.scores) CHECK(v == 0.0);

  Matrix hub = Matrix::Zero(5, 5);
  for (int j = 0; j < 5; ++j) hub(2, j) = hub(j, 2) = 1.0;
  Matrix m = Matrix::Ones(5, 5);
  m.row(2).setConstant(3.0);
  SalienceReport r = salience_from(hub, {m});
  CHECK(r.scores[2] == 1.0);
  CHECK(r.ranking.front().index == 2);
}

TEST_CASE("salience properties: range, scale invariance, equivariance") {
  Engine rng(2);
  Matrix a = oracle::random_binary_symmetric(8, 0.5, rng);
  std::vector<Matrix> ms{oracle::random_matrix(8, 8, rng).cwiseMax(0.0),
                         oracle::random_matrix(8, 8, rng).cwiseMax(0.0)};
  SalienceReport r = salience_from(a, ms);
  CHECK(*std::max_element(r.scores.begin(), r.scores.end()) == 1.0);
  CHECK(*std::min_element(r.scores.begin(), r.scores.end()) == 0.0);
  for (std::size_t k = 1; k < r.ranking.size(); ++k) {
    CHECK(r.ranking[k - 1].score >= r.ranking[k].score);
    if (r.ranking[k - 1].score == r.ranking[k].score) CHECK(r.ranking[k - 1].index < r.ranking[k].index);
  }

  SalienceReport scaled = salience_from(a, {ms[0] * 7.5, ms[1] * 7.5});
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(scaled.ranking[k].index == r.ranking[k].index);
    CHECK(scaled.scores[k] == doctest::Approx(r.scores[k]).epsilon(1e-12));
  }

  const std::vector<std::size_t> perm{4, 7, 0, 2, 6, 1, 3, 5};
  auto permute = [&](const Matrix& m) {
    Matrix out(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            m(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]));
    return out;
  };
  SalienceReport p = salience_from(permute(a), {permute(ms[0]), permute(ms[1])});
  for (std::size_t i = 0; i < 8; ++i) CHECK(p.scores[i] == doctest::Approx(r.scores[perm[i]]).epsilon(1e-12));

  SalienceReport rows = salience_from(a, ms, true);
  SalienceReport cols_of_t = salience_from(a, {ms[0].transpose(), ms[1].transpose()});
  for (std::size_t i = 0; i < 8; ++i) CHECK(rows.scores[i] == doctest::Approx(cols_of_t.scores[i]).epsilon(1e-12));
}

TEST_CASE("min_max and ranking helpers") {
  CHECK(min_max(std::vector<double>{2.0, 4.0, 3.0}) == std::vector<double>{0.0, 1.0, 0.5});
  CHECK(min_max(std::vector<double>{1.0, 1.0}) == std::vector<double>{0.0, 0.0});
  auto ranked = rank_scores({0.5, 1.0, 0.5, 0.0});
  CHECK(ranked[0].index == 1);
  CHECK(ranked[1].index == 0);
  CHECK(ranked[2].index == 2);
  CHECK(ranked[3].index == 3);
}

TEST_CASE("AAL names and top fraction") {
  const auto& names = aal116_names();
  REQUIRE(names.size() == 116);
  CHECK(names[0] == "PreCG.L");
  CHECK(names[66] == "PCUN.L");
  CHECK(names[115] == "Vermis.10");
  CHECK(default_roi_names(116) == names);
  CHECK(default_roi_names(3) == std::vector<std::string>{"ROI1", "ROI2", "ROI3"});

  Engine rng(3);
  Matrix a = oracle::random_binary_symmetric(116, 0.3, rng);
  SalienceReport r = salience_from(a, {oracle::random_matrix(116, 116, rng).cwiseMax(0.0)});
  auto rows = top_fraction(r, 0.10, names);
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].score == 1.0);
  CHECK(rows[0].rank == 1);
  CHECK(rows[0].index == r.ranking[0].index + 1);
  CHECK(rows[0].name == names[r.ranking[0].index]);
  CHECK(top_fraction(r, 1.0, names).size() == 116);
  CHECK(top_fraction(r, 0.05, names).size() == 6);
  CHECK_THROWS(top_fraction(r, 0.1, default_roi_names(5)));
  CHECK_THROWS(top_fraction(r, 0.0, names));
}

TEST_CASE("report writers") {
  SalienceReport r = salience_from(Matrix::Ones(3, 3), {(Matrix(3, 3) << 1, 2, 3, 4, 5, 6, 7, 8, 9).finished()});
  const auto names = default_roi_names(3);
  const std::string csv = salience_csv(r, names);
  CHECK(csv.rfind("rank,name,index,score\n1,ROI3,3,1.000\n", 0) == 0);
  auto j = nlohmann::json::parse(salience_json(r, names, SalienceOptions{}));
  CHECK(j["structure"] == "threshold");
  CHECK(j["scores"].size() == 3);
  CHECK(j["ranking"][0]["name"] == "ROI3");
  CHECK(matrix_csv(Matrix::Identity(2, 2)) == "1,0\n0,1\n");
}

TEST_CASE("model-level salience uses the thresholded structure") {
  ModelConfig c;
  c.n_nodes = 6;
  c.channels = 8;
  Engine rng(4);
  StgcModel m = StgcModel::init(c, rng);
  for (double& v : m.params.at(pname::kTheta).data) v = 3.0 * standard_normal(rng);
  for (std::size_t l = 0; l < 3; ++l)
    for (double& v : m.params.at(pname::layer_weight(l)).data) v = standard_normal(rng);

  const Matrix p = m.keep_probability();
  Matrix th = analysis_structure(m, Structure::Threshold);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(th.data()[i] == (p.data()[i] > 0.5 ? 1.0 : 0.0));
  CHECK(analysis_structure(m, Structure::Expected) == p);

  std::vector<Matrix> ms;
  for (std::size_t l = 0; l < 3; ++l) ms.push_back(m.params.at(pname::layer_weight(l)).to_matrix());
  SalienceReport r = salience_scores(m);
  auto want = salience_oracle(th, ms);
  for (std::size_t i = 0; i < 6; ++i) CHECK(r.scores[i] == doctest::Approx(want[i]).epsilon(1e-12));

  SalienceReport avg = average_reports({r, salience_scores(m, {Structure::Expected, false})});
  SalienceReport e = salience_scores(m, {Structure::Expected, false});
  for (std::size_t i = 0; i < 6; ++i) CHECK(avg.scores[i] == doctest::Approx(0.5 * (r.scores[i] + e.scores[i])));

  auto adj = nlohmann::json::parse(adjacency_json(m));
  CHECK(adj["N"] == 6);
  CHECK(adj["L"] == 3);
  CHECK(adj["keep_probability"].size() == 6);
  CHECK(adj["keep_probability"][0].size() == 6);
  CHECK(adj["layer_weights"].size() == 3);
}
