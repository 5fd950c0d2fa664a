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

#include <cmath>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "stats.hpp"
#include "stgsl/autodiff.hpp"
#include "stgsl/graph_learn.hpp"

using namespace stgsl;

namespace {

Matrix filled(std::size_t n, double p) {
  return Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), p);
}

std::size_t count_lower(const Matrix& m) {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) c += m(i, j) > 0.5 ? 1 : 0;
  return c;
}

}  // namespace

TEST_CASE("theta_index formula and range") {
  CHECK(theta_index(1, 1, 3) == 1);
  CHECK(theta_index(2, 1, 3) == 2);
  CHECK(theta_index(2, 2, 3) == 3);
  CHECK(theta_index(116, 116, 116) == 6786);
  CHECK(theta_length(116) == 6786);
  CHECK(nodes_from_theta_length(6786) == 116);
  CHECK_THROWS_AS(nodes_from_theta_length(5), std::invalid_argument);
  CHECK_THROWS_AS(theta_index(1, 2, 3), std::out_of_range);
  CHECK_THROWS_AS(theta_index(4, 1, 3), std::out_of_range);
  CHECK_THROWS_AS(theta_index(1, 0, 3), std::out_of_range);
}

TEST_CASE("theta_index is a bijection onto 1..N(N+1)/2") {
  for (std::size_t n : {1u, 2u, 7u, 20u}) {
    std::set<std::size_t> seen;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 1; j <= i; ++j) seen.insert(theta_index(i, j, n));
    CHECK(seen.size() == theta_length(n));
    CHECK(*seen.begin() == 1);
    CHECK(*seen.rbegin() == theta_length(n));
  }
}

TEST_CASE("expand_symmetric layout and mirrored gradient") {
  const std::vector<double> theta{1.5, -2.0, 3.25};
  Matrix a = expand_symmetric(theta);
  CHECK(a(0, 0) == 1.5);
  CHECK(a(0, 1) == -2.0);
  CHECK(a(1, 0) == -2.0);
  CHECK(a(1, 1) == 3.25);
  CHECK_THROWS(expand_symmetric(std::vector<double>{1.0, 2.0}));

  Tape tape;
  Var t = tape.parameter("theta", Tensor({3}, theta));
  Var total = ops::sum(tape, ops::expand_symmetric(tape, t));
  const GradStore grads = tape.backward(total);
  CHECK(grads.at("theta").to_vector() == std::vector<double>{1.0, 2.0, 1.0});

  Engine rng(3);
  std::vector<double> r(theta_length(5));
  for (double& v : r) v = standard_normal(rng);
  Matrix m = expand_symmetric(r);
  CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sparsify values") {
  Matrix a(1, 3);
  a << 0.0, 4.0, -3.0;
  Matrix s = sparsify(a, 0.0);
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == doctest::Approx(0.48201379003790845).epsilon(1e-14));
  CHECK(s(0, 2) == 0.0);
  CHECK(sparsify(a, 1e3).cwiseAbs().maxCoeff() == 0.0);

  Engine rng(11);
  Matrix big = oracle::random_matrix(6, 6, rng) * 50.0;
  for (double alpha : {-30.0, -1.0, 0.0, 2.0}) {
    Matrix p = sparsify(big, alpha);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() < 1.0);
  }
  // Below sigmoid(alpha) ~ 2^-53 the gap to 1 is not representable.
  CHECK(sparsify(big, -40.0).maxCoeff() <= 1.0);
}

TEST_CASE("sparsity_loss values") {
  CHECK(sparsity_loss(std::vector<double>(6, 0.0)) == 0.5);
  CHECK(sparsity_loss(std::vector<double>(6, -50.0)) < 1e-20);
  CHECK(sparsity_loss(std::vector<double>{1.0, -1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gumbel train-mode keep frequency is exact") {
  // 10 unordered pairs per 4-node sample, 10^4 samples.
  constexpr std::size_t kDraws = 10000;
  for (double p : {0.1, 0.5, 0.9}) {
    Engine rng(1234);
    std::size_t kept = 0;
    for (std::size_t d = 0; d < kDraws; ++d)
      kept += count_lower(gumbel_binarize(filled(4, p), 0.2, rng, SampleMode::Train).hard);
    const std::size_t n = kDraws * theta_length(4);
    const double pval = stats::binomial_two_sided_p(kept, n, p);
    INFO("p = " << p << " kept " << kept << " of " << n << ", p-value " << pval);
    CHECK(pval > 0.001);
  }
}

TEST_CASE("gumbel vanishing probability is clamped, not an error") {
  Engine rng(5);
  std::size_t kept = 0;
  for (int d = 0; d < 10000; ++d)
    kept += count_lower(gumbel_binarize(filled(1, 0.0), 0.2, rng, SampleMode::Train).hard);
  CHECK(static_cast<double>(kept) / 10000.0 <= 1e-4);
}

TEST_CASE("gumbel hard sample ignores temperature, soft values do not") {
  Engine base(77);
  Matrix p = sparsify(oracle::random_matrix(7, 7, base), -0.5);
  p = (p + p.transpose()).eval() * 0.5;
  std::vector<BinaryAdjacency> samples;
  for (double tau : {0.2, 1.0, 5.0}) {
    Engine rng(99);
    samples.push_back(gumbel_binarize(p, tau, rng, SampleMode::Train));
  }
  CHECK(samples[0].hard == samples[1].hard);
  CHECK(samples[0].hard == samples[2].hard);
  CHECK(samples[0].soft != samples[2].soft);
  CHECK(samples[0].hard == samples[0].hard.transpose());

  Engine rng(1);
  CHECK_THROWS_AS(gumbel_binarize(p, 0.0, rng, SampleMode::Train), std::invalid_argument);
}

TEST_CASE("gumbel eval mode thresholds at one half deterministically") {
  Matrix p(2, 2);
  p << 0.7, 0.4, 0.4, 0.51;
  Engine r1(1), r2(2);
  auto a = gumbel_binarize(p, 0.2, r1, SampleMode::Eval);
  auto b = gumbel_binarize(p, 0.2, r2, SampleMode::Eval);
  CHECK(a.hard == b.hard);
  CHECK(a.hard(0, 0) == 1.0);
  CHECK(a.hard(0, 1) == 0.0);
  CHECK(a.hard(1, 1) == 1.0);
}

TEST_CASE("straight-through op: forward is the sample, backward is the softmax slope") {
  Matrix p(2, 2);
  p << 0.3, 0.6, 0.6, 0.8;
  Engine rng(4);
  const double tau = 0.7;
  BinaryAdjacency s = gumbel_binarize(p, tau, rng, SampleMode::Train);

  Tape tape;
  Var pv = tape.parameter("p", Tensor::from_matrix(p));
  Var out = ops::gumbel_straight_through(tape, pv, s);
  CHECK(tape.value(out).to_matrix() == s.hard);

  Matrix w(2, 2);
  w << 1.0, 2.0, 3.0, 4.0;
  Var loss = ops::sum(tape, ops::mul(tape, out, tape.constant(Tensor::from_matrix(w))));
  const GradStore grads = tape.backward(loss);
  const Tensor& g = grads.at("p");

  // d soft / d p for one pair, from the two-way softmax.
  auto slope = [&](double prob, std::size_t k) {
    const double keep = (std::log(prob) + s.gumbel_keep[k]) / tau;
    const double drop = (std::log1p(-prob) + s.gumbel_drop[k]) / tau;
    const double soft = 1.0 / (1.0 + std::exp(drop - keep));
    return soft * (1.0 - soft) / tau * (1.0 / prob + 1.0 / (1.0 - prob));
  };
  // Packed order: (0,0), (1,0), (1,1). Each mirrored entry receives the
  // loss weight of both positions.
  const double d00 = slope(0.3, 0) * w(0, 0);
  const double d10 = slope(0.6, 1) * (w(1, 0) + w(0, 1));
  const double d11 = slope(0.8, 2) * w(1, 1);
  CHECK(g[0] == doctest::Approx(d00).epsilon(1e-12));
  CHECK(g[1] + g[2] == doctest::Approx(d10).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(d11).epsilon(1e-12));

  Tape off;
  Var pv2 = off.parameter("p", Tensor::from_matrix(p));
  Var out2 = ops::gumbel_straight_through(off, pv2, s, /*straight_through=*/false);
  Var loss2 = ops::sum(off, out2);
  const GradStore grads2 = off.backward(loss2);
  for (double v : grads2.at("p").data) CHECK(v == 0.0);
}

TEST_CASE("sparsify and sparsity_loss gradients match central differences") {
  Engine rng(21);
  const std::size_t n = 5;
  ParamSet params;
  Tensor& th = params.add("theta", Tensor({theta_length(n)}));
  for (double& v : th.data) v = 1.5 * standard_normal(rng);
  params.add("alpha", Tensor::scalar(-0.3));
  const Matrix w = oracle::random_matrix(n, n, rng);

  auto build = [&](Tape& tape, const ParamSet& ps) {
    Var t = tape.parameter("theta", ps.at("theta"));
    Var al = tape.parameter("alpha", ps.at("alpha"));
    Var a = ops::sparsify(tape, ops::expand_symmetric(tape, t), al);
    Var fit = ops::sum(tape, ops::mul(tape, a, tape.constant(Tensor::from_matrix(w))));
    return ops::add(tape, fit, ops::scale(tape, ops::sparsity_loss(tape, t), 3.0));
  };
  Tape tape;
  const GradStore grads = tape.backward(build(tape, params));
  auto loss_fn = [&](const ParamSet& ps) {
    Tape t;
    return t.value(build(t, ps)).item();
  };
  FdOptions fd;
  for (const char* name : {"theta", "alpha"}) {
    FdReport r = finite_diff_check(params, name, loss_fn, grads, fd);
    INFO(name << " worst " << r.max_rel_error);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error <= 1e-5);
  }
}

TEST_CASE("GraphParams::init") {
  Engine rng(8);
  GraphParams g = GraphParams::init(30, 3, rng, 0.5);
  CHECK(g.theta.size() == theta_length(30));
  CHECK(g.alpha == 0.0);
  REQUIRE(g.layer_weights.size() == 3);
  for (const auto& m : g.layer_weights) CHECK(m == Matrix::Ones(30, 30));
  double mean = 0.0, sq = 0.0;
  for (double v : g.theta) mean += v;
  mean /= static_cast<double>(g.theta.size());
  for (double v : g.theta) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(g.theta.size()));
  CHECK(std::abs(mean) < 0.1);
  CHECK(sd == doctest::Approx(0.5).epsilon(0.1));
  CHECK_NOTHROW(g.validate());
}
