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
#include "stgsl/gradcheck.hpp"

#include <stdexcept>

#include "stgsl/rng.hpp"
#include "stgsl/stgc_net.hpp"

namespace stgsl {

namespace {

constexpr std::size_t kToyNodes = 6;
constexpr std::size_t kToyWindow = 6;
constexpr std::size_t kToyBatch = 2;
constexpr double kToyLambda = 1e-2;
constexpr int kMaxSampleAttempts = 200;

// Moves the toy model off the degenerate init (M = 1, alpha = 0, zero
// biases) so every ReLU and every edge sits away from a kink.
void perturb_toy(StgcModel& model, Engine& rng) {
  for (auto& [name, t] : model.params.items()) {
    if (name.starts_with("M.")) {
      for (double& v : t.data) v = 0.5 + uniform_open(rng);
    } else if (name.starts_with("incep.") && t.rank() == 1) {
      for (double& v : t.data) v = 0.1 * standard_normal(rng);
    }
  }
  model.params.at(pname::kAlpha)[0] = -3.0;
  Tensor& theta = model.params.at(pname::kTheta);
  for (double& v : theta.data) v = standard_normal(rng);
  for (std::size_t i = 0; i < kToyNodes; ++i) theta[i * (i + 1) / 2 + i] = 3.0;
}

// Every node needs a neighbour other than itself: a self-loop-only node
// sits on max-pool ties and an epsilon-sized degree.
bool well_connected(const Matrix& hard) {
  for (Eigen::Index i = 0; i < hard.rows(); ++i)
    if (hard.row(i).sum() - hard(i, i) < 1.0) return false;
  return true;
}

}  // namespace

double gradcheck_tolerance(Precision precision) {
  return precision == Precision::Single ? 1e-2 : 1e-4;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  SeedTree seeds(options.seed);
  ModelConfig config;
  config.n_nodes = kToyNodes;
  config.window = kToyWindow;
  config.channels = 8;
  config.n_layers = 3;
  config.lambda = kToyLambda;

  Engine init_rng = seeds.stream("init");
  StgcModel model = StgcModel::init(config, init_rng);
  perturb_toy(model, init_rng);

  Engine data_rng = seeds.stream("data");
  Tensor batch({kToyBatch, 1, kToyNodes, kToyWindow});
  for (double& v : batch.data) v = standard_normal(data_rng);
  const std::vector<double> labels{1.0, 0.0};

  auto run = [&](const ParamSet& ps, ForwardNoise* noise, Precision precision, GradStore* grads) {
    Tape tape(precision);
    const BoundParams p = bind_parameters(tape, ps, true);
    ForwardOptions fo;
    fo.straight_through = options.straight_through;
    // The sample's anchors were computed in double; a single-precision pass
    // would otherwise see phantom edges of size ~1e-9.
    fo.surrogate_offset = precision == Precision::Double;
    const ForwardResult fr = forward(tape, p, config, batch, fo, noise);
    const LossTerms lt = loss(tape, fr.logits, labels, p.at(pname::kTheta), config.lambda);
    if (grads != nullptr) *grads = tape.backward(lt.total);
    return tape.value(lt.total).item();
  };

  GradcheckResult result;
  result.tolerance = gradcheck_tolerance(options.precision);

  ForwardNoise recorder(seeds.stream("gumbel"), seeds.stream("dropout"), true);
  bool found = false;
  for (int attempt = 0; attempt < kMaxSampleAttempts && !found; ++attempt) {
    run(model.params, &recorder, Precision::Double, nullptr);
    ++result.sample_attempts;
    found = well_connected(recorder.record().graph->hard);
  }
  if (!found) throw std::runtime_error("gradcheck: no well-connected structure sample found");

  ForwardNoise frozen = ForwardNoise::frozen(recorder.record());
  GradStore analytic;
  run(model.params, &frozen, options.precision, &analytic);

  FdOptions fd;
  fd.max_coords = options.max_coords;
  fd.coord_seed = seeds.derive("coords");
  auto numeric_loss = [&](const ParamSet& ps) { return run(ps, &frozen, Precision::Double, nullptr); };

  result.passed = true;
  for (const auto& [name, t] : model.params.items()) {
    FdReport r = finite_diff_check(model.params, name, numeric_loss, analytic, fd);
    if (!result.tensor_passed(r)) result.passed = false;
    result.reports.push_back(std::move(r));
  }
  return result;
}

}  // namespace stgsl
