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
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `--only 1,3` runs a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "oracles.hpp"
#include "stats.hpp"
#include "stgsl/data.hpp"
#include "stgsl/gradcheck.hpp"
#include "stgsl/graph_learn.hpp"
#include "stgsl/io.hpp"
#include "stgsl/stgc_net.hpp"
#include "stgsl/train_eval.hpp"
#include "testing.hpp"

using namespace stgsl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GradcheckResult r = run_gradcheck();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool all = !r.reports.empty();
  for (const FdReport& f : r.reports) {
    all = all && r.tensor_passed(f);
    if (f.max_rel_error >= worst) worst = f.max_rel_error, worst_name = f.name;
  }
  return {all && secs < 60.0, std::to_string(r.reports.size()) + " tensors, worst " +
                                  fmt("%.2e", worst) + " (" + worst_name + ") <= 1e-4, " +
                                  fmt("%.2f", secs) + " s < 60 s"};
}

Outcome gumbel_exactness() {
  bool ok = true;
  std::ostringstream detail;
  constexpr std::size_t kSamples = 10000;  // x 10 pairs of a 4-node matrix
  for (double p : {0.1, 0.5, 0.9}) {
    Engine rng(20260 + static_cast<std::uint64_t>(p * 10));
    const Matrix prob = Matrix::Constant(4, 4, p);
    std::size_t kept = 0;
    for (std::size_t d = 0; d < kSamples; ++d) {
      const Matrix h = gumbel_binarize(prob, 0.2, rng, SampleMode::Train).hard;
      for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) kept += h(i, j) > 0.5 ? 1 : 0;
    }
    const double pv = stats::binomial_two_sided_p(kept, kSamples * 10, p);
    ok = ok && pv > 0.001;
    detail << "p=" << p << " freq " << fmt("%.4f", static_cast<double>(kept) / 1e5) << " (p-value "
           << fmt("%.3f", pv) << "); ";
  }
  bool invariant = true;
  Engine base(7);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix p = sparsify(oracle::random_matrix(8, 8, base), -1.0);
    p = (p + p.transpose()).eval() * 0.5;
    Matrix first;
    for (double tau : {0.2, 1.0, 5.0}) {
      Engine rng(static_cast<std::uint64_t>(trial));
      Matrix h = gumbel_binarize(p, tau, rng, SampleMode::Train).hard;
      if (first.size() == 0) first = h;
      invariant = invariant && h == first;
    }
  }
  detail << "tau-invariant " << (invariant ? "yes" : "no");
  return {ok && invariant, detail.str()};
}

Outcome dense_oracles() {
  Engine rng(3);
  double w_adj = 0, w_sp = 0, w_inc = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a = oracle::random_binary_symmetric(5, 0.5, rng);
    Matrix m = oracle::random_matrix(5, 5, rng);
    Matrix got = normalized_adjacency(a, m, 1e-6);
    Matrix want = oracle::normalized_adjacency(a, m, 1e-6);
    w_adj = std::max(w_adj, oracle::max_rel_diff({got.data(), 25}, {want.data(), 25}));

    Tensor x = oracle::random_tensor({2, 6, 5, 4}, rng);
    Matrix an = oracle::normalized_adjacency(a, m, 1e-6);
    Matrix w = oracle::random_matrix(4, 8, rng);
    w_sp = std::max(w_sp, oracle::max_rel_diff(spatial_conv(x, an, w).span(),
                                                oracle::spatial_conv(x, an, w).span()));

    Tensor xi = oracle::random_tensor({2, 7, 5, 8}, rng);
    auto p = oracle::random_inception(8, 8, rng);
    w_inc = std::max(w_inc, oracle::max_rel_diff(temporal_inception(xi, p).span(),
                                                  oracle::temporal_inception(xi, p).span()));
  }
  const double worst = std::max({w_adj, w_sp, w_inc});
  return {worst <= 1e-10, "100 trials each; worst rel diff normalized_adjacency " + fmt("%.1e", w_adj) +
                              ", spatial_conv " + fmt("%.1e", w_sp) + ", temporal_inception " +
                              fmt("%.1e", w_inc) + " (<= 1e-10)"};
}

std::vector<BoldSeries> synth_dataset(std::size_t k_diff, std::uint64_t seed, SynthDataset* keep = nullptr) {
  SynthSpec spec;
  spec.n_rois = 16;
  spec.n_subjects_per_class = 40;
  spec.n_timepoints = 140;
  spec.coupling = 0.9;
  spec.noise_std = 0.1;
  spec.k_diff = k_diff;
  spec.seed = seed;
  SynthDataset d = synth_generate(spec);
  auto subjects = d.subjects;
  for (auto& s : subjects) preprocess(s, 140);
  if (keep) *keep = std::move(d);
  return subjects;
}

double mean_sigmoid_theta(const StgcModel& m) {
  return sparsity_loss(m.params.at(pname::kTheta).span());
}

Outcome sparsity_effect() {
  auto data = synth_dataset(8, 11);
  std::vector<BoldSeries> tr, va;
  for (std::size_t i = 0; i < data.size(); ++i) (i % 10 == 0 ? va : tr).push_back(data[i]);
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig c;
    c.epochs = 20;
    c.channels = 16;
    c.val_stride = 16;
    c.patience = 0;
    c.seed = seed;
    c.lambda = 0.0;
    const double free = mean_sigmoid_theta(train(c, tr, va, SeedTree(seed)).final_model);
    c.lambda = 1e-2;
    const double penalized = mean_sigmoid_theta(train(c, tr, va, SeedTree(seed)).final_model);
    wins += penalized < free ? 1 : 0;
    detail << "seed " << seed << ": " << fmt("%.5f", free) << " vs " << fmt("%.5f", penalized) << "; ";
  }
  detail << wins << "/3 lower with lambda = 1e-2";
  return {wins == 3, detail.str()};
}

// Hyperparameters of the synthetic end-to-end runs.
TrainConfig synthetic_config() {
  TrainConfig c;
  c.folds = 5;
  c.epochs = 1500;
  c.channels = 16;
  c.lr = 1e-3;
  c.dropout = 0.0;
  c.patience = 0;
  c.val_stride = 16;
  c.eval_stride = 1;
  c.eval_graph = GraphMode::Sampled;
  c.seed = 0;
  return c;
}

struct SyntheticRun {
  bool done = false;
  CrossvalResult result;
  SynthDataset data;
  double seconds = 0.0;
};

SyntheticRun& synthetic_run() {
  static SyntheticRun run;
  if (!run.done) {
    auto subjects = synth_dataset(8, 0, &run.data);
    const auto t0 = Clock::now();
    run.result = crossval(synthetic_config(), subjects);
    run.seconds = seconds_since(t0);
    run.done = true;
  }
  return run;
}

Outcome synthetic_end_to_end() {
  SyntheticRun& r = synthetic_run();
  const bool ok = r.result.acc.mean >= 0.90 && r.result.auc.mean >= 0.95 && r.seconds <= 600.0;
  return {ok, "5-fold ACC " + fmt("%.3f", r.result.acc.mean) + " (>= 0.90), AUC " +
                  fmt("%.3f", r.result.auc.mean) + " (>= 0.95), " + fmt("%.0f", r.seconds) +
                  " s (<= 600 s)"};
}

Outcome structure_recovery() {
  SyntheticRun& r = synthetic_run();
  const auto n = r.data.planted_class0.rows();
  Matrix p = Matrix::Zero(n, n);
  for (const FoldResult& f : r.result.folds) p += f.training.model.keep_probability();
  std::vector<double> scores;
  std::vector<int> planted;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      scores.push_back(p(i, j));
      planted.push_back(r.data.planted_class0(i, j) > 0 || r.data.planted_class1(i, j) > 0 ? 1 : 0);
    }
  const double auc = roc_auc(scores, planted).value_or(0.0);
  return {auc >= 0.70, "pair AUC of fold-averaged keep probability vs planted union " +
                           fmt("%.3f", auc) + " (>= 0.70)"};
}

Outcome null_control() {
  auto subjects = synth_dataset(0, 0);
  CrossvalResult r = crossval(synthetic_config(), subjects);
  std::size_t correct = 0, total = 0;
  for (const FoldResult& f : r.folds) {
    correct += f.metrics.tp + f.metrics.tn;
    total += f.test_labels.size();
  }
  const auto [lo, hi] = stats::binomial_band(total, 0.5, 0.95);
  return {correct >= lo && correct <= hi,
          std::to_string(correct) + "/" + std::to_string(total) + " correct, 95% band [" +
              std::to_string(lo) + ", " + std::to_string(hi) + "]"};
}

Outcome bookkeeping() {
  ModelConfig c;  // N = 116
  Engine rng(1);
  const std::size_t theta = StgcModel::init(c, rng).params.at(pname::kTheta).size();
  BoldSeries s;
  s.values = Matrix::Zero(116, 140);
  const std::size_t slices = enumerate_windows(s, 12, 1).size();
  std::vector<int> labels(146);
  for (std::size_t i = 0; i < 146; ++i) labels[i] = i < 73 ? 0 : 1;
  FoldPlan plan = stratified_kfold(labels, 10, 0.1, 0);
  bool balanced = plan.folds.size() == 10;
  std::size_t covered = 0;
  for (const Fold& f : plan.folds) {
    std::size_t pos = 0;
    for (auto i : f.test) pos += static_cast<std::size_t>(labels[i]);
    const std::size_t neg = f.test.size() - pos;
    balanced = balanced && (pos == 7 || pos == 8) && (neg == 7 || neg == 8);
    covered += f.test.size();
  }
  balanced = balanced && covered == 146;
  return {theta == 6786 && slices == 129 && balanced,
          "theta length " + std::to_string(theta) + ", slices " + std::to_string(slices) +
              ", 10 folds of 73+73 balanced within +-1: " + (balanced ? "yes" : "no")};
}

Outcome determinism() {
  testing::TempDir dir("accept-det");
  SynthSpec spec;
  spec.n_subjects_per_class = 10;
  spec.seed = 5;
  cli::RunConfig rc;
  rc.synth = spec;
  rc.out_dir = dir / "data";
  std::ostringstream sink;
  cli::cmd_synth(rc, sink);
  rc.manifest = dir / "data" / "manifest.csv";
  rc.train.epochs = 3;
  rc.train.channels = 8;
  rc.train.folds = 5;
  rc.train.val_stride = 8;
  rc.train.eval_stride = 4;
  rc.train.seed = 9;
  rc.out_dir = dir / "a";
  cli::cmd_crossval(rc, sink);
  rc.out_dir = dir / "b";
  cli::cmd_crossval(rc, sink);
  const std::string a = testing::slurp(dir / "a" / "metrics.json");
  const std::string b = testing::slurp(dir / "b" / "metrics.json");
  return {!a.empty() && a == b, "two crossval runs, metrics.json " + std::to_string(a.size()) +
                                    " bytes, byte-identical: " + (a == b ? "yes" : "no")};
}

Outcome checkpoint_fidelity() {
  ModelConfig c;  // N = 116, 64 channels
  Engine rng(4);
  StgcModel m = StgcModel::init(c, rng);
  for (auto& [name, t] : m.params.items())
    for (double& v : t.data) v += 0.1 * standard_normal(rng);
  testing::TempDir dir("accept-ckpt");
  save_checkpoint(m, dir / "m.ckpt");
  StgcModel back = load_checkpoint(dir / "m.ckpt");
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor batch = oracle::random_tensor({1, 1, 116, 12}, rng);
    const double a = predict_logits(m, batch)[0];
    const double b = predict_logits(back, batch)[0];
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  return {worst <= 1e-12, "100 inputs, worst logit difference " + fmt("%.1e", worst) + " (<= 1e-12)"};
}

}  // namespace

std::set<int> parse_ids(const char* list) {
  std::set<int> ids;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) ids.insert(std::stoi(item));
  return ids;
}

// --only 1,3 runs a subset. --allow-fail 6 still prints FAIL for criterion 6
// but leaves the exit status alone.
int main(int argc, char** argv) {
  std::set<int> only, allowed;
  for (int i = 1; i + 1 < argc; ++i) {
    const std::string flag = argv[i];
    if (flag == "--only") only = parse_ids(argv[i + 1]);
    if (flag == "--allow-fail") allowed = parse_ids(argv[i + 1]);
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"gumbel sampling exactness", gumbel_exactness},
      {"dense-oracle equivalence", dense_oracles},
      {"sparsity-loss effect", sparsity_effect},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"structure recovery", structure_recovery},
      {"null-signal control", null_control},
      {"bookkeeping exactness", bookkeeping},
      {"determinism", determinism},
      {"checkpoint fidelity", checkpoint_fidelity},
  };
  int passed = 0, ran = 0, blocking = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    passed += o.pass ? 1 : 0;
    blocking += !o.pass && !allowed.count(id) ? 1 : 0;
    std::printf("%s %2d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), !o.pass && allowed.count(id) ? " [allowed]" : "");
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", passed, ran);
  return blocking == 0 ? 0 : 1;
}
