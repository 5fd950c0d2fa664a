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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stgsl/autodiff.hpp"
#include "stgsl/data.hpp"
#include "stgsl/stgc_net.hpp"

namespace stgsl {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 3e-4;
  double weight_decay = 1e-3;
  bool decoupled_weight_decay = true;
  std::size_t window = 12;
  double lambda = 1e-4;
  double tau = 0.2;
  double dropout = 0.5;
  double theta_init_mean = 0.0;
  double theta_init_std = 0.5;
  std::size_t channels = 64;
  std::size_t layers = 3;
  std::uint64_t seed = 0;
  std::size_t patience = 20;        // epochs without validation improvement; 0 disables
  std::size_t eval_stride = 1;      // test-time slice stride
  std::size_t val_stride = 1;       // validation slice stride
  GraphMode eval_graph = GraphMode::Threshold;
  std::size_t folds = 10;
  double validation_fraction = 0.1;
  std::size_t jobs = 1;
  Precision precision = Precision::Double;

  void validate() const;
  ModelConfig model_config(std::size_t n_nodes) const;
};

std::string graph_mode_name(GraphMode mode);
GraphMode parse_graph_mode(const std::string& name);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_bce = 0.0;
  double train_sp = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  StgcModel model;  // checkpoint with the best validation accuracy
  StgcModel final_model;  // parameters after the last epoch run
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Mini-batch training with one fresh random window per subject per
/// iteration. Keeps the epoch with the best validation accuracy (ties: lower
/// validation loss, then the earlier epoch). Throws NumericError on a NaN loss.
TrainResult train(const TrainConfig& config, const std::vector<BoldSeries>& train_subjects,
                  const std::vector<BoldSeries>& val_subjects, const SeedTree& seeds);

/// Mean sigmoid over all windows (start 0, stride, ...) of the series.
double predict_subject(const StgcModel& model, const BoldSeries& series, std::size_t stride,
                       GraphMode graph = GraphMode::Threshold,
                       Precision precision = Precision::Double);

struct Metrics {
  double acc = 0.0;
  std::optional<double> auc;  // absent when only one class is present
  std::optional<double> sen;  // absent without positives
  std::optional<double> spe;  // absent without negatives
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

/// Thresholded confusion-matrix metrics (label 1 is the positive class) and
/// rank-statistic AUC with ties counted half.
Metrics compute_metrics(const std::vector<double>& probabilities, const std::vector<int>& labels,
                        double threshold = 0.5);

/// Mann-Whitney AUC; std::nullopt when a class is missing.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation across folds
  std::size_t count = 0;
};

Summary summarize(const std::vector<double>& values);

/// "92.2 ± 2.3" from fractions in [0, 1].
std::string format_percent_pm(const Summary& s);

struct FoldResult {
  std::size_t fold = 0;
  Metrics metrics;
  std::vector<std::string> test_ids;
  std::vector<double> test_probabilities;
  std::vector<int> test_labels;
  TrainResult training;
};

struct CrossvalResult {
  FoldPlan plan;
  std::vector<FoldResult> folds;
  Summary acc, auc, sen, spe;
};

/// Stratified k-fold cross-validation. Folds are independent given the seed
/// and run on up to `config.jobs` threads; results do not depend on `jobs`.
CrossvalResult crossval(const TrainConfig& config, const std::vector<BoldSeries>& dataset,
                        const std::function<void(const std::string&)>& log = {});

/// Version string embedded in metrics.json.
std::string version_string();

/// metrics.json contents (deterministic given the result and config).
std::string metrics_json(const CrossvalResult& result, const TrainConfig& config);

/// history.csv contents.
/// Summary of a single training run (config echo, best epoch, validation).
std::string training_json(const TrainResult& result, const TrainConfig& config,
                          std::size_t n_train, std::size_t n_validation);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace stgsl
