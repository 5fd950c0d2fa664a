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

#include "stgsl/train_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "stgsl/io.hpp"

#ifndef STGSL_VERSION
#define STGSL_VERSION "v0.1.0"
#endif

namespace stgsl {

namespace {

constexpr std::size_t kPredictChunk = 64;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce_prob(double p, double y) {
  const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return -(y * std::log(pc) + (1.0 - y) * std::log1p(-pc));
}

}  // namespace

void TrainConfig::validate() const {
  auto req = [](bool c, const char* msg) {
    if (!c) throw std::invalid_argument(std::string("TrainConfig: ") + msg);
  };
  req(epochs > 0, "epochs must be > 0");
  req(batch_size > 0, "batch_size must be > 0");
  req(lr > 0.0, "lr must be > 0");
  req(weight_decay >= 0.0, "weight_decay must be >= 0");
  req(window > 0, "window must be > 0");
  req(lambda >= 0.0, "lambda must be >= 0");
  req(tau > 0.0, "tau must be > 0");
  req(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  req(eval_stride > 0 && val_stride > 0, "strides must be > 0");
  req(folds >= 2, "folds must be >= 2");
  req(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must be in (0, 1)");
  req(jobs > 0, "jobs must be > 0");
}

ModelConfig TrainConfig::model_config(std::size_t n_nodes) const {
  ModelConfig m;
  m.n_nodes = n_nodes;
  m.n_layers = layers;
  m.channels = channels;
  m.window = window;
  m.dropout = dropout;
  m.tau = tau;
  m.lambda = lambda;
  m.theta_init_mean = theta_init_mean;
  m.theta_init_std = theta_init_std;
  m.validate();
  return m;
}

std::string graph_mode_name(GraphMode mode) {
  switch (mode) {
    case GraphMode::Sampled: return "sampled";
    case GraphMode::Threshold: return "threshold";
    case GraphMode::Expected: return "expected";
  }
  return "unknown";
}

GraphMode parse_graph_mode(const std::string& name) {
  if (name == "sampled") return GraphMode::Sampled;
  if (name == "threshold") return GraphMode::Threshold;
  if (name == "expected") return GraphMode::Expected;
  throw std::invalid_argument("unknown graph mode '" + name + "' (expected|threshold|sampled)");
}

// ---------------------------------------------------------------------------
// prediction / metrics

double predict_subject(const StgcModel& model, const BoldSeries& series, std::size_t stride,
                       GraphMode graph, Precision precision) {
  const std::size_t t = model.config.window;
  const std::vector<Window> windows = enumerate_windows(series, t, stride);
  // Sampled structures at evaluation draw from a stream tied to the subject.
  Engine g(mix64(fnv1a(series.subject_id)));
  ForwardNoise noise(g, Engine(0));
  // One structure per window in Sampled mode, so the subject average spans
  // many draws rather than one per chunk.
  const std::size_t step = graph == GraphMode::Sampled ? 1 : kPredictChunk;
  double acc = 0.0;
  for (std::size_t first = 0; first < windows.size(); first += step) {
    const std::size_t last = std::min(windows.size(), first + step);
    std::vector<Matrix> chunk;
    for (std::size_t i = first; i < last; ++i) chunk.push_back(windows[i].values);
    const WindowBatch batch = make_batch(chunk, std::vector<double>(chunk.size(), 0.0));
    for (double z : predict_logits(model, batch.values, graph, &noise, precision)) acc += sigmoid(z);
  }
  return acc / static_cast<double>(windows.size());
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, then the Mann-Whitney U statistic.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double n_pos = 0.0, n_neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      n_pos += 1.0;
      rank_sum += rank[i];
    } else {
      n_neg += 1.0;
    }
  }
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Metrics compute_metrics(const std::vector<double>& probabilities, const std::vector<int>& labels,
                        double threshold) {
  if (probabilities.size() != labels.size() || labels.empty())
    throw std::invalid_argument("compute_metrics: need equal, non-zero lengths");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = probabilities[i] >= threshold;
    if (labels[i] == 1) (pred ? m.tp : m.fn)++;
    else (pred ? m.fp : m.tn)++;
  }
  m.acc = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
  if (m.tp + m.fn) m.sen = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (m.tn + m.fp) m.spe = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  m.auc = roc_auc(probabilities, labels);
  return m;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

std::string format_percent_pm(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", 100.0 * s.mean, 100.0 * s.sd);
  return buf;
}

// ---------------------------------------------------------------------------
// training

TrainResult train(const TrainConfig& config, const std::vector<BoldSeries>& train_subjects,
                  const std::vector<BoldSeries>& val_subjects, const SeedTree& seeds) {
  config.validate();
  if (train_subjects.empty() || val_subjects.empty())
    throw std::invalid_argument("train: training and validation splits must be non-empty");
  const std::size_t n_nodes = train_subjects.front().n_rois();
  for (const auto* split : {&train_subjects, &val_subjects}) {
    for (const BoldSeries& s : *split) {
      if (s.n_rois() != n_nodes)
        throw std::invalid_argument("train: subject '" + s.subject_id + "' has a different ROI count");
      if (s.n_timepoints() < config.window)
        throw std::invalid_argument("train: subject '" + s.subject_id + "' is shorter than the window");
    }
  }

  Engine init_rng = seeds.stream("init");
  StgcModel model = StgcModel::init(config.model_config(n_nodes), init_rng);
  ForwardNoise noise(seeds.stream("gumbel"), seeds.stream("dropout"));
  Engine window_rng = seeds.stream("windows");
  Engine shuffle_rng = seeds.stream("shuffle");

  AdamState adam;
  adam.config.lr = config.lr;
  adam.config.weight_decay = config.weight_decay;
  adam.config.decoupled = config.decoupled_weight_decay;

  TrainResult result;
  result.model = model;
  bool have_best = false;
  double best_acc = 0.0, best_loss = 0.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_subjects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ForwardOptions opts;
  opts.mode = RunMode::Train;
  opts.graph = GraphMode::Sampled;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      std::vector<Matrix> windows;
      std::vector<double> labels;
      for (std::size_t i = first; i < last; ++i) {
        const BoldSeries& s = train_subjects[order[i]];
        windows.push_back(sample_window(s, config.window, window_rng).values);
        labels.push_back(static_cast<double>(s.label));
      }
      const WindowBatch batch = make_batch(windows, labels);

      Tape tape(config.precision);
      const BoundParams p = bind_parameters(tape, model.params, true);
      const ForwardResult fr = forward(tape, p, model.config, batch.values, opts, &noise);
      const LossTerms lt = loss(tape, fr.logits, batch.labels, p.at(pname::kTheta), config.lambda);
      const double total = tape.value(lt.total).item();
      if (!std::isfinite(total))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      const GradStore grads = tape.backward(lt.total);
      adam_step(model.params, grads, adam);

      const double w = static_cast<double>(last - first);
      rec.train_loss += w * total;
      rec.train_bce += w * tape.value(lt.bce).item();
      rec.train_sp += w * tape.value(lt.sparsity).item();
    }
    const double n = static_cast<double>(order.size());
    rec.train_loss /= n;
    rec.train_bce /= n;
    rec.train_sp /= n;

    std::size_t correct = 0;
    for (const BoldSeries& s : val_subjects) {
      const double prob = predict_subject(model, s, config.val_stride, config.eval_graph, config.precision);
      correct += static_cast<std::size_t>((prob >= 0.5) == (s.label == 1));
      rec.val_loss += bce_prob(prob, static_cast<double>(s.label));
    }
    rec.val_acc = static_cast<double>(correct) / static_cast<double>(val_subjects.size());
    rec.val_loss /= static_cast<double>(val_subjects.size());
    result.history.push_back(rec);

    // Patience follows accuracy alone; the loss tie-break only picks the
    // checkpoint among equally accurate epochs.
    const bool more_accurate = !have_best || rec.val_acc > best_acc;
    if (more_accurate || (rec.val_acc == best_acc && rec.val_loss < best_loss)) {
      have_best = true;
      best_acc = rec.val_acc;
      best_loss = rec.val_loss;
      result.model = model;
      result.best_epoch = epoch;
    }
    if (more_accurate) {
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  result.final_model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// cross-validation

CrossvalResult crossval(const TrainConfig& config, const std::vector<BoldSeries>& dataset,
                        const std::function<void(const std::string&)>& log) {
  config.validate();
  std::vector<int> labels;
  for (const BoldSeries& s : dataset) labels.push_back(s.label);

  CrossvalResult result;
  result.plan = stratified_kfold(labels, config.folds, config.validation_fraction, config.seed);
  result.folds.resize(config.folds);

  std::mutex log_mutex;
  auto run_fold = [&](std::size_t f) {
    const Fold& fold = result.plan.folds[f];
    auto pick = [&](const std::vector<std::size_t>& idx) {
      std::vector<BoldSeries> out;
      for (std::size_t i : idx) out.push_back(dataset[i]);
      return out;
    };
    const auto train_set = pick(fold.train);
    const auto val_set = pick(fold.validation);
    const auto test_set = pick(fold.test);

    std::set<std::string> seen;
    for (const auto& s : train_set) seen.insert(s.subject_id);
    for (const auto& s : val_set) seen.insert(s.subject_id);
    for (const auto& s : test_set) {
      if (seen.count(s.subject_id))
        throw std::logic_error("crossval: test subject '" + s.subject_id + "' leaked into training");
    }

    const SeedTree seeds = SeedTree(config.seed).child("fold", f);
    FoldResult fr;
    fr.fold = f;
    fr.training = train(config, train_set, val_set, seeds);
    for (const BoldSeries& s : test_set) {
      fr.test_ids.push_back(s.subject_id);
      fr.test_labels.push_back(s.label);
      fr.test_probabilities.push_back(
          predict_subject(fr.training.model, s, config.eval_stride, config.eval_graph,
                          config.precision));
    }
    fr.metrics = compute_metrics(fr.test_probabilities, fr.test_labels);
    if (log) {
      std::lock_guard<std::mutex> lock(log_mutex);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "fold %zu: best epoch %zu, ACC %.3f AUC %s", f + 1,
                    fr.training.best_epoch, fr.metrics.acc,
                    fr.metrics.auc ? std::to_string(*fr.metrics.auc).c_str() : "n/a");
      log(buf);
    }
    result.folds[f] = std::move(fr);
  };

  const std::size_t workers = std::min(config.jobs, config.folds);
  if (workers <= 1) {
    for (std::size_t f = 0; f < config.folds; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t f = next++; f < config.folds; f = next++) run_fold(f);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> acc, auc, sen, spe;
  for (const FoldResult& fr : result.folds) {
    acc.push_back(fr.metrics.acc);
    if (fr.metrics.auc) auc.push_back(*fr.metrics.auc);
    if (fr.metrics.sen) sen.push_back(*fr.metrics.sen);
    if (fr.metrics.spe) spe.push_back(*fr.metrics.spe);
  }
  result.acc = summarize(acc);
  result.auc = summarize(auc);
  result.sen = summarize(sen);
  result.spe = summarize(spe);
  return result;
}

std::string version_string() { return STGSL_VERSION; }

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.count}, {"formatted", format_percent_pm(s)}};
}

nlohmann::ordered_json config_json(const TrainConfig& config) {
  using nlohmann::ordered_json;
  ordered_json cfg;
  cfg["epochs"] = config.epochs;
  cfg["batch_size"] = config.batch_size;
  cfg["lr"] = config.lr;
  cfg["weight_decay"] = config.weight_decay;
  cfg["decoupled_weight_decay"] = config.decoupled_weight_decay;
  cfg["window"] = config.window;
  cfg["lambda"] = config.lambda;
  cfg["tau"] = config.tau;
  cfg["dropout"] = config.dropout;
  cfg["channels"] = config.channels;
  cfg["layers"] = config.layers;
  cfg["patience"] = config.patience;
  cfg["eval_stride"] = config.eval_stride;
  cfg["val_stride"] = config.val_stride;
  cfg["eval_graph"] = graph_mode_name(config.eval_graph);
  cfg["folds"] = config.folds;
  cfg["validation_fraction"] = config.validation_fraction;
  cfg["theta_init_mean"] = config.theta_init_mean;
  cfg["theta_init_std"] = config.theta_init_std;
  cfg["precision"] = config.precision == Precision::Single ? "single" : "double";
  return cfg;
}

}  // namespace

std::string metrics_json(const CrossvalResult& result, const TrainConfig& config) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["version"] = version_string();
  j["seed"] = config.seed;
  j["config"] = config_json(config);

  ordered_json folds = ordered_json::array();
  for (const FoldResult& fr : result.folds) {
    ordered_json f;
    f["fold"] = fr.fold + 1;
    f["best_epoch"] = fr.training.best_epoch;
    f["n_test"] = fr.test_ids.size();
    f["acc"] = fr.metrics.acc;
    f["auc"] = optional_json(fr.metrics.auc);
    f["sen"] = optional_json(fr.metrics.sen);
    f["spe"] = optional_json(fr.metrics.spe);
    f["confusion"] = {{"tp", fr.metrics.tp}, {"tn", fr.metrics.tn}, {"fp", fr.metrics.fp}, {"fn", fr.metrics.fn}};
    ordered_json preds = ordered_json::array();
    for (std::size_t i = 0; i < fr.test_ids.size(); ++i)
      preds.push_back({{"subject_id", fr.test_ids[i]}, {"label", fr.test_labels[i]}, {"probability", fr.test_probabilities[i]}});
    f["predictions"] = preds;
    folds.push_back(f);
  }
  j["folds"] = folds;
  j["aggregate"] = {{"acc", summary_json(result.acc)},
                    {"auc", summary_json(result.auc)},
                    {"sen", summary_json(result.sen)},
                    {"spe", summary_json(result.spe)}};
  return j.dump(2) + "\n";
}

std::string training_json(const TrainResult& result, const TrainConfig& config,
                          std::size_t n_train, std::size_t n_validation) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["version"] = version_string();
  j["seed"] = config.seed;
  j["config"] = config_json(config);
  j["n_train"] = n_train;
  j["n_validation"] = n_validation;
  j["epochs_run"] = result.history.size();
  j["best_epoch"] = result.best_epoch;
  if (result.best_epoch > 0) {
    const EpochRecord& best = result.history.at(result.best_epoch - 1);
    j["best_val_acc"] = best.val_acc;
    j["best_val_loss"] = best.val_loss;
  }
  return j.dump(2) + "\n";
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,train_bce,train_sp,val_acc,val_loss\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.train_bce) +
           "," + format_double(r.train_sp) + "," + format_double(r.val_acc) + "," + format_double(r.val_loss) + "\n";
  }
  return out;
}

}  // namespace stgsl
