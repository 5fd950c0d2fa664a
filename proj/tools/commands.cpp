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
#include "commands.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <ostream>
#include <sstream>
#include <thread>

#include "stgsl/gradcheck.hpp"
#include "stgsl/io.hpp"

namespace stgsl::cli {

namespace {

namespace fs = std::filesystem;

std::vector<BoldSeries> load(const RunConfig& config) {
  if (config.manifest.empty()) throw IoError("no manifest given (--manifest)");
  if (!fs::exists(config.manifest)) throw IoError("manifest not found: " + config.manifest.string());
  LoadOptions opts;
  opts.timepoints = config.timepoints;
  return load_dataset(config.manifest, opts);
}

const fs::path& single_checkpoint(const RunConfig& config) {
  if (config.checkpoints.size() != 1) throw IoError("expected exactly one --checkpoint");
  return config.checkpoints.front();
}

// Runs body(i) for i in [0, n) on up to `jobs` threads; the first exception wins.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fold_dir_name(std::size_t fold) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "fold%02zu", fold + 1);
  return buf;
}

void write_salience(const fs::path& dir, const SalienceReport& report, const RunConfig& config,
                    std::ostream& log) {
  const auto names = default_roi_names(report.scores.size());
  SalienceOptions opts{config.structure, config.sum_rows};
  write_file_atomic(dir / "salience.json", salience_json(report, names, opts));
  write_file_atomic(dir / "salience.csv", salience_csv(report, names, config.top_fraction));
  for (std::size_t l = 0; l < report.layer_matrices.size(); ++l)
    write_file_atomic(dir / ("layer_weights_" + std::to_string(l) + ".csv"), matrix_csv(report.layer_matrices[l]));
  const bool degenerate =
      std::all_of(report.scores.begin(), report.scores.end(), [](double s) { return s == 0.0; });
  if (degenerate)
    log << "warning: salience is degenerate (all scores 0); the " << structure_name(config.structure)
        << " structure carries no weight contrast\n";
}

}  // namespace

int cmd_synth(const RunConfig& config, std::ostream& log) {
  const SynthDataset data = synth_generate(config.synth);
  const fs::path manifest = write_dataset(config.out_dir, data.subjects);
  write_planted_json(config.out_dir / "planted.json", data);
  log << "wrote " << data.subjects.size() << " subjects to " << manifest.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  const auto dataset = load(config);
  std::vector<int> labels;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    labels.push_back(dataset[i].label);
    pool.push_back(i);
  }
  const SeedTree seeds(config.train.seed);
  Engine split_rng = seeds.stream("validation");
  const Fold split = stratified_holdout(labels, pool, config.train.validation_fraction, split_rng);
  std::vector<BoldSeries> train_set, val_set;
  for (std::size_t i : split.train) train_set.push_back(dataset[i]);
  for (std::size_t i : split.validation) val_set.push_back(dataset[i]);
  log << "training on " << train_set.size() << " subjects, validating on " << val_set.size() << "\n";

  const TrainResult result = train(config.train, train_set, val_set, seeds.child("train"));
  save_checkpoint(result.model, config.out_dir / "model.ckpt");
  write_file_atomic(config.out_dir / "history.csv", history_csv(result.history));
  write_file_atomic(config.out_dir / "train.json",
                    training_json(result, config.train, train_set.size(), val_set.size()));
  write_file_atomic(config.out_dir / "adjacency.json", adjacency_json(result.model));
  log << "best epoch " << result.best_epoch << " of " << result.history.size() << "; checkpoint "
      << (config.out_dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_crossval(const RunConfig& config, std::ostream& log) {
  const auto dataset = load(config);
  log << "cross-validating " << dataset.size() << " subjects over " << config.train.folds << " folds\n";
  const CrossvalResult result = crossval(config.train, dataset, [&](const std::string& m) { log << m << "\n"; });

  std::vector<SalienceReport> reports;
  std::ostringstream preds;
  preds << "subject_id,fold,label,probability\n";
  for (const FoldResult& fr : result.folds) {
    const fs::path dir = config.out_dir / "folds" / fold_dir_name(fr.fold);
    save_checkpoint(fr.training.model, dir / "model.ckpt");
    write_file_atomic(dir / "history.csv", history_csv(fr.training.history));
    write_file_atomic(dir / "adjacency.json", adjacency_json(fr.training.model));
    reports.push_back(salience_scores(fr.training.model, {config.structure, config.sum_rows}));
    for (std::size_t i = 0; i < fr.test_ids.size(); ++i)
      preds << fr.test_ids[i] << ',' << fr.fold + 1 << ',' << fr.test_labels[i] << ','
            << format_double(fr.test_probabilities[i]) << '\n';
  }
  write_file_atomic(config.out_dir / "predictions.csv", preds.str());
  write_salience(config.out_dir, average_reports(reports), config, log);
  write_file_atomic(config.out_dir / "metrics.json", metrics_json(result, config.train));
  log << "ACC " << format_percent_pm(result.acc) << "  AUC " << format_percent_pm(result.auc) << "  SEN "
      << format_percent_pm(result.sen) << "  SPE " << format_percent_pm(result.spe) << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& config, std::ostream& log) {
  const StgcModel model = load_checkpoint(single_checkpoint(config));
  const auto dataset = load(config);
  for (const BoldSeries& s : dataset) {
    if (s.n_rois() != model.config.n_nodes)
      throw IoError("subject '" + s.subject_id + "' has " + std::to_string(s.n_rois()) +
                    " ROIs, checkpoint expects " + std::to_string(model.config.n_nodes));
  }
  std::vector<double> probs(dataset.size());
  parallel_for(dataset.size(), config.train.jobs, [&](std::size_t i) {
    probs[i] = predict_subject(model, dataset[i], config.train.eval_stride, config.train.eval_graph,
                               config.train.precision);
  });
  std::ostringstream out;
  out << "subject_id,label,probability,prediction\n";
  for (std::size_t i = 0; i < dataset.size(); ++i)
    out << dataset[i].subject_id << ',' << dataset[i].label << ',' << format_double(probs[i]) << ','
        << (probs[i] >= 0.5 ? 1 : 0) << '\n';
  write_file_atomic(config.out_dir / "predictions.csv", out.str());
  log << "wrote " << dataset.size() << " predictions to " << (config.out_dir / "predictions.csv").string() << "\n";
  return kExitOk;
}

int cmd_interpret(const RunConfig& config, std::ostream& log) {
  if (config.checkpoints.empty()) throw IoError("no checkpoint given (--checkpoint)");
  std::vector<SalienceReport> reports;
  std::optional<StgcModel> first;
  for (const fs::path& path : config.checkpoints) {
    StgcModel model = load_checkpoint(path);
    if (first && model.config.n_nodes != first->config.n_nodes)
      throw IoError("checkpoints differ in ROI count: " + path.string());
    reports.push_back(salience_scores(model, {config.structure, config.sum_rows}));
    if (!first) first = std::move(model);
  }
  const SalienceReport report = reports.size() == 1 ? reports.front() : average_reports(reports);
  write_salience(config.out_dir, report, config, log);
  if (config.checkpoints.size() == 1) write_file_atomic(config.out_dir / "adjacency.json", adjacency_json(*first));

  const auto names = default_roi_names(report.scores.size());
  for (const RoiRow& row : top_fraction(report, config.top_fraction, names)) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%3zu  %-18s %4zu  %.3f\n", row.rank, row.name.c_str(), row.index, row.score);
    log << buf;
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, bool break_st, std::ostream& log) {
  GradcheckOptions opts;
  opts.straight_through = !break_st;
  opts.precision = config.train.precision;
  opts.seed = config.train.seed;
  const GradcheckResult result = run_gradcheck(opts);
  char buf[160];
  for (const FdReport& r : result.reports) {
    std::snprintf(buf, sizeof(buf), "%-14s max_rel_err %.3e  checked %3zu  kinks %zu  %s\n", r.name.c_str(),
                  r.max_rel_error, r.checked, r.kinks, result.tensor_passed(r) ? "ok" : "FAIL");
    log << buf;
  }
  std::snprintf(buf, sizeof(buf), "tolerance %.0e: %s\n", result.tolerance, result.passed ? "PASS" : "FAIL");
  log << buf;
  return result.passed ? kExitOk : kExitNumeric;
}

}  // namespace stgsl::cli
