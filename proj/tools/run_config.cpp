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
#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

namespace stgsl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

Precision to_precision(const std::string& key, const std::string& v) {
  if (v == "double") return Precision::Double;
  if (v == "single") return Precision::Single;
  throw ConfigError(key + ": expected double or single, got '" + v + "'");
}

template <typename F>
auto rethrow(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

#define SIZE_KEY(name, group, help, field) \
  {name, group, help, [](RunConfig& c, const std::string& v) { c.field = to_size(name, v); }}
#define REAL_KEY(name, group, help, field) \
  {name, group, help, [](RunConfig& c, const std::string& v) { c.field = to_double(name, v); }}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

const std::vector<KeySpec>& config_keys() {
  using G = KeyGroup;
  static const std::vector<KeySpec> keys = {
      {"seed", G::Shared, "master seed for every random stream",
       [](RunConfig& c, const std::string& v) { c.train.seed = c.synth.seed = to_size("seed", v); }},
      SIZE_KEY("jobs", G::Shared, "worker threads for folds", train.jobs),
      {"precision", G::Shared, "arithmetic precision: double or single",
       [](RunConfig& c, const std::string& v) { c.train.precision = to_precision("precision", v); }},
      {"out_dir", G::Shared, "output directory",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"manifest", G::Shared, "dataset manifest (subject_id,label,path)",
       [](RunConfig& c, const std::string& v) { c.manifest = v; }},
      {"checkpoint", G::Shared, "model checkpoint; interpret accepts a comma-separated list",
       [](RunConfig& c, const std::string& v) {
         c.checkpoints.clear();
         std::size_t start = 0;
         while (start <= v.size()) {
           const auto comma = v.find(',', start);
           const std::string part = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
           if (!part.empty()) c.checkpoints.emplace_back(part);
           if (comma == std::string::npos) break;
           start = comma + 1;
         }
       }},
      SIZE_KEY("timepoints", G::Shared, "series length Z (truncation on load, length for synth)", timepoints),

      SIZE_KEY("epochs", G::Train, "training epochs", train.epochs),
      SIZE_KEY("batch_size", G::Train, "subjects per mini-batch", train.batch_size),
      REAL_KEY("lr", G::Train, "Adam learning rate", train.lr),
      REAL_KEY("weight_decay", G::Train, "weight decay", train.weight_decay),
      {"decoupled_weight_decay", G::Train, "decoupled (true) or L2-coupled (false) weight decay",
       [](RunConfig& c, const std::string& v) { c.train.decoupled_weight_decay = to_bool("decoupled_weight_decay", v); }},
      SIZE_KEY("window", G::Train, "window length T", train.window),
      REAL_KEY("lambda", G::Train, "sparsity loss weight", train.lambda),
      REAL_KEY("tau", G::Train, "gumbel-softmax temperature", train.tau),
      REAL_KEY("dropout", G::Train, "dropout rate", train.dropout),
      SIZE_KEY("channels", G::Train, "hidden channels H", train.channels),
      SIZE_KEY("layers", G::Train, "ST-GC blocks L", train.layers),
      SIZE_KEY("patience", G::Train, "early-stopping patience in epochs (0 disables)", train.patience),
      SIZE_KEY("eval_stride", G::Train, "test window stride", train.eval_stride),
      SIZE_KEY("val_stride", G::Train, "validation window stride", train.val_stride),
      {"eval_graph", G::Train, "inference structure: expected, threshold or sampled",
       [](RunConfig& c, const std::string& v) {
         c.train.eval_graph = rethrow("eval_graph", [&] { return parse_graph_mode(v); });
       }},
      SIZE_KEY("folds", G::Train, "cross-validation folds", train.folds),
      REAL_KEY("validation_fraction", G::Train, "share of each training split held out", train.validation_fraction),
      REAL_KEY("theta_init_mean", G::Train, "mean of the structure parameter init", train.theta_init_mean),
      REAL_KEY("theta_init_std", G::Train, "standard deviation of the structure parameter init", train.theta_init_std),

      SIZE_KEY("n_rois", G::Synth, "synthetic ROI count", synth.n_rois),
      SIZE_KEY("subjects", G::Synth, "synthetic subjects per class", synth.n_subjects_per_class),
      REAL_KEY("edge_density", G::Synth, "planted edge density", synth.edge_density),
      REAL_KEY("coupling", G::Synth, "propagation strength rho", synth.coupling),
      REAL_KEY("noise_std", G::Synth, "innovation standard deviation", synth.noise_std),
      SIZE_KEY("k_diff", G::Synth, "edges flipped between classes", synth.k_diff),
      SIZE_KEY("burn_in", G::Synth, "discarded warm-up steps", synth.burn_in),

      {"structure", G::Interpret, "analysis structure: threshold or expected",
       [](RunConfig& c, const std::string& v) {
         c.structure = rethrow("structure", [&] { return parse_structure(v); });
       }},
      {"sum_rows", G::Interpret, "sum outgoing rows instead of incoming columns",
       [](RunConfig& c, const std::string& v) { c.sum_rows = to_bool("sum_rows", v); }},
      REAL_KEY("top_fraction", G::Interpret, "share of ROIs listed in salience.csv", top_fraction),
  };
  return keys;
}

Settings read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::set<std::string> known;
  for (const KeySpec& k : config_keys()) known.insert(k.key);

  Settings out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (out.count(key)) throw ConfigError(where + ": key '" + key + "' given twice");
    out[key] = value;
  }
  return out;
}

RunConfig build_config(const Settings& settings) {
  RunConfig c;
  for (const auto& [key, value] : settings) {
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& k) { return k.key == key; });
    if (it == keys.end()) throw ConfigError("unknown key '" + key + "'");
  }
  for (const KeySpec& k : config_keys()) {
    const auto it = settings.find(k.key);
    if (it != settings.end()) k.set(c, it->second);
  }
  c.synth.n_timepoints = c.timepoints;
  try {
    c.train.validate();
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.train.window > c.timepoints)
    throw ConfigError("window (" + std::to_string(c.train.window) + ") exceeds timepoints (" +
                      std::to_string(c.timepoints) + ")");
  if (!(c.top_fraction > 0.0 && c.top_fraction <= 1.0))
    throw ConfigError("top_fraction must be in (0, 1]");
  return c;
}

}  // namespace stgsl::cli
