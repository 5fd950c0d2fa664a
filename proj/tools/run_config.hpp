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

#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgsl/data.hpp"
#include "stgsl/interpret.hpp"
#include "stgsl/train_eval.hpp"

namespace stgsl::cli {

/// Bad configuration value, unknown key or malformed file. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  SynthSpec synth;
  std::size_t timepoints = 140;  // series are truncated to this length on load
  std::filesystem::path out_dir = "out";
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> checkpoints;
  Structure structure = Structure::Threshold;
  bool sum_rows = false;
  double top_fraction = 0.10;
};

enum class KeyGroup { Shared, Train, Synth, Interpret };

struct KeySpec {
  std::string key;  // file key; the flag is "--" + key with '_' -> '-'
  KeyGroup group;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<KeySpec>& config_keys();
std::string flag_name(const std::string& key);

/// Ordered key -> raw value. Later assignments win.
using Settings = std::map<std::string, std::string>;

/// Reads "key = value" lines; '#' starts a comment. Unknown or repeated keys
/// are errors.
Settings read_config_file(const std::filesystem::path& path);

/// Applies settings over defaults in key-table order and validates the result.
RunConfig build_config(const Settings& settings);

}  // namespace stgsl::cli
