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
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "stgsl/autodiff.hpp"
#include "stgsl/io.hpp"
#include "stgsl/train_eval.hpp"

namespace {

using namespace stgsl::cli;

struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::string> values;
  std::vector<std::string> checkpoints;
};

void add_keys(Command& cmd, std::initializer_list<KeyGroup> groups) {
  for (const KeySpec& k : config_keys()) {
    if (std::find(groups.begin(), groups.end(), k.group) == groups.end()) continue;
    CLI::Option* opt = nullptr;
    if (k.key == "checkpoint") {
      opt = cmd.app->add_option(flag_name(k.key), cmd.checkpoints, k.help);
    } else if (k.key == "eval_stride") {
      opt = cmd.app->add_option(flag_name(k.key) + ",--stride", cmd.values[k.key], k.help);
    } else {
      opt = cmd.app->add_option(flag_name(k.key), cmd.values[k.key], k.help);
    }
    cmd.options[k.key] = opt;
  }
}

Settings collect(const Command& cmd, const std::string& config_path) {
  Settings settings;
  if (!config_path.empty()) settings = read_config_file(config_path);
  for (const auto& [key, opt] : cmd.options) {
    if (opt->count() == 0) continue;
    if (key == "checkpoint") {
      std::string joined;
      for (const auto& c : cmd.checkpoints) joined += (joined.empty() ? "" : ",") + c;
      settings[key] = joined;
    } else {
      settings[key] = cmd.values.at(key);
    }
  }
  return settings;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph convolution with a self-learned graph structure"};
  app.set_version_flag("--version", stgsl::version_string());
  app.require_subcommand(1);

  std::string config_path;
  bool break_st = false;
  std::map<std::string, Command> commands;
  auto make = [&](const std::string& name, const std::string& help,
                  std::initializer_list<KeyGroup> groups) -> Command& {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    cmd.app->add_option("--config", config_path, "key = value configuration file");
    add_keys(cmd, groups);
    return cmd;
  };
  using G = KeyGroup;
  make("synth", "generate a synthetic dataset with planted graphs", {G::Shared, G::Synth});
  make("train", "train one model with a stratified validation hold-out", {G::Shared, G::Train});
  make("crossval", "stratified k-fold cross-validation", {G::Shared, G::Train, G::Interpret});
  make("predict", "per-subject probabilities from a checkpoint", {G::Shared, G::Train});
  make("interpret", "ROI salience from one or more checkpoints", {G::Shared, G::Interpret});
  Command& gc = make("gradcheck", "finite-difference check of every gradient", {G::Shared});
  gc.app->add_flag("--break-st", break_st, "disable the straight-through adjoint (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      const RunConfig config = build_config(collect(cmd, config_path));
      if (name == "synth") return cmd_synth(config, std::cerr);
      if (name == "train") return cmd_train(config, std::cerr);
      if (name == "crossval") return cmd_crossval(config, std::cerr);
      if (name == "predict") return cmd_predict(config, std::cerr);
      if (name == "interpret") return cmd_interpret(config, std::cerr);
      if (name == "gradcheck") return cmd_gradcheck(config, break_st, std::cout);
    }
  } catch (const stgsl::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const stgsl::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
