// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "smp/gates.hpp"
#include "smp/inference.hpp"
#include "smp/policy.hpp"
#include "smp/synthenv.hpp"

namespace smp {

// Every tunable in one flat-key namespace. Files hold "key = value" lines
// with '#' comments; later assignments win; CLI overrides are applied after
// the file. Unknown keys and out-of-range values are rejected by name.
struct ExperimentConfig {
  PolicyDims dims;
  GateHyper gate;
  TrainConfig train;
  ActivationBudget budget;
  EnvParams env;

  // Demo generation.
  int data_demos_per_task = 64;
  long long data_seed = 1234;
  std::vector<int> data_tasks = {0, 1, 2, 3, 4, 5};
  std::string data_path;  // dataset file; commands read or write it here

  // Evaluation.
  int eval_episodes = 100;
  int eval_max_steps = 160;
  long long eval_seed = 7;
  std::vector<int> eval_tasks = {0, 1, 2, 3, 4, 5};

  std::string ckpt_path;            // checkpoint read by eval/infer/finetune
  std::string out_dir = "smp_out";  // every command writes under this root

  // Cross-module invariants; throws std::invalid_argument naming the key.
  void validate() const;
};

// Lists the known keys in canonical order (for help text and tests).
std::vector<std::string> config_keys();

// Applies one "key=value" assignment; rejects unknown keys and bad values.
void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Parses config text; `source` names the input in error messages.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {},
                                   const std::string& source = "<config>");

// Reads a config file (empty path = defaults), applies overrides, validates.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});

// Canonical "key = value" rendering of every key; parsing it back is exact.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace smp
