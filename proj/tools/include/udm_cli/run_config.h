// Copyright 2026 The udmetric Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UDM_CLI_RUN_CONFIG_H_
#define UDM_CLI_RUN_CONFIG_H_

#include <cstdint>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "udm/cohort.h"
#include "udm/pipeline.h"

namespace udm::cli {

// Full configuration for every command. One root seed drives the generator
// and the patient split; `experiment.seeds` lists the per-run seeds used by
// compare, and train uses the root seed as its run seed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string mode = "dmt_quad";
  std::string out = "runs";
  std::string dataset;     // empty: generate from [generator]
  std::string checkpoint;  // evaluate / export-embeddings input, train resume
  std::string eval_split = "test";
  int gradcheck_seeds = 5;
  double gradcheck_tolerance = 1e-4;
  bool gradcheck_corrupt = false;
  GeneratorConfig generator;
  ExperimentConfig experiment;

  // Cross-field checks; throws ConfigError.
  void validate() const;
  GeneratorConfig effective_generator() const;
  std::uint64_t split_seed() const;
};

// Key-value binding between TOML names ("stage1.epochs") and RunConfig
// fields. Values are the raw strings CLI11's TOML reader produces; arrays
// arrive as several strings.
struct ConfigKey {
  std::string name;
  std::function<void(const std::vector<std::string>&)> set;
  std::function<std::string()> get;  // TOML literal
};

std::vector<ConfigKey> config_keys(RunConfig& config);

// Throws ConfigError on unknown keys or bad values.
void apply_toml(RunConfig& config, std::istream& in);
void apply_override(RunConfig& config, std::string_view assignment);  // "key=value"
void set_value(RunConfig& config, std::string_view key, const std::vector<std::string>& values);

// Canonical TOML for the effective configuration; feeding it back through
// apply_toml reproduces the same config.
std::string dump_toml(const RunConfig& config);

// 16 hex digits of FNV-1a over dump_toml.
std::string config_hash(const RunConfig& config);

}  // namespace udm::cli

#endif  // UDM_CLI_RUN_CONFIG_H_
