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

#ifndef UDM_CHECKPOINT_H_
#define UDM_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "udm/cohort.h"
#include "udm/embedder.h"
#include "udm/evaluation.h"
#include "udm/pipeline.h"

namespace udm {

// Everything needed to resume training or evaluate a run. Arrays are stored
// row-major as JSON decimals with shortest round-trip formatting, so
// save -> load is bit-exact.
struct Checkpoint {
  std::string mode;
  std::uint64_t seed = 0;
  int epoch = 0;  // stage-1 epochs completed
  std::string config_fingerprint;
  EmbedderConfig embedder;
  EmbedderParams params;
  std::optional<AdamState> optimizer;
  std::optional<ClassifierHead> head;
  SplitSpec split;
};

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);  // throws IoError
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Single-line JSON records for the per-epoch logs.
std::string to_json_line(const TrainLogRecord& record);
std::string to_json_line(const Stage2LogRecord& record);

std::string report_to_json(const MetricsReport& report, int indent = 2);

// Per-mode mean/std tables plus every run.
std::string experiment_to_json(const ExperimentResult& result, int indent = 2);

// Aligned text table, one row per mode, columns in kMetricColumns order,
// cells formatted as mean±std in percent.
std::string comparison_table(const ExperimentResult& result);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace udm

#endif  // UDM_CHECKPOINT_H_
