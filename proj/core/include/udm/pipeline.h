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

#ifndef UDM_PIPELINE_H_
#define UDM_PIPELINE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "udm/cohort.h"
#include "udm/dynamic_margin.h"
#include "udm/embedder.h"
#include "udm/evaluation.h"
#include "udm/losses.h"
#include "udm/mining.h"

namespace udm {

// Training regimes compared by the experiment. `baseline` trains the same
// network end to end with cross-entropy; the others run metric learning
// first and fit a linear head on the frozen embedder afterwards.
enum class Mode { baseline, naive_triplet, ps_triplet, t_quad, dmt_quad };

inline constexpr std::array<Mode, 5> kAllModes = {Mode::baseline, Mode::naive_triplet,
                                                  Mode::ps_triplet, Mode::t_quad,
                                                  Mode::dmt_quad};

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);  // throws ConfigError
bool uses_quadruplets(Mode mode);

struct Stage1Config {
  Mode mode = Mode::dmt_quad;
  int epochs = 30;
  int batches_per_epoch = 50;
  SamplerConfig sampler;
  MarginSet margins;
  AdamHyper optimizer;
  SelectionStrategy strategy = SelectionStrategy::random_hard;
  // Forces every dynamic margin to margins.alpha while keeping the dynamic
  // code path; used to check that it reduces to t_quad.
  bool pin_dynamic_margin = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PatientMarginLog {
  std::string patient_id;
  double mean_alpha = 0.0;
  int batches = 0;
  int fallbacks = 0;
};

// Nearest-class-centroid quality of the current embedding on held-out data.
struct ValidationSnapshot {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
};

struct TrainLogRecord {
  int epoch = 0;
  // loss_sum / instances: the mean of every mined per-instance loss.
  double mean_loss = 0.0;
  double loss_sum = 0.0;
  std::int64_t instances = 0;
  std::int64_t batches = 0;
  std::int64_t batches_skipped = 0;
  MiningCounters counters;
  std::vector<PatientMarginLog> margins;
  std::optional<ValidationSnapshot> validation;
};

struct Stage1State {
  EmbedderParams params;
  AdamState optimizer;
  int epochs_completed = 0;
};

struct Stage1Result {
  Stage1State state;
  std::vector<TrainLogRecord> log;
  std::int64_t batches_skipped = 0;
};

struct Stage1Options {
  std::span<const LesionSample> validation;
  // Continue from a previous run; epoch numbering resumes after it.
  const Stage1State* resume = nullptr;
  std::function<void(const TrainLogRecord&)> on_epoch;
};

// Metric-learning stage. Per batch: sample X patients, embed, compute the
// per-patient margins, mine according to the mode, backpropagate the batch
// loss and take one Adam step. Batches with nothing mined are skipped.
// Throws NumericError on a non-finite loss.
Stage1Result train_stage1(std::span<const LesionSample> train,
                          const EmbedderConfig& embedder, const Stage1Config& config,
                          const Stage1Options& options = {});

// Affine map from the embedding to (normal, ud) logits.
struct ClassifierHead {
  Layer affine;

  static ClassifierHead zeros(int embedding_dim);
  Eigen::Vector2d logits(const Vec& embedding) const;
  bool operator==(const ClassifierHead&) const = default;
};

struct CrossEntropy {
  double loss = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();  // d loss / d logits
};

// -log softmax(logits)[label] with max-subtraction.
CrossEntropy cross_entropy(const Eigen::Vector2d& logits, Label label);

struct Stage2Config {
  int epochs = 60;
  int batch_size = 32;
  AdamHyper optimizer;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Stage2LogRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<ValidationSnapshot> validation;
};

struct Stage2Result {
  ClassifierHead head;
  std::vector<Stage2LogRecord> log;
  // Epoch whose head was kept (highest validation balanced accuracy, ties to
  // the earlier epoch); the last epoch without validation data.
  int best_epoch = 0;
};

// Fits only the head; `frozen` is never modified.
Stage2Result train_stage2(const EmbedderParams& frozen, std::span<const LesionSample> train,
                          const Stage2Config& config,
                          std::span<const LesionSample> validation = {});

struct BaselineResult {
  EmbedderParams params;
  ClassifierHead head;
  std::vector<Stage2LogRecord> log;
  int best_epoch = 0;
};

// Embedder and head trained jointly with cross-entropy.
BaselineResult train_baseline(std::span<const LesionSample> train,
                              const EmbedderConfig& embedder, const Stage2Config& config,
                              std::span<const LesionSample> validation = {});

struct Prediction {
  double probability_ud = 0.0;
  Label label = Label::normal;  // argmax, ties -> normal
};

Prediction predict_one(const Eigen::Vector2d& logits);
std::vector<Prediction> predict(const EmbedderParams& params, const ClassifierHead& head,
                                std::span<const LesionSample> samples);

struct ExperimentConfig {
  SplitFractions fractions;
  std::uint64_t split_seed = 0;
  int oversample_factor = 10;
  EmbedderConfig embedder;
  Stage1Config stage1;
  Stage2Config stage2;
  Stage2Config baseline;
  std::vector<Mode> modes = {kAllModes.begin(), kAllModes.end()};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  Averaging averaging = Averaging::macro;
  bool validation_snapshots = true;

  void validate() const;
};

// Everything a single (mode, seed) training run produces.
struct TrainedModel {
  Mode mode = Mode::dmt_quad;
  std::uint64_t seed = 0;
  EmbedderParams params;
  ClassifierHead head;
  std::optional<Stage1State> stage1;  // absent for baseline
  std::vector<TrainLogRecord> stage1_log;
  std::vector<Stage2LogRecord> stage2_log;
  int stage2_best_epoch = 0;
};

struct TrainModelOptions {
  const Stage1State* resume = nullptr;
  std::function<void(const TrainLogRecord&)> on_epoch;
};

// One run: stage 1 (unless baseline) then stage 2. `train` is expected to be
// oversampled already. Per-run seeds are derived from `seed`.
TrainedModel train_model(std::span<const LesionSample> train,
                         std::span<const LesionSample> validation,
                         const ExperimentConfig& config, Mode mode, std::uint64_t seed,
                         const TrainModelOptions& options = {});

MetricsReport evaluate_model(const EmbedderParams& params, const ClassifierHead& head,
                             std::span<const LesionSample> samples, std::string mode,
                             std::uint64_t seed, Averaging averaging = Averaging::macro);

struct ExperimentResult {
  SplitSpec split;
  std::vector<AggregateReport> reports;  // one per mode, in config order
};

// Splits by patient, oversamples the training part, then trains and tests
// every (mode, seed) pair.
ExperimentResult run_experiment(std::span<const LesionSample> cohort,
                                const ExperimentConfig& config);

}  // namespace udm

#endif  // UDM_PIPELINE_H_
