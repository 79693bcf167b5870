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

#ifndef UDM_EVALUATION_H_
#define UDM_EVALUATION_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udm/cohort.h"
#include "udm/embedder.h"

namespace udm {

// UD is the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;

  std::int64_t total() const { return tp + fn + tn + fp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> actual);

// How per-class precision/recall/F1 are combined: plain class mean, or
// weighted by class support.
enum class Averaging { macro, weighted };

std::string_view to_string(Averaging averaging);
Averaging parse_averaging(std::string_view text);

// Undefined ratios (zero denominators) are reported as 0 and the name of the
// affected quantity is listed in `degenerate`.
struct BasicMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::string> degenerate;

  double balanced_accuracy() const { return 0.5 * (sensitivity + specificity); }
};

BasicMetrics basic_metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::macro);

// Mann-Whitney estimate of P(score_ud > score_normal) with ties counted as
// one half. nullopt when only one class is present.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct MetricsReport {
  std::string mode;
  std::uint64_t seed = 0;
  ConfusionMatrix counts;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double roc_auc = 0.0;
  std::vector<std::string> degenerate;
};

MetricsReport make_report(std::string mode, std::uint64_t seed,
                          std::span<const Label> predicted, std::span<const double> prob_ud,
                          std::span<const Label> actual, Averaging averaging = Averaging::macro);

// Column order of the comparison table.
inline constexpr std::array<std::string_view, 7> kMetricColumns = {
    "specificity", "sensitivity", "recall", "precision", "f1", "auc", "accuracy"};

// Metric values in kMetricColumns order.
std::array<double, 7> metric_row(const MetricsReport& report);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
};

struct AggregateReport {
  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> runs;
  std::array<MeanStd, 7> columns;  // kMetricColumns order
};

AggregateReport aggregate(std::string mode, std::vector<MetricsReport> runs);

// CSV with header patient_id,lesion_id,label,e_0..e_{D-1}; rows sorted by
// (patient_id, lesion_id) with input order breaking ties.
void export_embeddings(const EmbedderParams& params, std::span<const LesionSample> samples,
                       const std::filesystem::path& path);
std::string embeddings_csv(const EmbedderParams& params, std::span<const LesionSample> samples);

struct Projection2d {
  std::vector<std::array<double, 2>> points;
  std::array<double, 2> explained_variance{0.0, 0.0};
};

// Mean-centred projection on the two leading principal directions, found by
// power iteration with deflation. Each direction's first nonzero loading is
// positive. A missing second direction yields a zero second coordinate.
Projection2d pca_2d(std::span<const Vec> embeddings);

}  // namespace udm

#endif  // UDM_EVALUATION_H_
