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

#ifndef UDM_COHORT_H_
#define UDM_COHORT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udm/embedder.h"

namespace udm {

enum class Label : std::uint8_t { normal = 0, ud = 1 };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);  // throws InputError

struct LesionSample {
  std::string patient_id;
  std::string lesion_id;
  Label label = Label::normal;
  Vec features;
  // Copy number within an oversampled set; 0 for originals.
  int replica = 0;
};

using Cohort = std::vector<LesionSample>;

// Synthetic two-tier cohort. Each patient x has a phenotype center
// c_x ~ N(0, center_spread^2 I); normal lesions scatter around c_x with
// normal_noise, and UD lesions around c_x + m_x u_x where u_x is a random
// unit direction and m_x ~ U[ud_offset_min, ud_offset_max] is fixed per
// patient.
struct GeneratorConfig {
  int n_patients = 37;
  int min_lesions = 100;
  int max_lesions = 400;
  double ud_fraction = 1.0 / 33.0;
  int feature_dim = 16;
  double center_spread = 1.0;
  double normal_noise = 0.35;
  double ud_offset_min = 0.8;
  double ud_offset_max = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Cohort generate_cohort(const GeneratorConfig& config);

// Patients in ascending id order with their sample positions.
struct PatientIndex {
  std::vector<std::string> patients;
  std::vector<std::vector<std::size_t>> members;

  static PatientIndex build(std::span<const LesionSample> samples);
  std::size_t size() const { return patients.size(); }
};

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;

  void validate() const;
};

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Random partition of patients honoring the fractions by patient count;
// every part gets at least one patient with a UD lesion (up to 100 draws).
SplitSpec split_by_patient(std::span<const LesionSample> cohort,
                           const SplitFractions& fractions, std::uint64_t seed);

// Samples whose patient is in `patients`, in cohort order.
Cohort select_patients(std::span<const LesionSample> cohort,
                       std::span<const std::string> patients);

// Every UD sample repeated `factor` times (replica 0..factor-1, adjacent);
// normals once. Relative order is preserved.
Cohort oversample_minority(std::span<const LesionSample> samples, int factor = 10);

struct CohortSummary {
  struct PatientCounts {
    std::string patient_id;
    std::int64_t normal = 0;
    std::int64_t ud = 0;
  };
  std::vector<PatientCounts> patients;
  std::int64_t normal = 0;
  std::int64_t ud = 0;
  // normal / ud, 0 when there is no UD sample.
  double imbalance_ratio() const;
};

CohortSummary summarize(std::span<const LesionSample> cohort);
std::string format_summary(const CohortSummary& summary);

// One JSON object per line: patient_id, lesion_id, label, features.
void save_cohort(std::span<const LesionSample> cohort, const std::filesystem::path& path);
Cohort load_cohort(const std::filesystem::path& path);

std::string cohort_to_jsonl(std::span<const LesionSample> cohort);
Cohort cohort_from_jsonl(std::string_view text);

}  // namespace udm

#endif  // UDM_COHORT_H_
