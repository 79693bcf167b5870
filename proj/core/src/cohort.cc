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

#include "udm/cohort.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "udm/error.h"
#include "udm/random.h"

namespace udm {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Label label) {
  return label == Label::ud ? "ud" : "normal";
}

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::normal;
  if (text == "ud") return Label::ud;
  throw InputError("unknown label '" + std::string(text) + "'");
}

void GeneratorConfig::validate() const {
  if (n_patients < 1) throw ConfigError("generator: n_patients must be >= 1");
  if (min_lesions < 1 || max_lesions < min_lesions) {
    throw ConfigError("generator: need 1 <= min_lesions <= max_lesions");
  }
  if (!(ud_fraction > 0.0 && ud_fraction < 0.5)) {
    throw ConfigError("generator: ud_fraction must lie in (0, 0.5)");
  }
  if (feature_dim < 1) throw ConfigError("generator: feature_dim must be >= 1");
  if (!(center_spread > 0.0) || !(normal_noise > 0.0)) {
    throw ConfigError("generator: spreads must be positive");
  }
  if (!(ud_offset_min >= 0.0 && ud_offset_min < ud_offset_max)) {
    throw ConfigError("generator: need 0 <= ud_offset_min < ud_offset_max");
  }
}

namespace {

std::string padded(char prefix, int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return prefix + digits;
}

int digit_count(int n) { return static_cast<int>(std::to_string(std::max(n - 1, 0)).size()); }

}  // namespace

Cohort generate_cohort(const GeneratorConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "cohort.generate"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> lesion_count(config.min_lesions, config.max_lesions);
  std::uniform_real_distribution<double> offset(config.ud_offset_min, config.ud_offset_max);

  const int dim = config.feature_dim;
  const int pid_width = std::max(2, digit_count(config.n_patients));
  const int lid_width = std::max(3, digit_count(config.max_lesions));

  Cohort cohort;
  for (int p = 0; p < config.n_patients; ++p) {
    Vec center(dim);
    for (int d = 0; d < dim; ++d) center[d] = config.center_spread * gauss(rng);
    Vec direction(dim);
    do {
      for (int d = 0; d < dim; ++d) direction[d] = gauss(rng);
    } while (direction.norm() == 0.0);
    direction.normalize();
    const double magnitude = offset(rng);

    const int n = lesion_count(rng);
    const int n_ud = std::clamp(static_cast<int>(std::lround(n * config.ud_fraction)), 1, n);
    std::vector<Label> labels(static_cast<std::size_t>(n), Label::normal);
    std::fill(labels.begin(), labels.begin() + n_ud, Label::ud);
    std::shuffle(labels.begin(), labels.end(), rng);

    const std::string pid = padded('P', p, pid_width);
    for (int l = 0; l < n; ++l) {
      LesionSample s;
      s.patient_id = pid;
      s.lesion_id = padded('L', l, lid_width);
      s.label = labels[static_cast<std::size_t>(l)];
      s.features = center;
      if (s.label == Label::ud) s.features += magnitude * direction;
      for (int d = 0; d < dim; ++d) s.features[d] += config.normal_noise * gauss(rng);
      cohort.push_back(std::move(s));
    }
  }
  return cohort;
}

PatientIndex PatientIndex::build(std::span<const LesionSample> samples) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].patient_id].push_back(i);
  PatientIndex index;
  for (auto& [pid, members] : groups) {
    index.patients.push_back(pid);
    index.members.push_back(std::move(members));
  }
  return index;
}

void SplitFractions::validate() const {
  for (double f : {train, validation, test}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-6) {
    throw ConfigError("split fractions must sum to 1");
  }
}

SplitSpec split_by_patient(std::span<const LesionSample> cohort,
                           const SplitFractions& fractions, std::uint64_t seed) {
  fractions.validate();
  const auto index = PatientIndex::build(cohort);
  const int n = static_cast<int>(index.size());
  if (n < 3) throw InputError("split_by_patient: need at least 3 patients");

  int n_train = std::max(1, static_cast<int>(std::lround(fractions.train * n)));
  int n_val = std::max(1, static_cast<int>(std::lround(fractions.validation * n)));
  while (n_train + n_val > n - 1) {
    if (n_train >= n_val && n_train > 1) --n_train; else --n_val;
  }

  std::set<std::string> with_ud;
  for (const auto& s : cohort) {
    if (s.label == Label::ud) with_ud.insert(s.patient_id);
  }
  auto covered = [&](const std::vector<std::string>& part) {
    return std::any_of(part.begin(), part.end(),
                       [&](const std::string& p) { return with_ud.count(p) > 0; });
  };

  Rng rng(derive_seed(seed, "cohort.split"));
  std::vector<std::string> order = index.patients;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::shuffle(order.begin(), order.end(), rng);
    SplitSpec split;
    split.train.assign(order.begin(), order.begin() + n_train);
    split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    split.test.assign(order.begin() + n_train + n_val, order.end());
    if (covered(split.train) && covered(split.validation) && covered(split.test)) {
      for (auto* part : {&split.train, &split.validation, &split.test}) {
        std::sort(part->begin(), part->end());
      }
      return split;
    }
  }
  throw InputError("split_by_patient: could not place a UD patient in every split");
}

Cohort select_patients(std::span<const LesionSample> cohort,
                       std::span<const std::string> patients) {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  Cohort out;
  for (const auto& s : cohort) {
    if (wanted.count(s.patient_id) > 0) out.push_back(s);
  }
  return out;
}

Cohort oversample_minority(std::span<const LesionSample> samples, int factor) {
  if (factor < 1) throw InputError("oversample_minority: factor must be >= 1");
  Cohort out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.label != Label::ud) {
      out.push_back(s);
      continue;
    }
    for (int r = 0; r < factor; ++r) {
      out.push_back(s);
      out.back().replica = r;
    }
  }
  return out;
}

double CohortSummary::imbalance_ratio() const {
  return ud == 0 ? 0.0 : static_cast<double>(normal) / static_cast<double>(ud);
}

CohortSummary summarize(std::span<const LesionSample> cohort) {
  std::map<std::string, CohortSummary::PatientCounts> per;
  CohortSummary out;
  for (const auto& s : cohort) {
    auto& c = per[s.patient_id];
    c.patient_id = s.patient_id;
    if (s.label == Label::ud) {
      ++c.ud;
      ++out.ud;
    } else {
      ++c.normal;
      ++out.normal;
    }
  }
  for (auto& [_, c] : per) out.patients.push_back(c);
  return out;
}

std::string format_summary(const CohortSummary& summary) {
  std::ostringstream os;
  os << "patient   normal      ud\n";
  char line[96];
  for (const auto& p : summary.patients) {
    std::snprintf(line, sizeof(line), "%-8s %7lld %7lld\n", p.patient_id.c_str(),
                  static_cast<long long>(p.normal), static_cast<long long>(p.ud));
    os << line;
  }
  std::snprintf(line, sizeof(line), "patients=%zu normal=%lld ud=%lld ratio=1:%.2f\n",
                summary.patients.size(), static_cast<long long>(summary.normal),
                static_cast<long long>(summary.ud), summary.imbalance_ratio());
  os << line;
  return os.str();
}

std::string cohort_to_jsonl(std::span<const LesionSample> cohort) {
  std::string out;
  for (const auto& s : cohort) {
    ojson j;
    j["patient_id"] = s.patient_id;
    j["lesion_id"] = s.lesion_id;
    j["label"] = to_string(s.label);
    j["features"] = std::vector<double>(s.features.data(), s.features.data() + s.features.size());
    if (s.replica != 0) j["replica"] = s.replica;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Cohort cohort_from_jsonl(std::string_view text) {
  Cohort cohort;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  Eigen::Index dim = -1;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const auto fail = [&](const std::string& why) {
      throw IoError("cohort line " + std::to_string(line_no) + ": " + why);
    };
    LesionSample s;
    try {
      const auto j = ojson::parse(line);
      if (!j.is_object()) fail("expected a JSON object");
      for (const char* key : {"patient_id", "lesion_id", "label", "features"}) {
        if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
      }
      s.patient_id = j.at("patient_id").get<std::string>();
      s.lesion_id = j.at("lesion_id").get<std::string>();
      s.label = parse_label(j.at("label").get<std::string>());
      const auto features = j.at("features").get<std::vector<double>>();
      s.features = Eigen::Map<const Vec>(features.data(), static_cast<Eigen::Index>(features.size()));
      if (j.contains("replica")) s.replica = j.at("replica").get<int>();
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
    if (!s.features.allFinite()) fail("non-finite feature");
    if (dim >= 0 && s.features.size() != dim) fail("inconsistent feature length");
    dim = s.features.size();
    if (s.replica == 0 && !seen.emplace(s.patient_id, s.lesion_id).second) {
      fail("duplicate (patient_id, lesion_id) = (" + s.patient_id + ", " + s.lesion_id + ")");
    }
    cohort.push_back(std::move(s));
  }
  return cohort;
}

void save_cohort(std::span<const LesionSample> cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << cohort_to_jsonl(cohort);
  if (!out) throw IoError("failed writing " + path.string());
}

Cohort load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return cohort_from_jsonl(buf.str());
}

}  // namespace udm
