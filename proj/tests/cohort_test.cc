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

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "udm/cohort.h"
#include "udm/error.h"

namespace udm {
namespace {

GeneratorConfig seeded(std::uint64_t seed) {
  GeneratorConfig g;
  g.seed = seed;
  return g;
}

TEST(Generator, DefaultsMatchCohortShape) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = generate_cohort(seeded(seed));
    const auto s = summarize(c);
    EXPECT_EQ(s.patients.size(), 37u);
    EXPECT_GE(s.imbalance_ratio(), 29.0);
    EXPECT_LE(s.imbalance_ratio(), 36.0);
    // Within 10% of the 1:32 target.
    EXPECT_NEAR(static_cast<double>(s.ud) / static_cast<double>(s.normal + s.ud), 1.0 / 33.0,
                0.1 / 33.0);
    std::set<std::pair<std::string, std::string>> ids;
    for (const auto& p : s.patients) {
      EXPECT_GE(p.normal + p.ud, 100);
      EXPECT_LE(p.normal + p.ud, 400);
      EXPECT_GE(p.ud, 1);
    }
    for (const auto& x : c) {
      EXPECT_TRUE(x.features.allFinite());
      EXPECT_EQ(x.features.size(), 16);
      EXPECT_TRUE(ids.emplace(x.patient_id, x.lesion_id).second);
    }
  }
}

TEST(Generator, DeterministicPerSeed) {
  EXPECT_EQ(cohort_to_jsonl(generate_cohort(seeded(3))), cohort_to_jsonl(generate_cohort(seeded(3))));
  EXPECT_NE(cohort_to_jsonl(generate_cohort(seeded(3))), cohort_to_jsonl(generate_cohort(seeded(4))));
}

TEST(Generator, ZeroNoiseCollapsesNormalsOntoCenter) {
  GeneratorConfig g = seeded(1);
  g.n_patients = 5;
  g.normal_noise = std::numeric_limits<double>::denorm_min();
  const auto c = generate_cohort(g);
  std::map<std::string, Vec> first;
  for (const auto& x : c) {
    if (x.label != Label::normal) continue;
    const auto [it, inserted] = first.emplace(x.patient_id, x.features);
    if (!inserted) EXPECT_EQ(x.features, it->second);
  }
  // UD lesions sit at the same offset from the center.
  std::map<std::string, double> offset;
  for (const auto& x : c) {
    if (x.label != Label::ud) continue;
    const double d = (x.features - first.at(x.patient_id)).norm();
    EXPECT_GE(d, g.ud_offset_min - 1e-12);
    EXPECT_LE(d, g.ud_offset_max + 1e-12);
    const auto [it, inserted] = offset.emplace(x.patient_id, d);
    if (!inserted) EXPECT_EQ(d, it->second);
  }
}

TEST(Generator, UdLesionsCanSitNearerAnotherPatientsCenter) {
  // m_hi < 2 sigma_c in four dimensions. Centers are recovered exactly with
  // vanishing noise; a UD counts when its nearest center belongs to someone
  // else. Center spacing grows like sqrt(feature_dim), so the overlap fades
  // at 16 dimensions with these spreads.
  int seeds_with_overlap = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    GeneratorConfig g = seeded(static_cast<std::uint64_t>(seed));
    g.feature_dim = 4;
    g.ud_offset_max = 1.9 * g.center_spread;
    g.normal_noise = std::numeric_limits<double>::denorm_min();
    const auto c = generate_cohort(g);
    std::map<std::string, Vec> centers;
    for (const auto& x : c) {
      if (x.label == Label::normal) centers.emplace(x.patient_id, x.features);
    }
    bool overlap = false;
    for (const auto& x : c) {
      if (x.label != Label::ud) continue;
      std::string nearest;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [pid, center] : centers) {
        const double d = (x.features - center).norm();
        if (d < best) {
          best = d;
          nearest = pid;
        }
      }
      overlap |= nearest != x.patient_id;
    }
    seeds_with_overlap += overlap ? 1 : 0;
  }
  EXPECT_GE(seeds_with_overlap * 2, seeds);
}

TEST(Generator, RejectsBadConfig) {
  auto bad = [](auto mutate) {
    GeneratorConfig g;
    mutate(g);
    return g;
  };
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.normal_noise = 0.0; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.center_spread = -1.0; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.ud_offset_min = 3.0; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.ud_fraction = 0.5; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.ud_fraction = 0.0; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.min_lesions = 500; })), ConfigError);
  EXPECT_THROW(generate_cohort(bad([](auto& g) { g.feature_dim = 0; })), ConfigError);
}

Cohort small_cohort(int patients, int ud_patients) {
  Cohort c;
  for (int p = 0; p < patients; ++p) {
    for (int l = 0; l < 4; ++l) {
      const Label label = (p < ud_patients && l == 0) ? Label::ud : Label::normal;
      c.push_back({"P" + std::to_string(10 + p), "L" + std::to_string(l), label,
                   Vec::Constant(2, p + 0.25 * l), 0});
    }
  }
  return c;
}

TEST(Split, CountsAndPartition) {
  const auto c = small_cohort(10, 10);
  const auto s = split_by_patient(c, SplitFractions{}, 5);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.validation.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (const auto& pid : *part) EXPECT_TRUE(all.insert(pid).second);
  }
  EXPECT_EQ(all.size(), 10u);
  // Sample-level: no patient's lesions appear in two parts.
  const auto train = select_patients(c, s.train);
  const auto test = select_patients(c, s.test);
  for (const auto& a : train) {
    for (const auto& b : test) EXPECT_NE(a.patient_id, b.patient_id);
  }
  EXPECT_EQ(train.size() + select_patients(c, s.validation).size() + test.size(), c.size());
}

TEST(Split, DefaultCohortSizes) {
  const auto c = generate_cohort(seeded(2));
  const auto s = split_by_patient(c, SplitFractions{}, 2);
  EXPECT_EQ(s.train.size(), 22u);
  EXPECT_EQ(s.validation.size(), 7u);
  EXPECT_EQ(s.test.size(), 8u);
}

TEST(Split, EveryPartHasAUdPatient) {
  const auto c = small_cohort(12, 3);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = split_by_patient(c, SplitFractions{}, seed);
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      const auto samples = select_patients(c, *part);
      EXPECT_TRUE(std::any_of(samples.begin(), samples.end(),
                              [](const auto& x) { return x.label == Label::ud; }));
    }
  }
}

TEST(Split, DeterministicAndErrors) {
  const auto c = small_cohort(10, 10);
  const auto a = split_by_patient(c, SplitFractions{}, 9);
  const auto b = split_by_patient(c, SplitFractions{}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_THROW(split_by_patient(small_cohort(2, 2), SplitFractions{}, 0), InputError);
  EXPECT_THROW(split_by_patient(small_cohort(10, 1), SplitFractions{}, 0), InputError);
  EXPECT_THROW(split_by_patient(c, SplitFractions{0.5, 0.2, 0.2}, 0), ConfigError);
  EXPECT_THROW(split_by_patient(c, SplitFractions{1.0, 0.0, 0.0}, 0), ConfigError);
}

TEST(Oversample, CountsAndMultiset) {
  Cohort c;
  for (int i = 0; i < 105; ++i) {
    c.push_back({"P1", "L" + std::to_string(i), i % 21 == 0 ? Label::ud : Label::normal,
                 Vec::Constant(3, i * 0.1), 0});
  }
  const auto o = oversample_minority(c, 10);
  const auto s = summarize(o);
  EXPECT_EQ(s.ud, 50);
  EXPECT_EQ(s.normal, 100);
  // Multiset oracle: each UD feature vector appears exactly 10 times with
  // replica indices 0..9; normals are untouched.
  std::map<std::string, std::multiset<int>> replicas;
  for (const auto& x : o) {
    if (x.label == Label::ud) {
      replicas[x.lesion_id].insert(x.replica);
      const auto it = std::find_if(c.begin(), c.end(),
                                   [&](const auto& y) { return y.lesion_id == x.lesion_id; });
      EXPECT_EQ(it->features, x.features);
    } else {
      EXPECT_EQ(x.replica, 0);
    }
  }
  EXPECT_EQ(replicas.size(), 5u);
  for (const auto& [lid, r] : replicas) {
    EXPECT_EQ(r, (std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9})) << lid;
  }
}

TEST(Oversample, FactorOneIsIdentityAndZeroIsRejected) {
  const auto c = small_cohort(4, 2);
  const auto o = oversample_minority(c, 1);
  ASSERT_EQ(o.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(o[i].lesion_id, c[i].lesion_id);
    EXPECT_EQ(o[i].features, c[i].features);
  }
  EXPECT_THROW(oversample_minority(c, 0), InputError);
}

TEST(Jsonl, RoundTripIsExact) {
  auto c = generate_cohort(seeded(6));
  c = oversample_minority(c, 3);
  const auto text = cohort_to_jsonl(c);
  const auto back = cohort_from_jsonl(text);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back[i].patient_id, c[i].patient_id);
    EXPECT_EQ(back[i].lesion_id, c[i].lesion_id);
    EXPECT_EQ(back[i].label, c[i].label);
    EXPECT_EQ(back[i].replica, c[i].replica);
    EXPECT_EQ(back[i].features, c[i].features);
  }
  EXPECT_EQ(cohort_to_jsonl(back), text);

  const auto path = std::filesystem::path(testing::TempDir()) / "cohort_roundtrip.jsonl";
  save_cohort(c, path);
  EXPECT_EQ(cohort_to_jsonl(load_cohort(path)), text);
}

TEST(Jsonl, EmptyAndMalformedInput) {
  EXPECT_TRUE(cohort_from_jsonl("").empty());
  const std::string ok =
      R"({"patient_id":"P1","lesion_id":"L1","label":"normal","features":[1.0,2.0]})";
  const std::string no_label = R"({"patient_id":"P1","lesion_id":"L2","features":[1.0,2.0]})";
  try {
    cohort_from_jsonl(ok + "\n" + no_label + "\n");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
  EXPECT_THROW(cohort_from_jsonl(ok + "\n" + ok + "\n"), IoError);
  EXPECT_THROW(cohort_from_jsonl("{not json\n"), IoError);
  EXPECT_THROW(
      cohort_from_jsonl(R"({"patient_id":"P","lesion_id":"L","label":"odd","features":[1]})"),
      IoError);
  EXPECT_THROW(load_cohort("/nonexistent/cohort.jsonl"), IoError);
}

TEST(Summary, Format) {
  const auto s = summarize(small_cohort(3, 1));
  EXPECT_EQ(s.normal, 11);
  EXPECT_EQ(s.ud, 1);
  EXPECT_DOUBLE_EQ(s.imbalance_ratio(), 11.0);
  const auto text = format_summary(s);
  EXPECT_NE(text.find("patients=3 normal=11 ud=1 ratio=1:11.00"), std::string::npos);
  EXPECT_EQ(summarize(small_cohort(3, 0)).imbalance_ratio(), 0.0);
}

}  // namespace
}  // namespace udm
