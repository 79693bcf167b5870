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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "udm/dynamic_margin.h"
#include "udm/error.h"

namespace udm {
namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

std::vector<Vec> sorted_centroids(const KMeansResult& r) {
  std::vector<Vec> c(r.centroids.begin(), r.centroids.end());
  std::sort(c.begin(), c.end(), [](const Vec& a, const Vec& b) { return a[0] < b[0]; });
  return c;
}

TEST(KMeans2, SymmetricPairs) {
  const std::vector<Vec> pts = {v2(0, 0), v2(0, 0), v2(2, 0), v2(2, 0)};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = kmeans2(pts, seed);
    ASSERT_TRUE(r.has_value());
    const auto c = sorted_centroids(*r);
    EXPECT_EQ(c[0], v2(0, 0));
    EXPECT_EQ(c[1], v2(2, 0));
    EXPECT_EQ(r->wcss, 0.0);
    EXPECT_TRUE(r->converged);
  }
}

TEST(KMeans2, LineFixtureMatchesExhaustiveOptimum) {
  const std::vector<Vec> pts = {v2(0, 0), v2(1, 0), v2(10, 0), v2(11, 0)};
  const auto r = kmeans2(pts, 3);
  ASSERT_TRUE(r.has_value());
  const auto c = sorted_centroids(*r);
  EXPECT_EQ(c[0], v2(0.5, 0));
  EXPECT_EQ(c[1], v2(10.5, 0));
  EXPECT_DOUBLE_EQ(r->wcss, oracle::exhaustive_two_means(pts));
}

TEST(KMeans2, DegenerateInputs) {
  EXPECT_FALSE(kmeans2(std::vector<Vec>{v2(1, 1)}, 0).has_value());
  EXPECT_FALSE(kmeans2(std::vector<Vec>{v2(1, 1), v2(1, 1), v2(1, 1)}, 0).has_value());
  EXPECT_FALSE(kmeans2(std::vector<Vec>{}, 0).has_value());
  EXPECT_THROW(kmeans2(std::vector<Vec>{v2(1, 1), Vec::Zero(3)}, 0), InputError);
}

TEST(KMeans2, ResultInvariants) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> n(2, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Vec> pts;
    const int count = n(rng);
    for (int i = 0; i < count; ++i) pts.push_back(oracle::random_vector(rng, 3));
    const auto r = kmeans2(pts, trial);
    ASSERT_TRUE(r.has_value());
    std::array<int, 2> sizes{0, 0};
    std::array<Vec, 2> sums{Vec::Zero(3), Vec::Zero(3)};
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const int a = r->assignment[i];
      ++sizes[a];
      sums[a] += pts[i];
      if (r->converged) {
        const double d0 = (pts[i] - r->centroids[0]).squaredNorm();
        const double d1 = (pts[i] - r->centroids[1]).squaredNorm();
        EXPECT_EQ(a, d1 < d0 ? 1 : 0);
      }
    }
    EXPECT_GT(sizes[0], 0);
    EXPECT_GT(sizes[1], 0);
    for (int c = 0; c < 2; ++c) {
      EXPECT_LT((sums[c] / sizes[c] - r->centroids[c]).norm(), 1e-12);
    }
    EXPECT_NEAR(r->wcss, wcss(pts, r->assignment), 1e-12);
    EXPECT_LE(r->iterations, kKMeansMaxIterations);
  }
}

TEST(KMeans2, NeverBeatsExhaustiveOptimumAndIsLloydStable) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> n(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec> pts;
    const int count = n(rng);
    for (int i = 0; i < count; ++i) pts.push_back(oracle::random_vector(rng, 2));
    const auto r = kmeans2(pts, trial);
    ASSERT_TRUE(r.has_value());
    EXPECT_GE(r->wcss, oracle::exhaustive_two_means(pts) - 1e-9);
  }
}

TEST(KMeans2, SeparatedGroupsReachExhaustiveOptimum) {
  std::mt19937_64 rng(18);
  std::uniform_int_distribution<int> n(2, 12);
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec> pts;
    const int count = n(rng);
    const Vec dir = oracle::random_vector(rng, 2);
    const Vec shift = 10.0 * dir / dir.norm();
    for (int i = 0; i < count; ++i) {
      pts.push_back(oracle::random_vector(rng, 2) + (i % 2 ? shift : Vec::Zero(2)));
    }
    const auto r = kmeans2(pts, trial);
    if (r->wcss - oracle::exhaustive_two_means(pts) <= 1e-9) ++hits;
  }
  EXPECT_GE(hits, 95);
}

TEST(KMeans2, Deterministic) {
  std::mt19937_64 rng(6);
  std::vector<Vec> pts;
  for (int i = 0; i < 15; ++i) pts.push_back(oracle::random_vector(rng, 4));
  const auto a = kmeans2(pts, 9), b = kmeans2(pts, 9);
  EXPECT_EQ(a->assignment, b->assignment);
  EXPECT_EQ(a->centroids[0], b->centroids[0]);
  EXPECT_EQ(a->wcss, b->wcss);
}

TEST(DynamicMargin, Examples) {
  const std::vector<Vec> pairs = {v2(0, 0), v2(0, 0), v2(2, 0), v2(2, 0)};
  auto m = dynamic_margin("P1", pairs, 1.0, 0);
  EXPECT_EQ(m.alpha, 2.0);
  EXPECT_EQ(m.centroid_distance, 2.0);
  EXPECT_FALSE(m.fallback_used);
  EXPECT_EQ(m.patient_id, "P1");

  m = dynamic_margin("P1", std::vector<Vec>(5, v2(3, 3)), 1.0, 0);
  EXPECT_TRUE(m.fallback_used);
  EXPECT_EQ(m.alpha, 1.0);

  const std::vector<Vec> far = {v2(0, 0), v2(0, 0), v2(50, 0), v2(50, 0)};
  m = dynamic_margin("P1", far, 1.0, 0);
  EXPECT_EQ(m.centroid_distance, 50.0);
  EXPECT_EQ(m.alpha, kMaxDynamicMargin);

  const std::vector<Vec> near = {v2(0, 0), v2(0.01, 0)};
  m = dynamic_margin("P1", near, 1.0, 0);
  EXPECT_EQ(m.alpha, kMinDynamicMargin);
}

TEST(DynamicMargin, WellSeparatedEqualsCentroidDistanceExactly) {
  // Integer coordinates and cluster sizes of 4 keep every mean exact.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coord(-3, 3), offset(20, 60);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec> pts;
    const Vec shift = v2(offset(rng), offset(rng));
    Vec s0 = Vec::Zero(2), s1 = Vec::Zero(2);
    for (int i = 0; i < 4; ++i) {
      pts.push_back(v2(coord(rng), coord(rng)));
      s0 += pts.back();
      pts.push_back(shift + v2(coord(rng), coord(rng)));
      s1 += pts.back();
    }
    const double want = oracle::distance(s0 / 4.0, s1 / 4.0);
    const auto m = dynamic_margin("P", pts, 1.0, trial);
    EXPECT_EQ(m.centroid_distance, want);
    EXPECT_EQ(m.alpha, std::clamp(want, kMinDynamicMargin, kMaxDynamicMargin));
  }
}

TEST(DynamicMargin, TranslationInvariantAndScalesLinearly) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec> pts, moved, scaled;
    const Vec t = oracle::random_vector(rng, 3, 5.0);
    for (int i = 0; i < 10; ++i) {
      pts.push_back(oracle::random_vector(rng, 3));
      moved.push_back(pts.back() + t);
      scaled.push_back(pts.back() * 2.0);
    }
    const auto a = dynamic_margin("P", pts, 1.0, trial);
    const auto b = dynamic_margin("P", moved, 1.0, trial);
    const auto c = dynamic_margin("P", scaled, 1.0, trial);
    EXPECT_NEAR(a.centroid_distance, b.centroid_distance, 1e-9);
    EXPECT_NEAR(2.0 * a.centroid_distance, c.centroid_distance, 1e-9);
  }
}

}  // namespace
}  // namespace udm
