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

#include "udm/dynamic_margin.h"

#include <algorithm>
#include <limits>
#include <random>

#include "udm/error.h"
#include "udm/losses.h"
#include "udm/random.h"

namespace udm {

double wcss(std::span<const Vec> points, std::span<const int> assignment) {
  if (points.size() != assignment.size()) throw InputError("wcss: size mismatch");
  std::array<Vec, 2> sums;
  std::array<int, 2> counts{0, 0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int c = assignment[i];
    if (counts[c]++ == 0) sums[c] = points[i]; else sums[c] += points[i];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int c = assignment[i];
    total += (points[i] - sums[c] / counts[c]).squaredNorm();
  }
  return total;
}

namespace {

bool has_two_distinct(std::span<const Vec> points) {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i] != points[0]) return true;
  }
  return false;
}

// Assigns each point to its nearer centroid (ties -> 0). Returns true when
// some assignment changed.
bool assign(std::span<const Vec> points, const std::array<Vec, 2>& centroids,
            std::vector<int>& assignment) {
  bool changed = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d0 = (points[i] - centroids[0]).squaredNorm();
    const double d1 = (points[i] - centroids[1]).squaredNorm();
    const int c = d1 < d0 ? 1 : 0;
    changed |= assignment[i] != c;
    assignment[i] = c;
  }
  return changed;
}

// Moves the point farthest from its centroid into an empty cluster.
void repair_empty(std::span<const Vec> points, const std::array<Vec, 2>& centroids,
                  std::vector<int>& assignment) {
  std::array<int, 2> counts{0, 0};
  for (int c : assignment) ++counts[c];
  for (int empty = 0; empty < 2; ++empty) {
    if (counts[empty] != 0) continue;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = (points[i] - centroids[assignment[i]]).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    assignment[far] = empty;
    ++counts[empty];
  }
}

std::array<Vec, 2> means(std::span<const Vec> points, const std::vector<int>& assignment) {
  const Eigen::Index dim = points.front().size();
  std::array<Vec, 2> sums{Vec::Zero(dim), Vec::Zero(dim)};
  std::array<int, 2> counts{0, 0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    sums[assignment[i]] += points[i];
    ++counts[assignment[i]];
  }
  return {sums[0] / counts[0], sums[1] / counts[1]};
}

}  // namespace

std::optional<KMeansResult> kmeans2(std::span<const Vec> points, std::uint64_t seed) {
  if (points.size() < 2 || !has_two_distinct(points)) return std::nullopt;
  const Eigen::Index dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw InputError("kmeans2: ragged points");
  }

  // k-means++: first centroid uniform, second proportional to squared distance.
  Rng rng(derive_seed(seed, "kmeans2"));
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  KMeansResult result;
  result.centroids[0] = points[first(rng)];
  std::vector<double> weights(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    weights[i] = (points[i] - result.centroids[0]).squaredNorm();
  }
  std::discrete_distribution<std::size_t> second(weights.begin(), weights.end());
  result.centroids[1] = points[second(rng)];

  result.assignment.assign(points.size(), -1);
  for (int it = 1; it <= kKMeansMaxIterations; ++it) {
    assign(points, result.centroids, result.assignment);
    repair_empty(points, result.centroids, result.assignment);
    auto next = means(points, result.assignment);
    const double shift = std::max((next[0] - result.centroids[0]).norm(),
                                  (next[1] - result.centroids[1]).norm());
    result.centroids = std::move(next);
    result.iterations = it;
    if (shift < kKMeansTolerance) {
      result.converged = true;
      break;
    }
  }
  result.wcss = wcss(points, result.assignment);
  return result;
}

DynamicMargin dynamic_margin(const std::string& patient_id,
                             std::span<const Vec> patient_embeddings,
                             double default_alpha, std::uint64_t seed) {
  DynamicMargin out{patient_id, default_alpha, 0.0, true};
  const auto km = kmeans2(patient_embeddings, seed);
  if (!km) return out;
  out.centroid_distance = euclidean_distance(km->centroids[0], km->centroids[1]);
  out.alpha = std::clamp(out.centroid_distance, kMinDynamicMargin, kMaxDynamicMargin);
  out.fallback_used = false;
  return out;
}

}  // namespace udm
