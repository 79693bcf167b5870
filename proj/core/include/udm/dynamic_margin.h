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

#ifndef UDM_DYNAMIC_MARGIN_H_
#define UDM_DYNAMIC_MARGIN_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udm/embedder.h"

namespace udm {

struct KMeansResult {
  std::array<Vec, 2> centroids;
  std::vector<int> assignment;  // 0 or 1 per point
  double wcss = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline constexpr int kKMeansMaxIterations = 100;
inline constexpr double kKMeansTolerance = 1e-6;

// Lloyd's algorithm for k = 2 from k-means++ seeding. Stops once no centroid
// moves more than kKMeansTolerance, or after kKMeansMaxIterations. Ties in
// assignment go to centroid 0. Returns nullopt when fewer than two distinct
// points are given.
std::optional<KMeansResult> kmeans2(std::span<const Vec> points, std::uint64_t seed);

// Within-cluster sum of squares of a fixed 2-partition.
double wcss(std::span<const Vec> points, std::span<const int> assignment);

struct DynamicMargin {
  std::string patient_id;
  double alpha = 0.0;              // clamped to [0.1, 10]
  double centroid_distance = 0.0;  // before clamping; 0 on fallback
  bool fallback_used = false;
};

// Distance between the two k-means centroids of one patient's embeddings,
// clamped; `default_alpha` when the embeddings are degenerate.
DynamicMargin dynamic_margin(const std::string& patient_id,
                             std::span<const Vec> patient_embeddings,
                             double default_alpha, std::uint64_t seed);

}  // namespace udm

#endif  // UDM_DYNAMIC_MARGIN_H_
