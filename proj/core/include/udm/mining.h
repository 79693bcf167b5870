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

#ifndef UDM_MINING_H_
#define UDM_MINING_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "udm/cohort.h"
#include "udm/losses.h"
#include "udm/random.h"

namespace udm {

// X patients with k samples each per mini-batch (N = X * k, default 32).
struct SamplerConfig {
  int patients_per_batch = 4;
  int samples_per_patient = 8;

  void validate() const;
  int batch_size() const { return patients_per_batch * samples_per_patient; }
};

struct BatchEntry {
  std::size_t source_index = 0;  // position in the sampled cohort
  std::string patient_id;
  Label label = Label::normal;
  Vec features;
};

struct MiniBatch {
  std::vector<BatchEntry> entries;
  // Ascending patient id -> batch positions.
  std::map<std::string, std::vector<std::size_t>> by_patient;

  std::size_t size() const { return entries.size(); }
  Mat feature_matrix() const;  // (input_dim x size)
};

// Builds a batch from explicit cohort positions (in the given order).
MiniBatch make_minibatch(std::span<const LesionSample> cohort,
                         std::span<const std::size_t> positions);

// Picks X patients uniformly without replacement, then k samples from each:
// without replacement when the patient has at least k samples, otherwise all
// of them plus uniform draws with replacement for the remainder.
MiniBatch sample_minibatch(std::span<const LesionSample> cohort, const PatientIndex& index,
                           const SamplerConfig& config, std::uint64_t seed);
MiniBatch sample_minibatch(std::span<const LesionSample> cohort,
                           const SamplerConfig& config, std::uint64_t seed);

// Ordered (anchor, positive) pairs of distinct same-label positions of one
// patient. Throws InputError for a patient absent from the batch.
std::vector<std::pair<std::size_t, std::size_t>> enumerate_ap_pairs(
    const MiniBatch& batch, const std::string& patient_id);

enum class TripletCategory { hard, semi_hard, easy };

std::string_view to_string(TripletCategory category);

// hard: d_an < d_ap. semi_hard: d_ap <= d_an < d_ap + margin. easy otherwise.
TripletCategory classify_triplet(double d_ap, double d_an, double margin);

struct CandidateTriplet {
  TripletIndex index;
  double loss = 0.0;
  TripletCategory category = TripletCategory::easy;
};

// Uniform choice among candidates with loss > 0.
std::optional<CandidateTriplet> select_random_hard(std::span<const CandidateTriplet> candidates,
                                                   Rng& rng);
// Largest loss > 0; ties go to the earliest candidate.
std::optional<CandidateTriplet> select_hardest(std::span<const CandidateTriplet> candidates);

enum class SelectionStrategy { random_hard, hardest };

// per_patient restricts (a, p, n) to one patient; whole_batch ignores
// patient identity (the naive baseline).
enum class MiningScope { per_patient, whole_batch };

// Qualifying (loss > 0) sets seen by the miner for one (a, p) pair.
struct CandidateTrace {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
  std::vector<std::size_t> secondaries;
};

struct MiningOptions {
  SelectionStrategy strategy = SelectionStrategy::random_hard;
  MiningScope scope = MiningScope::per_patient;
  std::vector<CandidateTrace>* trace = nullptr;
};

struct MiningCounters {
  std::int64_t pairs = 0;
  std::int64_t candidates = 0;
  std::int64_t hard = 0;
  std::int64_t semi_hard = 0;
  std::int64_t easy = 0;
  std::int64_t secondary_candidates = 0;
  std::int64_t pairs_dropped = 0;
  std::int64_t selected = 0;
  // Batches offering no cross-patient sample for the secondary negative.
  std::int64_t no_cross_patient = 0;

  MiningCounters& operator+=(const MiningCounters& other);
};

struct TripletMining {
  std::vector<CandidateTriplet> triplets;
  std::vector<double> margins;  // margin used for each selected triplet
  MiningCounters counters;
};

struct Quadruplet {
  QuadrupletIndex index;
  double patient_term = 0.0;
  double lesion_term = 0.0;
  double alpha = 0.0;
};

struct QuadrupletMining {
  std::vector<Quadruplet> quadruplets;
  MiningCounters counters;
};

using MarginMap = std::map<std::string, double>;

// `embeddings` holds one column per batch position. Output is ordered by
// ascending patient id, then pair order. The per-patient RNG stream is
// derived from `seed` and the patient id.
TripletMining mine_triplets(const MiniBatch& batch, const Mat& embeddings,
                            const MarginMap& margin_per_patient, std::uint64_t seed,
                            const MiningOptions& options = {});

// Extends every selected (a, p, n) with a cross-patient secondary negative
// whose lesion-level hinge (margin beta) is positive; pairs with no such
// sample are dropped.
QuadrupletMining mine_quadruplets(const MiniBatch& batch, const Mat& embeddings,
                                  const MarginMap& margin_per_patient, double beta,
                                  std::uint64_t seed, const MiningOptions& options = {});

}  // namespace udm

#endif  // UDM_MINING_H_
