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

#include "udm/mining.h"

#include <algorithm>
#include <numeric>

#include "udm/error.h"

namespace udm {

void SamplerConfig::validate() const {
  if (patients_per_batch < 1 || samples_per_patient < 1) {
    throw ConfigError("sampler: patients_per_batch and samples_per_patient must be >= 1");
  }
}

Mat MiniBatch::feature_matrix() const {
  if (entries.empty()) return Mat();
  Mat m(entries.front().features.size(), static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = entries[i].features;
  }
  return m;
}

MiniBatch make_minibatch(std::span<const LesionSample> cohort,
                         std::span<const std::size_t> positions) {
  MiniBatch batch;
  batch.entries.reserve(positions.size());
  for (std::size_t pos : positions) {
    if (pos >= cohort.size()) throw InputError("make_minibatch: position out of range");
    const auto& s = cohort[pos];
    batch.by_patient[s.patient_id].push_back(batch.entries.size());
    batch.entries.push_back({pos, s.patient_id, s.label, s.features});
  }
  return batch;
}

MiniBatch sample_minibatch(std::span<const LesionSample> cohort, const PatientIndex& index,
                           const SamplerConfig& config, std::uint64_t seed) {
  config.validate();
  const auto x = static_cast<std::size_t>(config.patients_per_batch);
  const auto k = static_cast<std::size_t>(config.samples_per_patient);
  if (index.size() < x) {
    throw InputError("sample_minibatch: cohort has " + std::to_string(index.size()) +
                     " patients, need " + std::to_string(x));
  }
  Rng rng(seed);

  // Partial Fisher-Yates over patient slots.
  std::vector<std::size_t> slots(index.size());
  std::iota(slots.begin(), slots.end(), 0);
  for (std::size_t i = 0; i < x; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }
  std::vector<std::size_t> chosen(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(x));
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::size_t> positions;
  positions.reserve(x * k);
  for (std::size_t slot : chosen) {
    std::vector<std::size_t> members = index.members[slot];
    if (members.empty()) throw InputError("sample_minibatch: patient without samples");
    if (members.size() >= k) {
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
        std::swap(members[i], members[pick(rng)]);
      }
      positions.insert(positions.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      positions.insert(positions.end(), members.begin(), members.end());
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      for (std::size_t i = members.size(); i < k; ++i) positions.push_back(members[pick(rng)]);
    }
  }
  return make_minibatch(cohort, positions);
}

MiniBatch sample_minibatch(std::span<const LesionSample> cohort,
                           const SamplerConfig& config, std::uint64_t seed) {
  return sample_minibatch(cohort, PatientIndex::build(cohort), config, seed);
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> ordered_pairs(
    const MiniBatch& batch, std::span<const std::size_t> positions) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a : positions) {
    for (std::size_t p : positions) {
      if (a != p && batch.entries[a].label == batch.entries[p].label) pairs.emplace_back(a, p);
    }
  }
  return pairs;
}

double column_distance(const Mat& e, std::size_t i, std::size_t j) {
  return (e.col(static_cast<Eigen::Index>(i)) - e.col(static_cast<Eigen::Index>(j))).norm();
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> enumerate_ap_pairs(
    const MiniBatch& batch, const std::string& patient_id) {
  const auto it = batch.by_patient.find(patient_id);
  if (it == batch.by_patient.end()) {
    throw InputError("enumerate_ap_pairs: patient '" + patient_id + "' not in batch");
  }
  return ordered_pairs(batch, it->second);
}

std::string_view to_string(TripletCategory category) {
  switch (category) {
    case TripletCategory::hard: return "hard";
    case TripletCategory::semi_hard: return "semi_hard";
    case TripletCategory::easy: return "easy";
  }
  return "easy";
}

TripletCategory classify_triplet(double d_ap, double d_an, double margin) {
  if (d_an < d_ap) return TripletCategory::hard;
  if (d_an >= d_ap + margin) return TripletCategory::easy;
  return TripletCategory::semi_hard;
}

std::optional<CandidateTriplet> select_random_hard(std::span<const CandidateTriplet> candidates,
                                                   Rng& rng) {
  std::vector<std::size_t> qualifying;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].loss > 0.0) qualifying.push_back(i);
  }
  if (qualifying.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, qualifying.size() - 1);
  return candidates[qualifying[pick(rng)]];
}

std::optional<CandidateTriplet> select_hardest(std::span<const CandidateTriplet> candidates) {
  std::optional<CandidateTriplet> best;
  for (const auto& c : candidates) {
    if (c.loss > 0.0 && (!best || c.loss > best->loss)) best = c;
  }
  return best;
}

MiningCounters& MiningCounters::operator+=(const MiningCounters& o) {
  pairs += o.pairs;
  candidates += o.candidates;
  hard += o.hard;
  semi_hard += o.semi_hard;
  easy += o.easy;
  secondary_candidates += o.secondary_candidates;
  pairs_dropped += o.pairs_dropped;
  selected += o.selected;
  no_cross_patient += o.no_cross_patient;
  return *this;
}

namespace {

double margin_for(const MarginMap& margins, const std::string& patient) {
  const auto it = margins.find(patient);
  if (it == margins.end()) throw InputError("mining: no margin for patient '" + patient + "'");
  return it->second;
}

std::optional<CandidateTriplet> choose(std::span<const CandidateTriplet> candidates,
                                       SelectionStrategy strategy, Rng& rng) {
  return strategy == SelectionStrategy::hardest ? select_hardest(candidates)
                                                : select_random_hard(candidates, rng);
}

// One mining group: the positions whose (a, p, n) may combine, plus its RNG
// stream.
struct Group {
  std::string key;
  std::vector<std::size_t> positions;
};

std::vector<Group> mining_groups(const MiniBatch& batch, MiningScope scope) {
  std::vector<Group> groups;
  if (scope == MiningScope::whole_batch) {
    Group g{"*", {}};
    g.positions.resize(batch.size());
    std::iota(g.positions.begin(), g.positions.end(), 0);
    groups.push_back(std::move(g));
    return groups;
  }
  for (const auto& [pid, positions] : batch.by_patient) groups.push_back({pid, positions});
  return groups;
}

// Mines triplets; when `beta` is set, also attaches a secondary negative and
// emits quadruplets instead.
void mine(const MiniBatch& batch, const Mat& emb, const MarginMap& margins,
          std::optional<double> beta, std::uint64_t seed, const MiningOptions& options,
          TripletMining* triplets_out, QuadrupletMining* quads_out) {
  if (static_cast<std::size_t>(emb.cols()) != batch.size()) {
    throw InputError("mining: embeddings not aligned with batch");
  }
  MiningCounters& counters = triplets_out ? triplets_out->counters : quads_out->counters;
  const auto scope = beta ? MiningScope::per_patient : options.scope;
  if (beta && batch.by_patient.size() < 2) ++counters.no_cross_patient;

  for (const auto& group : mining_groups(batch, scope)) {
    Rng rng(derive_seed(seed, group.key));
    for (const auto& [a, p] : ordered_pairs(batch, group.positions)) {
      ++counters.pairs;
      const double margin = margin_for(margins, batch.entries[a].patient_id);
      const double d_ap = column_distance(emb, a, p);
      std::vector<CandidateTriplet> candidates;
      for (std::size_t n : group.positions) {
        if (batch.entries[n].label == batch.entries[a].label) continue;
        const double d_an = column_distance(emb, a, n);
        CandidateTriplet c{{a, p, n}, triplet_term(d_ap, d_an, margin),
                           classify_triplet(d_ap, d_an, margin)};
        ++counters.candidates;
        switch (c.category) {
          case TripletCategory::hard: ++counters.hard; break;
          case TripletCategory::semi_hard: ++counters.semi_hard; break;
          case TripletCategory::easy: ++counters.easy; break;
        }
        candidates.push_back(c);
      }
      CandidateTrace* trace = nullptr;
      if (options.trace != nullptr) {
        options.trace->push_back({a, p, {}, {}});
        trace = &options.trace->back();
        for (const auto& c : candidates) {
          if (c.loss > 0.0) trace->negatives.push_back(c.index.negative);
        }
      }
      const auto picked = choose(candidates, options.strategy, rng);
      if (!picked) {
        ++counters.pairs_dropped;
        continue;
      }
      if (!beta) {
        triplets_out->triplets.push_back(*picked);
        triplets_out->margins.push_back(margin);
        ++counters.selected;
        continue;
      }

      std::vector<CandidateTriplet> secondaries;
      const auto& anchor_patient = batch.entries[a].patient_id;
      for (std::size_t sn = 0; sn < batch.size(); ++sn) {
        if (batch.entries[sn].patient_id == anchor_patient) continue;
        const double d_asn = column_distance(emb, a, sn);
        secondaries.push_back({{a, p, sn}, triplet_term(d_ap, d_asn, *beta),
                               classify_triplet(d_ap, d_asn, *beta)});
        ++counters.secondary_candidates;
      }
      if (trace != nullptr) {
        for (const auto& c : secondaries) {
          if (c.loss > 0.0) trace->secondaries.push_back(c.index.negative);
        }
      }
      const auto secondary = choose(secondaries, options.strategy, rng);
      if (!secondary) {
        ++counters.pairs_dropped;
        continue;
      }
      quads_out->quadruplets.push_back(
          {{a, p, picked->index.negative, secondary->index.negative}, picked->loss,
           secondary->loss, margin});
      ++counters.selected;
    }
  }
}

}  // namespace

TripletMining mine_triplets(const MiniBatch& batch, const Mat& embeddings,
                            const MarginMap& margin_per_patient, std::uint64_t seed,
                            const MiningOptions& options) {
  TripletMining out;
  mine(batch, embeddings, margin_per_patient, std::nullopt, seed, options, &out, nullptr);
  return out;
}

QuadrupletMining mine_quadruplets(const MiniBatch& batch, const Mat& embeddings,
                                  const MarginMap& margin_per_patient, double beta,
                                  std::uint64_t seed, const MiningOptions& options) {
  QuadrupletMining out;
  mine(batch, embeddings, margin_per_patient, beta, seed, options, nullptr, &out);
  return out;
}

}  // namespace udm
