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

#ifndef UDM_LOSSES_H_
#define UDM_LOSSES_H_

#include <cstddef>
#include <span>
#include <vector>

#include "udm/embedder.h"

namespace udm {

// Defaults are alpha = 1.0 (intra-patient) and beta = 1.5 (cross-patient).
struct MarginSet {
  double alpha = 1.0;
  double beta = 1.5;

  // beta > alpha when both are in use; both nonnegative.
  void validate(bool uses_beta) const;
};

// Dynamic per-patient margins live in [kMinDynamicMargin, kMaxDynamicMargin].
inline constexpr double kMinDynamicMargin = 0.1;
inline constexpr double kMaxDynamicMargin = 10.0;

// Batch-mean loss and its parts. For triplet losses the single hinge is
// reported in `patient_level_term` and `lesion_level_term` is zero.
// The names follow the tiered formulation: the intra-patient (a, n) hinge is
// the patient-level term, the cross-patient (a, sn) hinge the lesion-level one.
struct LossBreakdown {
  double total = 0.0;
  double patient_level_term = 0.0;
  double lesion_level_term = 0.0;
  std::vector<double> per_instance;
};

struct TripletEmbedding {
  Vec anchor, positive, negative;
};

struct QuadrupletEmbedding {
  Vec anchor, positive, negative, secondary;
};

struct TieredTerms {
  double patient = 0.0;
  double lesion = 0.0;
};

double euclidean_distance(const Vec& u, const Vec& v);

// max(0, d_ap - d_an + margin).
double triplet_term(double d_ap, double d_an, double margin);

// patient = max(0, d_ap - d_an + alpha), lesion = max(0, d_ap - d_asn + beta).
TieredTerms tiered_quad_term(double d_ap, double d_an, double d_asn,
                             double alpha, double beta);

LossBreakdown batch_triplet_loss(std::span<const TripletEmbedding> triplets,
                                 double margin);
LossBreakdown tiered_quad_loss(std::span<const QuadrupletEmbedding> quads,
                               double alpha, double beta);
LossBreakdown dmt_quad_loss(std::span<const QuadrupletEmbedding> quads,
                            std::span<const double> per_instance_alpha,
                            double beta);

struct TripletGrad {
  Vec anchor, positive, negative;
};

struct QuadrupletGrad {
  Vec anchor, positive, negative, secondary;
};

// Gradients of the batch-mean loss with respect to each embedding. Inactive
// hinges contribute nothing; a zero distance contributes a zero vector.
std::vector<TripletGrad> triplet_loss_grad(std::span<const TripletEmbedding> triplets,
                                           double margin);
std::vector<QuadrupletGrad> loss_grad_wrt_embeddings(
    std::span<const QuadrupletEmbedding> quads,
    std::span<const double> per_instance_alpha, double beta);

// Index-based kernels used by training: embeddings are the columns of an
// (embedding_dim x batch) matrix and instances refer to columns.
struct TripletIndex {
  std::size_t anchor = 0, positive = 0, negative = 0;
  bool operator==(const TripletIndex&) const = default;
};

struct QuadrupletIndex {
  std::size_t anchor = 0, positive = 0, negative = 0, secondary = 0;
  bool operator==(const QuadrupletIndex&) const = default;
};

// Loss value plus, when `grad` is non-null, the gradient with respect to the
// embedding matrix (same shape as `embeddings`, overwritten).
LossBreakdown triplet_loss_indexed(const Mat& embeddings,
                                   std::span<const TripletIndex> triplets,
                                   std::span<const double> per_instance_margin,
                                   Mat* grad);
LossBreakdown quad_loss_indexed(const Mat& embeddings,
                                std::span<const QuadrupletIndex> quads,
                                std::span<const double> per_instance_alpha,
                                double beta, Mat* grad);

}  // namespace udm

#endif  // UDM_LOSSES_H_
