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

#include "udm/losses.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "udm/error.h"

namespace udm {

void MarginSet::validate(bool uses_beta) const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw ConfigError("margins must be nonnegative");
  }
  if (uses_beta && !(beta > alpha)) {
    throw ConfigError("margins: beta must exceed alpha");
  }
}

double euclidean_distance(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) {
    throw InputError("euclidean_distance: length mismatch (" +
                     std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  }
  return (u - v).norm();
}

double triplet_term(double d_ap, double d_an, double margin) {
  if (d_ap < 0.0 || d_an < 0.0) throw InputError("triplet_term: negative distance");
  return std::max(0.0, d_ap - d_an + margin);
}

TieredTerms tiered_quad_term(double d_ap, double d_an, double d_asn, double alpha,
                             double beta) {
  if (d_asn < 0.0) throw InputError("tiered_quad_term: negative distance");
  return {triplet_term(d_ap, d_an, alpha), triplet_term(d_ap, d_asn, beta)};
}

namespace {

// d|u - v| / du, with the zero vector at u == v.
Vec distance_grad(const Vec& u, const Vec& v, double d) {
  if (d == 0.0) return Vec::Zero(u.size());
  return (u - v) / d;
}

void finish(LossBreakdown& out, double patient_sum, double lesion_sum) {
  const double n = static_cast<double>(out.per_instance.size());
  double total = 0.0;
  for (double v : out.per_instance) total += v;
  out.total = total / n;
  out.patient_level_term = patient_sum / n;
  out.lesion_level_term = lesion_sum / n;
}

}  // namespace

LossBreakdown batch_triplet_loss(std::span<const TripletEmbedding> triplets,
                                 double margin) {
  if (triplets.empty()) throw InputError("batch_triplet_loss: empty batch");
  LossBreakdown out;
  double sum = 0.0;
  for (const auto& t : triplets) {
    const double v = triplet_term(euclidean_distance(t.anchor, t.positive),
                                  euclidean_distance(t.anchor, t.negative), margin);
    out.per_instance.push_back(v);
    sum += v;
  }
  finish(out, sum, 0.0);
  return out;
}

LossBreakdown dmt_quad_loss(std::span<const QuadrupletEmbedding> quads,
                            std::span<const double> per_instance_alpha,
                            double beta) {
  if (quads.empty()) throw InputError("dmt_quad_loss: empty batch");
  if (per_instance_alpha.size() != quads.size()) {
    throw InputError("dmt_quad_loss: one alpha per instance required");
  }
  LossBreakdown out;
  double psum = 0.0, lsum = 0.0;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const auto& q = quads[i];
    const double d_ap = euclidean_distance(q.anchor, q.positive);
    const auto terms = tiered_quad_term(d_ap, euclidean_distance(q.anchor, q.negative),
                                        euclidean_distance(q.anchor, q.secondary),
                                        per_instance_alpha[i], beta);
    out.per_instance.push_back(terms.patient + terms.lesion);
    psum += terms.patient;
    lsum += terms.lesion;
  }
  finish(out, psum, lsum);
  return out;
}

LossBreakdown tiered_quad_loss(std::span<const QuadrupletEmbedding> quads,
                               double alpha, double beta) {
  const std::vector<double> alphas(quads.size(), alpha);
  return dmt_quad_loss(quads, alphas, beta);
}

std::vector<TripletGrad> triplet_loss_grad(std::span<const TripletEmbedding> triplets,
                                           double margin) {
  std::vector<TripletGrad> out;
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    const Eigen::Index dim = t.anchor.size();
    TripletGrad g{Vec::Zero(dim), Vec::Zero(dim), Vec::Zero(dim)};
    const double d_ap = euclidean_distance(t.anchor, t.positive);
    const double d_an = euclidean_distance(t.anchor, t.negative);
    if (d_ap - d_an + margin > 0.0) {
      const Vec gp = distance_grad(t.anchor, t.positive, d_ap) * scale;
      const Vec gn = distance_grad(t.anchor, t.negative, d_an) * scale;
      g.anchor = gp - gn;
      g.positive = -gp;
      g.negative = gn;
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<QuadrupletGrad> loss_grad_wrt_embeddings(
    std::span<const QuadrupletEmbedding> quads,
    std::span<const double> per_instance_alpha, double beta) {
  if (per_instance_alpha.size() != quads.size()) {
    throw InputError("loss_grad_wrt_embeddings: one alpha per instance required");
  }
  std::vector<QuadrupletGrad> out;
  const double scale = 1.0 / static_cast<double>(quads.size());
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const auto& q = quads[i];
    const Eigen::Index dim = q.anchor.size();
    QuadrupletGrad g{Vec::Zero(dim), Vec::Zero(dim), Vec::Zero(dim), Vec::Zero(dim)};
    const double d_ap = euclidean_distance(q.anchor, q.positive);
    const double d_an = euclidean_distance(q.anchor, q.negative);
    const double d_asn = euclidean_distance(q.anchor, q.secondary);
    const Vec gp = distance_grad(q.anchor, q.positive, d_ap) * scale;
    if (d_ap - d_an + per_instance_alpha[i] > 0.0) {
      const Vec gn = distance_grad(q.anchor, q.negative, d_an) * scale;
      g.anchor += gp - gn;
      g.positive -= gp;
      g.negative += gn;
    }
    if (d_ap - d_asn + beta > 0.0) {
      const Vec gs = distance_grad(q.anchor, q.secondary, d_asn) * scale;
      g.anchor += gp - gs;
      g.positive -= gp;
      g.secondary += gs;
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

void check_column(const Mat& embeddings, std::size_t idx) {
  if (idx >= static_cast<std::size_t>(embeddings.cols())) {
    throw InputError("loss: instance index " + std::to_string(idx) + " out of range");
  }
}

// Accumulates the gradient of one hinge d(a,p) - d(a,x) + margin into `grad`.
void add_hinge_grad(const Mat& e, std::size_t a, std::size_t p, std::size_t x,
                    double d_ap, double d_ax, double scale, Mat& grad) {
  const auto ia = static_cast<Eigen::Index>(a);
  const auto ip = static_cast<Eigen::Index>(p);
  const auto ix = static_cast<Eigen::Index>(x);
  if (d_ap > 0.0) {
    const Vec gp = (e.col(ia) - e.col(ip)) * (scale / d_ap);
    grad.col(ia) += gp;
    grad.col(ip) -= gp;
  }
  if (d_ax > 0.0) {
    const Vec gx = (e.col(ia) - e.col(ix)) * (scale / d_ax);
    grad.col(ia) -= gx;
    grad.col(ix) += gx;
  }
}

}  // namespace

LossBreakdown triplet_loss_indexed(const Mat& embeddings,
                                   std::span<const TripletIndex> triplets,
                                   std::span<const double> per_instance_margin,
                                   Mat* grad) {
  if (triplets.empty()) throw InputError("triplet loss: empty batch");
  if (per_instance_margin.size() != triplets.size()) {
    throw InputError("triplet loss: one margin per instance required");
  }
  if (grad != nullptr) grad->setZero(embeddings.rows(), embeddings.cols());
  LossBreakdown out;
  double sum = 0.0;
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    check_column(embeddings, std::max({t.anchor, t.positive, t.negative}));
    const auto a = static_cast<Eigen::Index>(t.anchor);
    const double d_ap = (embeddings.col(a) - embeddings.col(static_cast<Eigen::Index>(t.positive))).norm();
    const double d_an = (embeddings.col(a) - embeddings.col(static_cast<Eigen::Index>(t.negative))).norm();
    const double v = triplet_term(d_ap, d_an, per_instance_margin[i]);
    out.per_instance.push_back(v);
    sum += v;
    if (grad != nullptr && d_ap - d_an + per_instance_margin[i] > 0.0) {
      add_hinge_grad(embeddings, t.anchor, t.positive, t.negative, d_ap, d_an, scale, *grad);
    }
  }
  finish(out, sum, 0.0);
  return out;
}

LossBreakdown quad_loss_indexed(const Mat& embeddings,
                                std::span<const QuadrupletIndex> quads,
                                std::span<const double> per_instance_alpha,
                                double beta, Mat* grad) {
  if (quads.empty()) throw InputError("quadruplet loss: empty batch");
  if (per_instance_alpha.size() != quads.size()) {
    throw InputError("quadruplet loss: one alpha per instance required");
  }
  if (grad != nullptr) grad->setZero(embeddings.rows(), embeddings.cols());
  LossBreakdown out;
  double psum = 0.0, lsum = 0.0;
  const double scale = 1.0 / static_cast<double>(quads.size());
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const auto& q = quads[i];
    check_column(embeddings, std::max({q.anchor, q.positive, q.negative, q.secondary}));
    const auto col = [&](std::size_t j) { return embeddings.col(static_cast<Eigen::Index>(j)); };
    const double d_ap = (col(q.anchor) - col(q.positive)).norm();
    const double d_an = (col(q.anchor) - col(q.negative)).norm();
    const double d_asn = (col(q.anchor) - col(q.secondary)).norm();
    const auto terms = tiered_quad_term(d_ap, d_an, d_asn, per_instance_alpha[i], beta);
    out.per_instance.push_back(terms.patient + terms.lesion);
    psum += terms.patient;
    lsum += terms.lesion;
    if (grad == nullptr) continue;
    if (d_ap - d_an + per_instance_alpha[i] > 0.0) {
      add_hinge_grad(embeddings, q.anchor, q.positive, q.negative, d_ap, d_an, scale, *grad);
    }
    if (d_ap - d_asn + beta > 0.0) {
      add_hinge_grad(embeddings, q.anchor, q.positive, q.secondary, d_ap, d_asn, scale, *grad);
    }
  }
  finish(out, psum, lsum);
  return out;
}

}  // namespace udm
