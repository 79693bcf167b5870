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

#include "udm/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "udm/error.h"

namespace udm {

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> actual) {
  if (predicted.size() != actual.size()) {
    throw InputError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(actual.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const bool pos = predicted[i] == Label::ud;
    if (actual[i] == Label::ud) {
      pos ? ++cm.tp : ++cm.fn;
    } else {
      pos ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

std::string_view to_string(Averaging averaging) {
  return averaging == Averaging::weighted ? "weighted" : "macro";
}

Averaging parse_averaging(std::string_view text) {
  if (text == "macro") return Averaging::macro;
  if (text == "weighted") return Averaging::weighted;
  throw ConfigError("unknown averaging '" + std::string(text) + "'");
}

BasicMetrics basic_metrics(const ConfusionMatrix& cm, Averaging averaging) {
  if (cm.total() <= 0) throw InputError("basic_metrics: empty confusion matrix");
  BasicMetrics m;
  auto ratio = [&](std::int64_t num, std::int64_t den, const char* name) {
    if (den == 0) {
      m.degenerate.emplace_back(name);
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  auto f1 = [&](double p, double r, const char* name) {
    if (p + r == 0.0) {
      m.degenerate.emplace_back(name);
      return 0.0;
    }
    return 2.0 * p * r / (p + r);
  };

  m.sensitivity = ratio(cm.tp, cm.tp + cm.fn, "sensitivity");
  m.specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity");
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  const double precision_ud = ratio(cm.tp, cm.tp + cm.fp, "precision_ud");
  const double precision_normal = ratio(cm.tn, cm.tn + cm.fn, "precision_normal");
  const double f1_ud = f1(precision_ud, m.sensitivity, "f1_ud");
  const double f1_normal = f1(precision_normal, m.specificity, "f1_normal");

  double w_ud = 0.5, w_normal = 0.5;
  if (averaging == Averaging::weighted) {
    w_ud = static_cast<double>(cm.tp + cm.fn) / static_cast<double>(cm.total());
    w_normal = 1.0 - w_ud;
  }
  m.macro_precision = w_ud * precision_ud + w_normal * precision_normal;
  m.macro_recall = w_ud * m.sensitivity + w_normal * m.specificity;
  m.macro_f1 = w_ud * f1_ud + w_normal * f1_normal;
  return m;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw InputError("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores) {
    if (std::isnan(s)) throw InputError("roc_auc: NaN score");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::int64_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks are 1-based; the tie block [i, j) shares their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == Label::ud) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

MetricsReport make_report(std::string mode, std::uint64_t seed,
                          std::span<const Label> predicted, std::span<const double> prob_ud,
                          std::span<const Label> actual, Averaging averaging) {
  MetricsReport r;
  r.mode = std::move(mode);
  r.seed = seed;
  r.counts = confusion(predicted, actual);
  const auto m = basic_metrics(r.counts, averaging);
  r.sensitivity = m.sensitivity;
  r.specificity = m.specificity;
  r.accuracy = m.accuracy;
  r.macro_precision = m.macro_precision;
  r.macro_recall = m.macro_recall;
  r.macro_f1 = m.macro_f1;
  r.degenerate = m.degenerate;
  if (const auto auc = roc_auc(prob_ud, actual)) {
    r.roc_auc = *auc;
  } else {
    r.degenerate.emplace_back("roc_auc");
  }
  return r;
}

std::array<double, 7> metric_row(const MetricsReport& r) {
  return {r.specificity, r.sensitivity, r.macro_recall, r.macro_precision,
          r.macro_f1,    r.roc_auc,     r.accuracy};
}

AggregateReport aggregate(std::string mode, std::vector<MetricsReport> runs) {
  AggregateReport agg;
  agg.mode = std::move(mode);
  if (runs.empty()) return agg;
  for (std::size_t c = 0; c < kMetricColumns.size(); ++c) {
    double sum = 0.0;
    for (const auto& r : runs) sum += metric_row(r)[c];
    const double mean = sum / static_cast<double>(runs.size());
    double sq = 0.0;
    for (const auto& r : runs) sq += (metric_row(r)[c] - mean) * (metric_row(r)[c] - mean);
    agg.columns[c] = {mean, std::sqrt(sq / static_cast<double>(runs.size()))};
  }
  for (const auto& r : runs) agg.seeds.push_back(r.seed);
  agg.runs = std::move(runs);
  return agg;
}

std::string embeddings_csv(const EmbedderParams& params, std::span<const LesionSample> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].patient_id != samples[b].patient_id) {
      return samples[a].patient_id < samples[b].patient_id;
    }
    return samples[a].lesion_id < samples[b].lesion_id;
  });

  std::vector<Vec> features;
  features.reserve(samples.size());
  for (std::size_t i : order) features.push_back(samples[i].features);
  const auto emb = embed_batch(params, features);

  std::string out = "patient_id,lesion_id,label";
  for (int d = 0; d < params.embedding_dim(); ++d) out += ",e_" + std::to_string(d);
  out += '\n';
  char buf[32];
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& s = samples[order[r]];
    out += s.patient_id + ',' + s.lesion_id + ',' + std::string(to_string(s.label));
    for (Eigen::Index d = 0; d < emb[r].size(); ++d) {
      std::snprintf(buf, sizeof(buf), ",%.17g", emb[r][d]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void export_embeddings(const EmbedderParams& params, std::span<const LesionSample> samples,
                       const std::filesystem::path& path) {
  const std::string csv = embeddings_csv(params, samples);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << csv;
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

constexpr double kPowerTolerance = 1e-9;
constexpr int kPowerMaxIterations = 20000;

void fix_sign(Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

// Leading eigenpair of a symmetric PSD matrix. Starts from its largest
// column, which cannot be orthogonal to the leading eigenvector unless the
// matrix is zero.
std::pair<double, Vec> leading_eigenpair(const Mat& cov) {
  Eigen::Index start = 0;
  cov.colwise().norm().maxCoeff(&start);
  Vec v = cov.col(start);
  if (v.norm() == 0.0) return {0.0, Vec::Zero(cov.rows())};
  v.normalize();
  for (int it = 0; it < kPowerMaxIterations; ++it) {
    Vec next = cov * v;
    const double n = next.norm();
    if (n == 0.0) return {0.0, Vec::Zero(cov.rows())};
    next /= n;
    const double delta = std::min((next - v).norm(), (next + v).norm());
    v = std::move(next);
    if (delta < kPowerTolerance) break;
  }
  fix_sign(v);
  return {v.dot(cov * v), v};
}

}  // namespace

Projection2d pca_2d(std::span<const Vec> embeddings) {
  if (embeddings.size() < 3) throw InputError("pca_2d: need at least 3 points");
  Mat x = stack_columns(embeddings);  // D x n
  const Vec mean = x.rowwise().mean();
  x.colwise() -= mean;
  const double n = static_cast<double>(embeddings.size());
  Mat cov = (x * x.transpose()) / n;

  Projection2d out;
  auto [l1, v1] = leading_eigenpair(cov);
  cov -= l1 * v1 * v1.transpose();
  auto [l2, v2] = leading_eigenpair(cov);
  const double scale = std::max(l1, 1e-300);
  if (l2 <= 1e-12 * scale) {
    l2 = 0.0;
    v2.setZero();
  } else {
    // Re-orthogonalize against v1 to remove deflation drift.
    v2 -= v2.dot(v1) * v1;
    v2.normalize();
    fix_sign(v2);
  }
  out.explained_variance = {std::max(l1, 0.0), std::max(l2, 0.0)};
  out.points.reserve(embeddings.size());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    out.points.push_back({x.col(i).dot(v1), x.col(i).dot(v2)});
  }
  return out;
}

}  // namespace udm
