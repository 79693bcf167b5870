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


#include "udm/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "udm/cohort.h"
#include "udm/dynamic_margin.h"
#include "udm/random.h"

namespace udm {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-10) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradCheckProblem make_grad_check_problem(const GradCheckConfig& config, std::uint64_t seed) {
  EmbedderConfig ecfg = config.embedder;
  ecfg.seed = derive_seed(seed, "gradcheck.init");
  GradCheckProblem problem;
  problem.params = init_params(ecfg);
  Rng rng(derive_seed(seed, "gradcheck.jitter"));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (auto& layer : problem.params.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = jitter(rng);
  }

  GeneratorConfig gen;
  gen.n_patients = config.sampler.patients_per_batch;
  gen.min_lesions = 6;
  gen.max_lesions = 10;
  gen.ud_fraction = 0.3;
  gen.feature_dim = ecfg.input_dim;
  gen.seed = derive_seed(seed, "gradcheck.cohort");
  const Cohort cohort = generate_cohort(gen);
  problem.beta = config.margins.beta;
  // Redraw the batch a few times if nothing is mined.
  for (std::uint64_t attempt = 0; attempt < 10 && problem.quads.empty(); ++attempt) {
    const std::uint64_t draw = derive_seed(derive_seed(seed, "gradcheck.batch"), attempt);
    const MiniBatch batch = sample_minibatch(cohort, config.sampler, draw);
    problem.inputs = batch.feature_matrix();
    const Mat emb = forward(problem.params, problem.inputs);

    MarginMap margins;
    for (const auto& [pid, positions] : batch.by_patient) {
      std::vector<Vec> points;
      for (std::size_t p : positions) points.emplace_back(emb.col(static_cast<Eigen::Index>(p)));
      margins[pid] = dynamic_margin(pid, points, config.margins.alpha,
                                    derive_seed(draw, "gradcheck.margin:" + pid))
                         .alpha;
    }
    const auto mined =
        mine_quadruplets(batch, emb, margins, problem.beta, derive_seed(draw, "gradcheck.mine"));
    for (const auto& q : mined.quadruplets) {
      problem.quads.push_back(q.index);
      problem.alphas.push_back(q.alpha);
    }
  }
  return problem;
}

std::vector<bool> kink_pattern(const GradCheckProblem& problem, const EmbedderParams& params) {
  std::vector<bool> pattern;
  Mat h = problem.inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Mat z = (layer.weight * h).colwise() + layer.bias;
    if (l + 1 < params.layers.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) pattern.push_back(z.data()[i] > 0.0);
      h = z.cwiseMax(0.0);
    } else {
      h = std::move(z);
    }
  }
  for (std::size_t q = 0; q < problem.quads.size(); ++q) {
    const auto& idx = problem.quads[q];
    auto col = [&](std::size_t c) { return h.col(static_cast<Eigen::Index>(c)); };
    const double d_ap = (col(idx.anchor) - col(idx.positive)).norm();
    const double d_an = (col(idx.anchor) - col(idx.negative)).norm();
    const double d_as = (col(idx.anchor) - col(idx.secondary)).norm();
    pattern.push_back(d_ap - d_an + problem.alphas[q] > 0.0);
    pattern.push_back(d_ap - d_as + problem.beta > 0.0);
  }
  return pattern;
}

double grad_check_loss(const GradCheckProblem& problem, const EmbedderParams& params) {
  if (problem.quads.empty()) return 0.0;
  return quad_loss_indexed(forward(params, problem.inputs), problem.quads, problem.alphas,
                           problem.beta, nullptr)
      .total;
}

Gradients grad_check_gradient(const GradCheckProblem& problem) {
  if (problem.quads.empty()) return {zeros_like(problem.params.layers)};
  Mat upstream;
  quad_loss_indexed(forward(problem.params, problem.inputs), problem.quads, problem.alphas,
                    problem.beta, &upstream);
  return backward(problem.params, problem.inputs, upstream);
}

GradCheckReport grad_check(const GradCheckConfig& config, std::uint64_t seed) {
  const GradCheckProblem problem = make_grad_check_problem(config, seed);
  EmbedderParams params = problem.params;
  const std::vector<bool> base_pattern = kink_pattern(problem, params);

  GradCheckReport report;
  report.instances = problem.quads.size();
  Gradients analytic = grad_check_gradient(problem);
  if (config.corrupt_analytic) {
    auto& w = analytic.layers.front().weight;
    w(0, 0) = w(0, 0) * 1.5 + 1e-3;
  }

  bool first = true;
  auto check = [&](std::size_t layer, bool is_bias, std::size_t flat, double& theta,
                   double grad) {
    const double saved = theta;
    double h = 1e-4 * std::max(1.0, std::abs(saved));
    std::optional<double> numeric;
    for (int attempt = 0; attempt < 3 && !numeric; ++attempt, h /= 10.0) {
      // Central differences at h and h/2, combined to cancel the h^2 term.
      double diff[2];
      bool smooth = true;
      for (int k = 0; k < 2; ++k) {
        const double step = k == 0 ? h : h / 2.0;
        theta = saved + step;
        const double up = grad_check_loss(problem, params);
        smooth = smooth && kink_pattern(problem, params) == base_pattern;
        theta = saved - step;
        const double down = grad_check_loss(problem, params);
        smooth = smooth && kink_pattern(problem, params) == base_pattern;
        diff[k] = (up - down) / (2.0 * step);
      }
      if (smooth) numeric = (4.0 * diff[1] - diff[0]) / 3.0;
    }
    theta = saved;
    ++report.parameters_checked;
    if (!numeric) {
      ++report.skipped_at_kinks;
      return;
    }
    const double err = relative_error(grad, *numeric);
    if (first || err > report.max_relative_error) {
      first = false;
      report.max_relative_error = err;
      report.worst_layer = layer;
      report.worst_index = flat;
      report.worst_is_bias = is_bias;
      report.worst_analytic = grad;
      report.worst_numeric = *numeric;
    }
  };

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const auto& g = analytic.layers[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        check(l, false, static_cast<std::size_t>(r * layer.weight.cols() + c),
              layer.weight(r, c), g.weight(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      check(l, true, static_cast<std::size_t>(r), layer.bias[r], g.bias[r]);
    }
  }
  return report;
}

}  // namespace udm
