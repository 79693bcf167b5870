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

#ifndef UDM_GRADCHECK_H_
#define UDM_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "udm/embedder.h"
#include "udm/losses.h"
#include "udm/mining.h"

namespace udm {

struct GradCheckConfig {
  EmbedderConfig embedder{6, {8, 8}, 4, Activation::relu, 0};
  SamplerConfig sampler{3, 4};
  MarginSet margins;
  // Test hook: perturbs the analytic gradient so the check must fail.
  bool corrupt_analytic = false;
};

// A fixed point at which to differentiate: parameters, the batch inputs and
// the quadruplets/margins mined there. Biases are jittered away from zero so
// that no ReLU pre-activation sits exactly on its kink.
struct GradCheckProblem {
  EmbedderParams params;
  Mat inputs;
  std::vector<QuadrupletIndex> quads;
  std::vector<double> alphas;
  double beta = 0.0;
};

GradCheckProblem make_grad_check_problem(const GradCheckConfig& config, std::uint64_t seed);

// Sign pattern of every hidden pre-activation and every hinge argument. The
// loss is smooth between two parameter vectors with the same pattern.
std::vector<bool> kink_pattern(const GradCheckProblem& problem, const EmbedderParams& params);

// Loss and analytic gradient of the problem at `params`.
double grad_check_loss(const GradCheckProblem& problem, const EmbedderParams& params);
Gradients grad_check_gradient(const GradCheckProblem& problem);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;  // row-major index within weight, then bias
  bool worst_is_bias = false;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t parameters_checked = 0;
  // Coordinates where every step tried crossed a kink; left out of the max.
  std::size_t skipped_at_kinks = 0;
  std::size_t instances = 0;
};

// |a - n| / max(|a|, |n|); pairs whose magnitudes are both below 1e-10 count
// as agreeing (this covers 0/0).
double relative_error(double analytic, double numeric);

// Compares the analytic gradient of the dynamic-margin quadruplet loss,
// backpropagated through the embedder, with central differences using the
// step h = 1e-4 * max(1, |theta|). Differences at h and h/2 are Richardson
// combined; small embedding distances otherwise leave an h^2 truncation
// error above the tolerance. The mined quadruplets and margins are fixed at
// the initial parameters. When a step changes the kink pattern it is cut by
// 10x, at most twice.
GradCheckReport grad_check(const GradCheckConfig& config, std::uint64_t seed);

}  // namespace udm

#endif  // UDM_GRADCHECK_H_
