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

#ifndef UDM_EMBEDDER_H_
#define UDM_EMBEDDER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace udm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { relu };

struct EmbedderConfig {
  int input_dim = 16;
  std::vector<int> hidden_dims = {64, 64};
  int embedding_dim = 128;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  // Throws ConfigError on invalid dimensions.
  void validate() const;
};

// One affine map. `weight` is (out x in).
struct Layer {
  Mat weight;
  Vec bias;

  bool operator==(const Layer&) const = default;
};

using ParamTree = std::vector<Layer>;

// Hidden layers use the configured activation; the last layer is linear and
// its output is used as-is (no normalization).
struct EmbedderParams {
  ParamTree layers;

  int input_dim() const;
  int embedding_dim() const;
  std::size_t parameter_count() const;
  bool operator==(const EmbedderParams&) const = default;
};

// Shape-identical to the parameters they differentiate.
struct Gradients {
  ParamTree layers;
};

ParamTree zeros_like(const ParamTree& tree);
bool same_shape(const ParamTree& a, const ParamTree& b);
bool all_finite(const ParamTree& tree);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
EmbedderParams init_params(const EmbedderConfig& config);

Vec embed(const EmbedderParams& params, const Vec& features);
std::vector<Vec> embed_batch(const EmbedderParams& params,
                             std::span<const Vec> features);

// Column-major batch forms: `inputs` is (input_dim x batch), the result is
// (embedding_dim x batch).
Mat forward(const EmbedderParams& params, const Mat& inputs);

// Gradient of sum_i <upstream.col(i), embed(inputs.col(i))> with respect to
// every parameter.
Gradients backward(const EmbedderParams& params, const Mat& inputs,
                   const Mat& upstream);

Mat stack_columns(std::span<const Vec> columns);

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  ParamTree first_moment;
  ParamTree second_moment;
  std::int64_t step = 0;

  static AdamState for_params(const ParamTree& params, AdamHyper hyper = {});
};

// One bias-corrected Adam update, in place. Throws NumericError naming the
// first layer holding a non-finite gradient; nothing is modified then.
void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state);

}  // namespace udm

#endif  // UDM_EMBEDDER_H_
