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

#include "udm/embedder.h"

#include <cmath>
#include <random>
#include <string>

#include "udm/error.h"
#include "udm/random.h"

namespace udm {

void EmbedderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("embedder: input_dim must be >= 1");
  if (embedding_dim < 2) throw ConfigError("embedder: embedding_dim must be >= 2");
  if (hidden_dims.empty()) throw ConfigError("embedder: hidden_dims must be non-empty");
  for (int h : hidden_dims) {
    if (h < 1) throw ConfigError("embedder: hidden dims must be >= 1");
  }
}

int EmbedderParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

int EmbedderParams::embedding_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

std::size_t EmbedderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

ParamTree zeros_like(const ParamTree& tree) {
  ParamTree out;
  out.reserve(tree.size());
  for (const auto& l : tree) {
    out.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()),
                   Vec::Zero(l.bias.size())});
  }
  return out;
}

bool same_shape(const ParamTree& a, const ParamTree& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() ||
        a[i].weight.cols() != b[i].weight.cols() ||
        a[i].bias.size() != b[i].bias.size()) {
      return false;
    }
  }
  return true;
}

bool all_finite(const ParamTree& tree) {
  for (const auto& l : tree) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

EmbedderParams init_params(const EmbedderConfig& config) {
  config.validate();
  std::vector<int> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.embedding_dim);

  Rng rng(derive_seed(config.seed, "embedder.init"));
  EmbedderParams params;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Mat(fan_out, fan_in), Vec::Zero(fan_out)};
    // Row-major fill order keeps the draw sequence independent of storage.
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

void check_input_rows(const EmbedderParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw InputError("embedder: empty parameter tree");
  if (rows != params.input_dim()) {
    throw InputError("embedder: expected " + std::to_string(params.input_dim()) +
                     " features, got " + std::to_string(rows));
  }
}

// Forward pass retaining every layer's post-activation output. acts[0] is the
// input; acts.back() is the embedding.
std::vector<Mat> forward_trace(const EmbedderParams& params, const Mat& inputs) {
  std::vector<Mat> acts;
  acts.reserve(params.layers.size() + 1);
  acts.push_back(inputs);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Mat z = l.weight * acts.back();
    z.colwise() += l.bias;
    if (i + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

Mat forward(const EmbedderParams& params, const Mat& inputs) {
  check_input_rows(params, inputs.rows());
  if (!inputs.allFinite()) throw InputError("embedder: non-finite features");
  return std::move(forward_trace(params, inputs).back());
}

Vec embed(const EmbedderParams& params, const Vec& features) {
  return forward(params, Mat(features)).col(0);
}

std::vector<Vec> embed_batch(const EmbedderParams& params,
                             std::span<const Vec> features) {
  std::vector<Vec> out;
  if (features.empty()) return out;
  const Mat emb = forward(params, stack_columns(features));
  out.reserve(features.size());
  for (Eigen::Index i = 0; i < emb.cols(); ++i) out.emplace_back(emb.col(i));
  return out;
}

Mat stack_columns(std::span<const Vec> columns) {
  if (columns.empty()) return Mat();
  const Eigen::Index rows = columns.front().size();
  Mat m(rows, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].size() != rows) {
      throw InputError("stack_columns: ragged input at row " + std::to_string(i));
    }
    m.col(static_cast<Eigen::Index>(i)) = columns[i];
  }
  return m;
}

Gradients backward(const EmbedderParams& params, const Mat& inputs,
                   const Mat& upstream) {
  check_input_rows(params, inputs.rows());
  if (upstream.rows() != params.embedding_dim() ||
      upstream.cols() != inputs.cols()) {
    throw InputError("embedder: upstream gradient shape mismatch");
  }
  if (!upstream.allFinite()) throw InputError("embedder: non-finite upstream gradient");

  const auto acts = forward_trace(params, inputs);
  Gradients grads{zeros_like(params.layers)};
  Mat delta = upstream;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    grads.layers[i].weight.noalias() = delta * acts[i].transpose();
    grads.layers[i].bias = delta.rowwise().sum();
    if (i == 0) break;
    Mat back = params.layers[i].weight.transpose() * delta;
    // relu'(z) evaluated through the stored output: zero where output is 0.
    delta = back.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

AdamState AdamState::for_params(const ParamTree& params, AdamHyper hyper) {
  return AdamState{hyper, zeros_like(params), zeros_like(params), 0};
}

void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state) {
  if (!same_shape(params, grads) || !same_shape(params, state.first_moment) ||
      !same_shape(params, state.second_moment)) {
    throw InputError("adam: parameter/gradient/moment shapes disagree");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].weight.allFinite() || !grads[i].bias.allFinite()) {
      throw NumericError("adam: non-finite gradient in layer " + std::to_string(i));
    }
  }

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(h.beta1, t);
  const double corr2 = 1.0 - std::pow(h.beta2, t);

  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    theta.array() -= h.lr * (m.array() / corr1) /
                     ((v.array() / corr2).sqrt() + h.eps);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grads[i].weight, state.first_moment[i].weight,
           state.second_moment[i].weight);
    update(params[i].bias, grads[i].bias, state.first_moment[i].bias,
           state.second_moment[i].bias);
  }
}

}  // namespace udm
