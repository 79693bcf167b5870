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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "udm/embedder.h"
#include "udm/error.h"

namespace udm {
namespace {

EmbedderConfig small_config(std::uint64_t seed) {
  EmbedderConfig c;
  c.input_dim = 5;
  c.hidden_dims = {7, 6};
  c.embedding_dim = 3;
  c.seed = seed;
  return c;
}

TEST(EmbedderInit, SameSeedGivesIdenticalTrees) {
  EXPECT_EQ(init_params(small_config(7)), init_params(small_config(7)));
  EXPECT_FALSE(init_params(small_config(7)) == init_params(small_config(8)));
}

TEST(EmbedderInit, LayerShapes) {
  EmbedderConfig c{3, {4}, 2, Activation::relu, 1};
  const auto p = init_params(c);
  ASSERT_EQ(p.layers.size(), 2u);
  EXPECT_EQ(p.layers[0].weight.rows(), 4);
  EXPECT_EQ(p.layers[0].weight.cols(), 3);
  EXPECT_EQ(p.layers[1].weight.rows(), 2);
  EXPECT_EQ(p.layers[1].weight.cols(), 4);
  EXPECT_EQ(p.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
}

TEST(EmbedderInit, BiasesZeroWeightsWithinGlorotBound) {
  const auto p = init_params(EmbedderConfig{});
  for (const auto& l : p.layers) {
    EXPECT_TRUE(l.bias.isZero(0.0));
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
  }
}

TEST(EmbedderInit, RejectsInvalidConfig) {
  EXPECT_THROW(init_params(EmbedderConfig{0, {4}, 2}), ConfigError);
  EXPECT_THROW(init_params(EmbedderConfig{3, {}, 2}), ConfigError);
  EXPECT_THROW(init_params(EmbedderConfig{3, {4}, 1}), ConfigError);
  EXPECT_THROW(init_params(EmbedderConfig{3, {4, 0}, 2}), ConfigError);
}

TEST(Embed, ZeroWeightsGiveZeroEmbedding) {
  auto p = init_params(small_config(1));
  for (auto& l : p.layers) l.weight.setZero();
  std::mt19937_64 rng(3);
  EXPECT_TRUE(embed(p, oracle::random_vector(rng, 5)).isZero(0.0));
}

TEST(Embed, MatchesHandRolledForwardPass) {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = init_params(small_config(seed));
    for (auto& l : p.layers) l.bias = oracle::random_vector(rng, static_cast<int>(l.bias.size()));
    const Vec x = oracle::random_vector(rng, 5);
    const Vec got = embed(p, x);
    const Vec want = oracle::embed(p, x);
    ASSERT_EQ(got.size(), 3);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(embed(p, x), got);  // purity
  }
}

TEST(Embed, DimensionMismatchAndNonFinite) {
  const auto p = init_params(small_config(1));
  EXPECT_THROW(embed(p, Vec::Zero(4)), InputError);
  Vec bad = Vec::Zero(5);
  bad[2] = std::nan("");
  EXPECT_THROW(embed(p, bad), InputError);
}

TEST(EmbedBatch, ElementwiseEqualToEmbed) {
  const auto p = init_params(small_config(2));
  EXPECT_TRUE(embed_batch(p, std::vector<Vec>{}).empty());
  std::mt19937_64 rng(5);
  std::vector<Vec> xs;
  for (int i = 0; i < 32; ++i) xs.push_back(oracle::random_vector(rng, 5));
  const auto out = embed_batch(p, xs);
  ASSERT_EQ(out.size(), 32u);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(out[i], embed(p, xs[i]));
  const auto one = embed_batch(p, std::span<const Vec>(xs.data(), 1));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], embed(p, xs[0]));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto p = init_params(small_config(3));
  std::mt19937_64 rng(1);
  Mat x(5, 4);
  for (int i = 0; i < 4; ++i) x.col(i) = oracle::random_vector(rng, 5);
  const auto g = backward(p, x, Mat::Zero(3, 4));
  for (const auto& l : g.layers) {
    EXPECT_TRUE(l.weight.isZero(0.0));
    EXPECT_TRUE(l.bias.isZero(0.0));
  }
}

TEST(Backward, SingleLinearLayerIsOuterProduct) {
  // One hidden layer with identity-like positive pre-activations makes the
  // output layer's gradient the outer product of upstream and its input.
  EmbedderParams p;
  p.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2)});
  p.layers.push_back({Mat::Constant(3, 2, 0.5), Vec::Zero(3)});
  Mat x(2, 1);
  x << 2.0, 3.0;
  Mat up(3, 1);
  up << 1.0, -2.0, 0.5;
  const auto g = backward(p, x, up);
  EXPECT_TRUE(g.layers[1].weight.isApprox(up * x.transpose()));
  EXPECT_TRUE(g.layers[1].bias.isApprox(up.col(0)));
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = init_params(small_config(seed));
    Mat x(5, 6);
    for (int i = 0; i < 6; ++i) x.col(i) = oracle::random_vector(rng, 5);
    Mat up(3, 6);
    for (int i = 0; i < 6; ++i) up.col(i) = oracle::random_vector(rng, 3);
    auto objective = [&](const EmbedderParams& q) {
      double s = 0.0;
      for (int i = 0; i < 6; ++i) s += up.col(i).dot(oracle::embed(q, x.col(i)));
      return s;
    };
    const auto analytic = backward(p, x, up);
    const auto numeric = oracle::finite_difference(p, objective);
    EXPECT_LT(oracle::max_relative_error(analytic.layers, numeric.layers), 1e-4) << seed;
  }
}

TEST(Backward, ShapeMismatch) {
  const auto p = init_params(small_config(3));
  EXPECT_THROW(backward(p, Mat::Zero(5, 2), Mat::Zero(3, 3)), InputError);
  EXPECT_THROW(backward(p, Mat::Zero(5, 2), Mat::Zero(2, 2)), InputError);
}

TEST(Adam, ZeroGradientKeepsParamsAndDecaysMoments) {
  ParamTree params{{Mat::Constant(1, 1, 2.0), Vec::Constant(1, -1.0)}};
  AdamState s = AdamState::for_params(params);
  s.first_moment[0].weight(0, 0) = 0.5;
  s.second_moment[0].weight(0, 0) = 0.25;
  const ParamTree before = params;
  adam_step(params, zeros_like(params), s);
  EXPECT_EQ(s.step, 1);
  EXPECT_DOUBLE_EQ(s.first_moment[0].weight(0, 0), 0.45);
  EXPECT_DOUBLE_EQ(s.second_moment[0].weight(0, 0), 0.25 * 0.999);
  // Non-zero moments still move the weight; the bias (zero moments) stays.
  EXPECT_EQ(params[0].bias, before[0].bias);
}

TEST(Adam, FirstStepHandEvaluation) {
  ParamTree params{{Mat::Constant(1, 1, 1.0), Vec::Zero(1)}};
  ParamTree grads{{Mat::Constant(1, 1, 4.0), Vec::Zero(1)}};
  AdamState s = AdamState::for_params(params, AdamHyper{0.001, 0.9, 0.999, 1e-8});
  adam_step(params, grads, s);
  // m_hat = 4, v_hat = 16 after bias correction.
  EXPECT_NEAR(params[0].weight(0, 0), 1.0 - 0.001 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(params[0].weight(0, 0), 0.999, 1e-9);
}

TEST(Adam, TwoStepsMatchScalarSimulation) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParamTree params{{Mat::Constant(1, 1, 0.3), Vec::Constant(1, -0.2)}};
  ParamTree grads{{Mat::Constant(1, 1, -1.5), Vec::Constant(1, 0.25)}};
  AdamState s = AdamState::for_params(params, AdamHyper{lr, b1, b2, eps});
  double w = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    adam_step(params, grads, s);
    m = b1 * m + (1 - b1) * -1.5;
    v = b2 * v + (1 - b2) * 2.25;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    EXPECT_NEAR(params[0].weight(0, 0), w, 1e-14);
  }
  EXPECT_EQ(s.step, 2);
}

TEST(Adam, NonFiniteGradientNamesLayerAndLeavesParams) {
  auto p = init_params(small_config(4));
  const auto before = p.layers;
  auto g = zeros_like(p.layers);
  g[1].bias[0] = std::numeric_limits<double>::infinity();
  AdamState s = AdamState::for_params(p.layers);
  try {
    adam_step(p.layers, g, s);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  EXPECT_EQ(p.layers, before);
  EXPECT_EQ(s.step, 0);
}

TEST(Adam, DeterministicTrajectory) {
  auto run = [] {
    auto p = init_params(small_config(9));
    AdamState s = AdamState::for_params(p.layers);
    std::mt19937_64 rng(2);
    Mat x(5, 4);
    for (int i = 0; i < 4; ++i) x.col(i) = oracle::random_vector(rng, 5);
    for (int step = 0; step < 10; ++step) {
      const Mat out = forward(p, x);
      adam_step(p.layers, backward(p, x, out).layers, s);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace udm
