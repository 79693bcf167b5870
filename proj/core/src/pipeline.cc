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

#include "udm/pipeline.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "udm/error.h"
#include "udm/random.h"

namespace udm {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::naive_triplet: return "naive_triplet";
    case Mode::ps_triplet: return "ps_triplet";
    case Mode::t_quad: return "t_quad";
    case Mode::dmt_quad: return "dmt_quad";
  }
  return "baseline";
}

Mode parse_mode(std::string_view text) {
  for (Mode m : kAllModes) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

bool uses_quadruplets(Mode mode) { return mode == Mode::t_quad || mode == Mode::dmt_quad; }

void Stage1Config::validate() const {
  if (mode == Mode::baseline) throw ConfigError("stage1: baseline has no metric stage");
  if (epochs < 0 || batches_per_epoch < 1) {
    throw ConfigError("stage1: epochs must be >= 0 and batches_per_epoch >= 1");
  }
  sampler.validate();
  margins.validate(uses_quadruplets(mode));
  if (!(optimizer.lr > 0.0)) throw ConfigError("stage1: learning rate must be positive");
}

void Stage2Config::validate() const {
  if (epochs < 0 || batch_size < 1) throw ConfigError("stage2: invalid epochs/batch_size");
  if (!(optimizer.lr > 0.0)) throw ConfigError("stage2: learning rate must be positive");
}

void ExperimentConfig::validate() const {
  fractions.validate();
  if (oversample_factor < 1) throw ConfigError("oversample_factor must be >= 1");
  embedder.validate();
  stage2.validate();
  baseline.validate();
  if (modes.empty()) throw ConfigError("experiment: no modes requested");
  if (seeds.empty()) throw ConfigError("experiment: no seeds requested");
  for (Mode m : modes) {
    if (m == Mode::baseline) continue;
    Stage1Config s1 = stage1;
    s1.mode = m;
    s1.validate();
  }
}

namespace {

Mat features_of(std::span<const LesionSample> samples) {
  if (samples.empty()) return Mat();
  Mat m(samples.front().features.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = samples[i].features;
  }
  return m;
}

std::vector<Label> labels_of(std::span<const LesionSample> samples) {
  std::vector<Label> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

ValidationSnapshot snapshot_from(std::span<const Label> predicted, std::span<const Label> actual) {
  const auto m = basic_metrics(confusion(predicted, actual));
  return {m.sensitivity, m.specificity, m.balanced_accuracy()};
}

// Nearest class centroid in embedding space, centroids from `train`.
std::optional<ValidationSnapshot> centroid_snapshot(const EmbedderParams& params,
                                                    std::span<const LesionSample> train,
                                                    std::span<const LesionSample> validation) {
  if (validation.empty() || train.empty()) return std::nullopt;
  const Mat train_emb = forward(params, features_of(train));
  Vec centroid[2] = {Vec::Zero(train_emb.rows()), Vec::Zero(train_emb.rows())};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int c = train[i].label == Label::ud ? 1 : 0;
    centroid[c] += train_emb.col(static_cast<Eigen::Index>(i));
    ++count[c];
  }
  if (count[0] == 0 || count[1] == 0) return std::nullopt;
  centroid[0] /= count[0];
  centroid[1] /= count[1];
  const Mat val_emb = forward(params, features_of(validation));
  std::vector<Label> predicted;
  for (Eigen::Index i = 0; i < val_emb.cols(); ++i) {
    const double d0 = (val_emb.col(i) - centroid[0]).squaredNorm();
    const double d1 = (val_emb.col(i) - centroid[1]).squaredNorm();
    predicted.push_back(d1 < d0 ? Label::ud : Label::normal);
  }
  return snapshot_from(predicted, labels_of(validation));
}

}  // namespace

Stage1Result train_stage1(std::span<const LesionSample> train,
                          const EmbedderConfig& embedder, const Stage1Config& config,
                          const Stage1Options& options) {
  config.validate();
  if (train.empty()) throw InputError("train_stage1: empty training set");
  const auto index = PatientIndex::build(train);
  if (index.size() < static_cast<std::size_t>(config.sampler.patients_per_batch)) {
    throw InputError("train_stage1: fewer patients than patients_per_batch");
  }

  Stage1Result result;
  if (options.resume != nullptr) {
    result.state = *options.resume;
    if (result.state.params.input_dim() != embedder.input_dim) {
      throw InputError("train_stage1: resumed parameters do not match the embedder config");
    }
  } else {
    result.state.params = init_params(embedder);
    result.state.optimizer = AdamState::for_params(result.state.params.layers, config.optimizer);
  }
  auto& params = result.state.params;
  auto& adam = result.state.optimizer;

  const bool quads = uses_quadruplets(config.mode);
  const bool dynamic = config.mode == Mode::dmt_quad;
  MiningOptions mining;
  mining.strategy = config.strategy;
  mining.scope = config.mode == Mode::naive_triplet ? MiningScope::whole_batch
                                                   : MiningScope::per_patient;

  const int first_epoch = result.state.epochs_completed;
  for (int epoch = first_epoch; epoch < first_epoch + config.epochs; ++epoch) {
    TrainLogRecord rec;
    rec.epoch = epoch;
    std::map<std::string, PatientMarginLog> margin_log;
    const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));

    for (int b = 0; b < config.batches_per_epoch; ++b) {
      const std::uint64_t batch_seed = derive_seed(epoch_seed, static_cast<std::uint64_t>(b));
      const MiniBatch batch =
          sample_minibatch(train, index, config.sampler, derive_seed(batch_seed, "sample"));
      const Mat inputs = batch.feature_matrix();
      const Mat emb = forward(params, inputs);
      ++rec.batches;

      MarginMap margins;
      for (const auto& [pid, positions] : batch.by_patient) {
        double alpha = config.margins.alpha;
        if (dynamic) {
          std::vector<Vec> points;
          for (std::size_t pos : positions) points.emplace_back(emb.col(static_cast<Eigen::Index>(pos)));
          const auto dm = dynamic_margin(pid, points, config.margins.alpha,
                                         derive_seed(batch_seed, "margin:" + pid));
          alpha = config.pin_dynamic_margin ? config.margins.alpha : dm.alpha;
          auto& log = margin_log[pid];
          log.patient_id = pid;
          log.mean_alpha += alpha;
          ++log.batches;
          if (dm.fallback_used) ++log.fallbacks;
        }
        margins[pid] = alpha;
      }

      const std::uint64_t mine_seed = derive_seed(batch_seed, "mine");
      Mat grad;
      LossBreakdown loss;
      std::size_t instances = 0;
      if (quads) {
        auto mined = mine_quadruplets(batch, emb, margins, config.margins.beta, mine_seed, mining);
        rec.counters += mined.counters;
        instances = mined.quadruplets.size();
        if (instances > 0) {
          std::vector<QuadrupletIndex> idx;
          std::vector<double> alphas;
          for (const auto& q : mined.quadruplets) {
            idx.push_back(q.index);
            alphas.push_back(q.alpha);
          }
          loss = quad_loss_indexed(emb, idx, alphas, config.margins.beta, &grad);
        }
      } else {
        auto mined = mine_triplets(batch, emb, margins, mine_seed, mining);
        rec.counters += mined.counters;
        instances = mined.triplets.size();
        if (instances > 0) {
          std::vector<TripletIndex> idx;
          for (const auto& t : mined.triplets) idx.push_back(t.index);
          loss = triplet_loss_indexed(emb, idx, mined.margins, &grad);
        }
      }
      if (instances == 0) {
        ++rec.batches_skipped;
        continue;
      }
      if (!std::isfinite(loss.total)) {
        throw NumericError("train_stage1: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b) + " (" + std::to_string(instances) +
                           " instances)");
      }
      for (double v : loss.per_instance) rec.loss_sum += v;
      rec.instances += static_cast<std::int64_t>(instances);

      const Gradients g = backward(params, inputs, grad);
      adam_step(params.layers, g.layers, adam);
    }

    rec.mean_loss = rec.instances > 0 ? rec.loss_sum / static_cast<double>(rec.instances) : 0.0;
    for (auto& [_, m] : margin_log) {
      m.mean_alpha /= m.batches;
      rec.margins.push_back(m);
    }
    rec.validation = centroid_snapshot(params, train, options.validation);
    result.batches_skipped += rec.batches_skipped;
    result.state.epochs_completed = epoch + 1;
    if (options.on_epoch) options.on_epoch(rec);
    result.log.push_back(std::move(rec));
  }
  return result;
}

ClassifierHead ClassifierHead::zeros(int embedding_dim) {
  return {{Mat::Zero(2, embedding_dim), Vec::Zero(2)}};
}

Eigen::Vector2d ClassifierHead::logits(const Vec& embedding) const {
  if (embedding.size() != affine.weight.cols()) {
    throw InputError("classifier head: embedding dimension mismatch");
  }
  return affine.weight * embedding + affine.bias;
}

CrossEntropy cross_entropy(const Eigen::Vector2d& logits, Label label) {
  const double m = logits.maxCoeff();
  const Eigen::Vector2d shifted = logits.array() - m;
  // One shifted logit is 0, so log(sum exp) = log1p(exp(other)).
  const double log_z = std::log1p(std::exp(shifted.minCoeff()));
  const int y = label == Label::ud ? 1 : 0;
  CrossEntropy out;
  out.loss = log_z - shifted[y];
  out.grad = (shifted.array() - log_z).exp();
  out.grad[y] -= 1.0;
  return out;
}

Prediction predict_one(const Eigen::Vector2d& logits) {
  const double m = logits.maxCoeff();
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  return {e1 / (e0 + e1), logits[1] > logits[0] ? Label::ud : Label::normal};
}

std::vector<Prediction> predict(const EmbedderParams& params, const ClassifierHead& head,
                                std::span<const LesionSample> samples) {
  std::vector<Prediction> out;
  if (samples.empty()) return out;
  const Mat emb = forward(params, features_of(samples));
  if (emb.rows() != head.affine.weight.cols()) {
    throw InputError("predict: head does not match the embedding dimension");
  }
  const Mat logits = (head.affine.weight * emb).colwise() + head.affine.bias;
  out.reserve(samples.size());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) out.push_back(predict_one(logits.col(i)));
  return out;
}

namespace {

// Mean cross-entropy over the columns of `logits` and its gradient.
double batch_cross_entropy(const Mat& logits, std::span<const Label> labels, Mat& grad) {
  grad.resize(2, logits.cols());
  double sum = 0.0;
  const double scale = 1.0 / static_cast<double>(logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const auto ce = cross_entropy(logits.col(i), labels[static_cast<std::size_t>(i)]);
    sum += ce.loss;
    grad.col(i) = ce.grad * scale;
  }
  return sum * scale;
}

std::vector<Label> argmax_labels(const Mat& logits) {
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index i = 0; i < logits.cols(); ++i) out.push_back(predict_one(logits.col(i)).label);
  return out;
}

Mat head_logits(const ClassifierHead& head, const Mat& emb) {
  return (head.affine.weight * emb).colwise() + head.affine.bias;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Tracks the checkpoint with the best validation balanced accuracy.
template <typename Model>
struct BestKeeper {
  std::optional<Model> best;
  double score = -1.0;
  int epoch = 0;

  void offer(const Model& m, double s, int e) {
    if (!best || s > score) {
      best = m;
      score = s;
      epoch = e;
    }
  }
};

}  // namespace

Stage2Result train_stage2(const EmbedderParams& frozen, std::span<const LesionSample> train,
                          const Stage2Config& config,
                          std::span<const LesionSample> validation) {
  config.validate();
  if (train.empty()) throw InputError("train_stage2: empty training set");
  const Mat emb = forward(frozen, features_of(train));
  const auto labels = labels_of(train);
  const Mat val_emb = validation.empty() ? Mat() : forward(frozen, features_of(validation));
  const auto val_labels = labels_of(validation);

  Stage2Result result;
  result.head = ClassifierHead::zeros(frozen.embedding_dim());
  ParamTree tree{result.head.affine};
  AdamState adam = AdamState::for_params(tree, config.optimizer);
  BestKeeper<Layer> keeper;

  const auto n = static_cast<std::size_t>(emb.cols());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, epoch);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      Mat e(emb.rows(), static_cast<Eigen::Index>(end - start));
      std::vector<Label> y;
      for (std::size_t i = start; i < end; ++i) {
        e.col(static_cast<Eigen::Index>(i - start)) = emb.col(static_cast<Eigen::Index>(order[i]));
        y.push_back(labels[order[i]]);
      }
      Mat g;
      const Mat logits = (tree[0].weight * e).colwise() + tree[0].bias;
      loss_sum += batch_cross_entropy(logits, y, g);
      ++batches;
      ParamTree grads{{g * e.transpose(), g.rowwise().sum()}};
      adam_step(tree, grads, adam);
    }
    Stage2LogRecord rec{epoch, loss_sum / std::max(batches, 1), std::nullopt};
    if (!validation.empty()) {
      const ClassifierHead current{tree[0]};
      rec.validation = snapshot_from(argmax_labels(head_logits(current, val_emb)), val_labels);
      keeper.offer(tree[0], rec.validation->balanced_accuracy, epoch);
    }
    if (!std::isfinite(rec.mean_loss)) {
      throw NumericError("train_stage2: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back(rec);
  }
  if (keeper.best) {
    result.head.affine = *keeper.best;
    result.best_epoch = keeper.epoch;
  } else {
    result.head.affine = tree[0];
    result.best_epoch = std::max(config.epochs - 1, 0);
  }
  return result;
}

BaselineResult train_baseline(std::span<const LesionSample> train,
                              const EmbedderConfig& embedder, const Stage2Config& config,
                              std::span<const LesionSample> validation) {
  config.validate();
  if (train.empty()) throw InputError("train_baseline: empty training set");
  const Mat inputs = features_of(train);
  const auto labels = labels_of(train);
  const Mat val_inputs = features_of(validation);
  const auto val_labels = labels_of(validation);

  BaselineResult result;
  result.params = init_params(embedder);
  result.head = ClassifierHead::zeros(embedder.embedding_dim);
  AdamState body_adam = AdamState::for_params(result.params.layers, config.optimizer);
  ParamTree head_tree{result.head.affine};
  AdamState head_adam = AdamState::for_params(head_tree, config.optimizer);
  BestKeeper<std::pair<EmbedderParams, Layer>> keeper;

  const auto n = static_cast<std::size_t>(inputs.cols());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, epoch);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      Mat x(inputs.rows(), static_cast<Eigen::Index>(end - start));
      std::vector<Label> y;
      for (std::size_t i = start; i < end; ++i) {
        x.col(static_cast<Eigen::Index>(i - start)) = inputs.col(static_cast<Eigen::Index>(order[i]));
        y.push_back(labels[order[i]]);
      }
      const Mat e = forward(result.params, x);
      Mat g;
      const Mat logits = (head_tree[0].weight * e).colwise() + head_tree[0].bias;
      loss_sum += batch_cross_entropy(logits, y, g);
      ++batches;
      const Mat upstream = head_tree[0].weight.transpose() * g;
      ParamTree head_grads{{g * e.transpose(), g.rowwise().sum()}};
      const Gradients body_grads = backward(result.params, x, upstream);
      adam_step(result.params.layers, body_grads.layers, body_adam);
      adam_step(head_tree, head_grads, head_adam);
    }
    Stage2LogRecord rec{epoch, loss_sum / std::max(batches, 1), std::nullopt};
    if (!std::isfinite(rec.mean_loss)) {
      throw NumericError("train_baseline: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (!validation.empty()) {
      const ClassifierHead current{head_tree[0]};
      const Mat val_emb = forward(result.params, val_inputs);
      rec.validation = snapshot_from(argmax_labels(head_logits(current, val_emb)), val_labels);
      keeper.offer({result.params, head_tree[0]}, rec.validation->balanced_accuracy, epoch);
    }
    result.log.push_back(rec);
  }
  if (keeper.best) {
    result.params = keeper.best->first;
    result.head.affine = keeper.best->second;
    result.best_epoch = keeper.epoch;
  } else {
    result.head.affine = head_tree[0];
    result.best_epoch = std::max(config.epochs - 1, 0);
  }
  return result;
}

TrainedModel train_model(std::span<const LesionSample> train,
                         std::span<const LesionSample> validation,
                         const ExperimentConfig& config, Mode mode, std::uint64_t seed,
                         const TrainModelOptions& options) {
  TrainedModel model;
  model.mode = mode;
  model.seed = seed;
  EmbedderConfig embedder = config.embedder;
  embedder.seed = derive_seed(seed, "embedder");

  if (mode == Mode::baseline) {
    Stage2Config s2 = config.baseline;
    s2.seed = derive_seed(seed, "baseline");
    auto base = train_baseline(train, embedder, s2, validation);
    model.params = std::move(base.params);
    model.head = std::move(base.head);
    model.stage2_log = std::move(base.log);
    model.stage2_best_epoch = base.best_epoch;
    return model;
  }

  Stage1Config s1 = config.stage1;
  s1.mode = mode;
  s1.seed = derive_seed(seed, "stage1");
  Stage1Options opts;
  if (config.validation_snapshots) opts.validation = validation;
  opts.resume = options.resume;
  opts.on_epoch = options.on_epoch;
  auto stage1 = train_stage1(train, embedder, s1, opts);

  Stage2Config s2 = config.stage2;
  s2.seed = derive_seed(seed, "stage2");
  auto stage2 = train_stage2(stage1.state.params, train, s2, validation);

  model.params = stage1.state.params;
  model.head = std::move(stage2.head);
  model.stage1 = std::move(stage1.state);
  model.stage1_log = std::move(stage1.log);
  model.stage2_log = std::move(stage2.log);
  model.stage2_best_epoch = stage2.best_epoch;
  return model;
}

MetricsReport evaluate_model(const EmbedderParams& params, const ClassifierHead& head,
                             std::span<const LesionSample> samples, std::string mode,
                             std::uint64_t seed, Averaging averaging) {
  const auto preds = predict(params, head, samples);
  std::vector<Label> predicted;
  std::vector<double> prob;
  for (const auto& p : preds) {
    predicted.push_back(p.label);
    prob.push_back(p.probability_ud);
  }
  return make_report(std::move(mode), seed, predicted, prob, labels_of(samples), averaging);
}

ExperimentResult run_experiment(std::span<const LesionSample> cohort,
                                const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  result.split = split_by_patient(cohort, config.fractions, config.split_seed);
  const Cohort train =
      oversample_minority(select_patients(cohort, result.split.train), config.oversample_factor);
  const Cohort validation = select_patients(cohort, result.split.validation);
  const Cohort test = select_patients(cohort, result.split.test);

  for (Mode mode : config.modes) {
    std::vector<MetricsReport> runs;
    for (std::uint64_t seed : config.seeds) {
      const auto model = train_model(train, validation, config, mode, seed);
      runs.push_back(evaluate_model(model.params, model.head, test, std::string(to_string(mode)),
                                    seed, config.averaging));
    }
    result.reports.push_back(aggregate(std::string(to_string(mode)), std::move(runs)));
  }
  return result;
}

}  // namespace udm
