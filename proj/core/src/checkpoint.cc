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

#include "udm/checkpoint.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "udm/error.h"

namespace udm {

using ojson = nlohmann::ordered_json;

namespace {

ojson matrix_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return ojson{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat matrix_from(const ojson& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw IoError("checkpoint: matrix shape does not match its data");
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

ojson tree_json(const ParamTree& tree) {
  ojson arr = ojson::array();
  for (const auto& l : tree) {
    arr.push_back({{"weight", matrix_json(l.weight)}, {"bias", matrix_json(l.bias)}});
  }
  return arr;
}

ParamTree tree_from(const ojson& j) {
  ParamTree tree;
  for (const auto& l : j) {
    Mat bias = matrix_from(l.at("bias"));
    if (bias.cols() != 1) throw IoError("checkpoint: bias must be a column");
    tree.push_back({matrix_from(l.at("weight")), bias.col(0)});
  }
  return tree;
}

ojson split_json(const SplitSpec& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

ojson counters_json(const MiningCounters& c) {
  return {{"pairs", c.pairs},
          {"candidates", c.candidates},
          {"hard", c.hard},
          {"semi_hard", c.semi_hard},
          {"easy", c.easy},
          {"secondary_candidates", c.secondary_candidates},
          {"pairs_dropped", c.pairs_dropped},
          {"selected", c.selected},
          {"no_cross_patient", c.no_cross_patient}};
}

ojson snapshot_json(const std::optional<ValidationSnapshot>& v) {
  if (!v) return nullptr;
  return {{"sensitivity", v->sensitivity},
          {"specificity", v->specificity},
          {"balanced_accuracy", v->balanced_accuracy}};
}

ojson report_json(const MetricsReport& r) {
  return {{"mode", r.mode},
          {"seed", r.seed},
          {"counts", {{"tp", r.counts.tp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}, {"fp", r.counts.fp}}},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"roc_auc", r.roc_auc},
          {"degenerate", r.degenerate}};
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  ojson j;
  j["format"] = "udm-checkpoint/1";
  j["mode"] = c.mode;
  j["seed"] = c.seed;
  j["epoch"] = c.epoch;
  j["config_fingerprint"] = c.config_fingerprint;
  j["embedder"] = {{"input_dim", c.embedder.input_dim},
                   {"hidden_dims", c.embedder.hidden_dims},
                   {"embedding_dim", c.embedder.embedding_dim},
                   {"activation", "relu"},
                   {"seed", c.embedder.seed}};
  j["params"] = tree_json(c.params.layers);
  if (c.optimizer) {
    const auto& a = *c.optimizer;
    j["optimizer"] = {{"lr", a.hyper.lr},
                      {"beta1", a.hyper.beta1},
                      {"beta2", a.hyper.beta2},
                      {"eps", a.hyper.eps},
                      {"step", a.step},
                      {"first_moment", tree_json(a.first_moment)},
                      {"second_moment", tree_json(a.second_moment)}};
  } else {
    j["optimizer"] = nullptr;
  }
  if (c.head) {
    j["head"] = tree_json({c.head->affine});
  } else {
    j["head"] = nullptr;
  }
  j["split"] = split_json(c.split);
  return j.dump(1);
}

Checkpoint checkpoint_from_json(std::string_view text) {
  Checkpoint c;
  try {
    const auto j = ojson::parse(text);
    if (j.value("format", "") != "udm-checkpoint/1") throw IoError("checkpoint: unknown format");
    c.mode = j.at("mode").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    c.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    const auto& e = j.at("embedder");
    c.embedder.input_dim = e.at("input_dim").get<int>();
    c.embedder.hidden_dims = e.at("hidden_dims").get<std::vector<int>>();
    c.embedder.embedding_dim = e.at("embedding_dim").get<int>();
    c.embedder.seed = e.at("seed").get<std::uint64_t>();
    c.params.layers = tree_from(j.at("params"));
    if (!j.at("optimizer").is_null()) {
      const auto& o = j.at("optimizer");
      AdamState a;
      a.hyper = {o.at("lr").get<double>(), o.at("beta1").get<double>(),
                 o.at("beta2").get<double>(), o.at("eps").get<double>()};
      a.step = o.at("step").get<std::int64_t>();
      a.first_moment = tree_from(o.at("first_moment"));
      a.second_moment = tree_from(o.at("second_moment"));
      if (!same_shape(a.first_moment, c.params.layers) ||
          !same_shape(a.second_moment, c.params.layers)) {
        throw IoError("checkpoint: optimizer moments do not match the parameters");
      }
      c.optimizer = std::move(a);
    }
    if (!j.at("head").is_null()) {
      auto head = tree_from(j.at("head"));
      if (head.size() != 1) throw IoError("checkpoint: head must be a single layer");
      c.head = ClassifierHead{head.front()};
    }
    const auto& s = j.at("split");
    c.split.train = s.at("train").get<std::vector<std::string>>();
    c.split.validation = s.at("validation").get<std::vector<std::string>>();
    c.split.test = s.at("test").get<std::vector<std::string>>();
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& ex) {
    throw IoError(std::string("checkpoint: ") + ex.what());
  }
  try {
    c.embedder.validate();
  } catch (const ConfigError& ex) {
    throw IoError(std::string("checkpoint: ") + ex.what());
  }
  // Layer l maps width[l] -> width[l + 1].
  std::vector<int> widths{c.embedder.input_dim};
  widths.insert(widths.end(), c.embedder.hidden_dims.begin(), c.embedder.hidden_dims.end());
  widths.push_back(c.embedder.embedding_dim);
  bool shapes_ok = c.params.layers.size() + 1 == widths.size();
  for (std::size_t l = 0; shapes_ok && l < c.params.layers.size(); ++l) {
    const auto& layer = c.params.layers[l];
    shapes_ok = layer.weight.cols() == widths[l] && layer.weight.rows() == widths[l + 1] &&
                layer.bias.size() == widths[l + 1];
  }
  if (!shapes_ok) throw IoError("checkpoint: parameter shapes disagree with the embedder config");
  if (c.head && (c.head->affine.weight.rows() != 2 || c.head->affine.bias.size() != 2 ||
                 c.head->affine.weight.cols() != c.embedder.embedding_dim)) {
    throw IoError("checkpoint: head shape disagrees with the embedding dimension");
  }
  return c;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_text_file(path));
}

std::string to_json_line(const TrainLogRecord& r) {
  ojson margins = ojson::array();
  for (const auto& m : r.margins) {
    margins.push_back({{"patient_id", m.patient_id},
                       {"alpha", m.mean_alpha},
                       {"batches", m.batches},
                       {"fallbacks", m.fallbacks}});
  }
  ojson j{{"stage", 1},
          {"epoch", r.epoch},
          {"mean_loss", r.mean_loss},
          {"loss_sum", r.loss_sum},
          {"instances", r.instances},
          {"batches", r.batches},
          {"batches_skipped", r.batches_skipped},
          {"counters", counters_json(r.counters)},
          {"margins", margins},
          {"validation", snapshot_json(r.validation)}};
  return j.dump();
}

std::string to_json_line(const Stage2LogRecord& r) {
  ojson j{{"stage", 2},
          {"epoch", r.epoch},
          {"mean_loss", r.mean_loss},
          {"validation", snapshot_json(r.validation)}};
  return j.dump();
}

std::string report_to_json(const MetricsReport& report, int indent) {
  return report_json(report).dump(indent);
}

std::string experiment_to_json(const ExperimentResult& result, int indent) {
  ojson modes = ojson::array();
  for (const auto& agg : result.reports) {
    ojson table;
    for (std::size_t c = 0; c < kMetricColumns.size(); ++c) {
      table[std::string(kMetricColumns[c])] = {{"mean", agg.columns[c].mean},
                                               {"std", agg.columns[c].std}};
    }
    ojson runs = ojson::array();
    for (const auto& r : agg.runs) runs.push_back(report_json(r));
    modes.push_back({{"mode", agg.mode}, {"seeds", agg.seeds}, {"metrics", table}, {"runs", runs}});
  }
  ojson j{{"split", split_json(result.split)},
          {"columns", std::vector<std::string>(kMetricColumns.begin(), kMetricColumns.end())},
          {"std", "population"},
          {"modes", modes}};
  return j.dump(indent);
}

std::string comparison_table(const ExperimentResult& result) {
  static constexpr const char* kHeaders[] = {"Specificity", "Sensitivity", "Recall", "Precision",
                                             "F1-score",    "AUC",         "Accuracy"};
  constexpr int kModeWidth = 15;
  constexpr int kCellWidth = 13;
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-*s", kModeWidth, "Method");
  out += buf;
  for (const char* h : kHeaders) {
    std::snprintf(buf, sizeof(buf), "%*s", kCellWidth, h);
    out += buf;
  }
  out += '\n';
  for (const auto& agg : result.reports) {
    std::snprintf(buf, sizeof(buf), "%-*s", kModeWidth, agg.mode.c_str());
    out += buf;
    for (const auto& cell : agg.columns) {
      // "±" is two bytes but one column wide.
      std::snprintf(buf, sizeof(buf), "%*s%.1f±%.1f", 0, "", 100.0 * cell.mean, 100.0 * cell.std);
      const int width = static_cast<int>(std::string(buf).size()) - 1;
      out.append(static_cast<std::size_t>(std::max(kCellWidth - width, 1)), ' ');
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace udm
