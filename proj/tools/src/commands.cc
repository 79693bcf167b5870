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

#include "udm_cli/commands.h"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "udm/checkpoint.h"
#include "udm/error.h"
#include "udm/evaluation.h"
#include "udm/gradcheck.h"
#include "udm/pipeline.h"
#include "udm/random.h"

namespace udm::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Flags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "TOML config file");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--mode", f.mode, "baseline|naive_triplet|ps_triplet|t_quad|dmt_quad");
  cmd->add_option("--out", f.out, "output root; runs go to <out>/<config hash>");
  cmd->add_option("--dataset", f.dataset, "cohort JSONL (default: generate)");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint JSON");
  cmd->add_option("--set", f.overrides, "key=value override, repeatable");
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw ConfigError("cannot read config file " + f.config_file);
    apply_toml(c, in);
  }
  for (const auto& o : f.overrides) apply_override(c, o);
  if (f.seed) c.seed = *f.seed;
  if (f.mode) c.mode = *f.mode;
  if (f.out) c.out = *f.out;
  if (f.dataset) c.dataset = *f.dataset;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  c.validate();
  return c;
}

fs::path prepare_directory(const RunConfig& c) {
  const fs::path dir = run_directory(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "effective_config.toml", dump_toml(c));
  return dir;
}

class MissingArtifact : public IoError {
 public:
  using IoError::IoError;
};

Cohort load_dataset(const RunConfig& c) {
  if (c.dataset.empty()) return generate_cohort(c.effective_generator());
  if (!fs::exists(c.dataset)) throw MissingArtifact("dataset not found: " + c.dataset);
  return load_cohort(c.dataset);
}

Checkpoint load_required_checkpoint(const RunConfig& c) {
  if (c.checkpoint.empty()) throw MissingArtifact("no checkpoint given (--checkpoint)");
  if (!fs::exists(c.checkpoint)) throw MissingArtifact("checkpoint not found: " + c.checkpoint);
  return load_checkpoint(c.checkpoint);
}

ExperimentConfig experiment_for(const RunConfig& c, const Cohort& cohort) {
  if (cohort.empty()) throw InputError("dataset is empty");
  ExperimentConfig e = c.experiment;
  e.embedder.input_dim = static_cast<int>(cohort.front().features.size());
  e.split_seed = c.split_seed();
  e.validate();
  return e;
}

Cohort part_of(const Cohort& cohort, const SplitSpec& split, const std::string& which) {
  if (which == "all") return cohort;
  if (which == "train") return select_patients(cohort, split.train);
  if (which == "validation") return select_patients(cohort, split.validation);
  return select_patients(cohort, split.test);
}

int cmd_generate(const RunConfig& c, std::ostream& out) {
  const auto cohort = generate_cohort(c.effective_generator());
  const fs::path dir = prepare_directory(c);
  save_cohort(cohort, dir / "cohort.jsonl");
  const std::string summary = format_summary(summarize(cohort));
  write_text_file(dir / "summary.txt", summary);
  out << summary << "wrote " << (dir / "cohort.jsonl").string() << "\n";
  return kExitOk;
}

// Read-only: prints per-patient counts and the imbalance ratio.
int cmd_inspect(const RunConfig& c, std::ostream& out) {
  out << format_summary(summarize(load_dataset(c)));
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  const Mode mode = parse_mode(c.mode);
  const Cohort cohort = load_dataset(c);
  const ExperimentConfig e = experiment_for(c, cohort);

  std::optional<Stage1State> resume;
  if (!c.checkpoint.empty()) {
    if (mode == Mode::baseline) throw ConfigError("baseline runs cannot be resumed");
    const Checkpoint ck = load_required_checkpoint(c);
    if (ck.mode != c.mode) throw ConfigError("checkpoint mode " + ck.mode + " != " + c.mode);
    if (!ck.optimizer) throw ConfigError("checkpoint carries no optimizer state");
    if (ck.config_fingerprint != model_fingerprint(c)) {
      out << "warning: checkpoint was written under a different configuration\n";
    }
    resume = Stage1State{ck.params, *ck.optimizer, ck.epoch};
  }

  const fs::path dir = prepare_directory(c);
  const SplitSpec split = split_by_patient(cohort, e.fractions, e.split_seed);
  const Cohort train = oversample_minority(select_patients(cohort, split.train),
                                           e.oversample_factor);
  const Cohort validation = select_patients(cohort, split.validation);

  std::vector<std::string> stage1_lines;
  std::ofstream stage1_log;
  if (mode != Mode::baseline) {
    stage1_log.open(dir / "stage1_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!stage1_log) throw IoError("cannot write stage1_log.jsonl");
  }
  TrainModelOptions opts;
  if (resume) opts.resume = &*resume;
  opts.on_epoch = [&](const TrainLogRecord& r) {
    stage1_lines.push_back(to_json_line(r));
    stage1_log << stage1_lines.back() << "\n" << std::flush;
  };

  TrainedModel model;
  try {
    model = train_model(train, validation, e, mode, c.seed, opts);
  } catch (const NumericError& ex) {
    ojson diag{{"error", ex.what()}, {"command", "train"}, {"mode", c.mode},
               {"seed", c.seed},     {"config", dump_toml(c)}};
    ojson recent = ojson::array();
    const std::size_t from = stage1_lines.size() > 5 ? stage1_lines.size() - 5 : 0;
    for (std::size_t i = from; i < stage1_lines.size(); ++i) {
      recent.push_back(ojson::parse(stage1_lines[i]));
    }
    diag["recent_epochs"] = recent;
    write_text_file(dir / "diagnostic.json", diag.dump(2));
    out << "training aborted; diagnostics in " << (dir / "diagnostic.json").string() << "\n";
    throw;
  }

  std::string stage2_text;
  for (const auto& r : model.stage2_log) stage2_text += to_json_line(r) + "\n";
  write_text_file(dir / (mode == Mode::baseline ? "baseline_log.jsonl" : "stage2_log.jsonl"),
                  stage2_text);

  Checkpoint ck;
  ck.mode = c.mode;
  ck.seed = c.seed;
  ck.epoch = model.stage1 ? model.stage1->epochs_completed : 0;
  ck.config_fingerprint = model_fingerprint(c);
  ck.embedder = e.embedder;
  ck.embedder.seed = derive_seed(c.seed, "embedder");
  ck.params = model.params;
  if (model.stage1) ck.optimizer = model.stage1->optimizer;
  ck.head = model.head;
  ck.split = split;
  save_checkpoint(ck, dir / "checkpoint.json");

  const auto report = evaluate_model(model.params, model.head, validation, c.mode, c.seed,
                                     e.averaging);
  write_text_file(dir / "validation_metrics.json", report_to_json(report) + "\n");
  out << "mode " << c.mode << ": " << model.stage1_log.size() << " stage-1 epochs, "
      << model.stage2_log.size() << " classifier epochs (best " << model.stage2_best_epoch
      << ")\n"
      << "validation sensitivity " << report.sensitivity << " specificity "
      << report.specificity << "\n"
      << "wrote " << (dir / "checkpoint.json").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  const Checkpoint ck = load_required_checkpoint(c);
  if (!ck.head) throw ConfigError("checkpoint carries no classifier head");
  const Cohort cohort = load_dataset(c);
  const Cohort part = part_of(cohort, ck.split, c.eval_split);
  if (part.empty()) throw InputError("selected split is empty");
  const auto report = evaluate_model(ck.params, *ck.head, part, ck.mode, ck.seed,
                                     c.experiment.averaging);
  const fs::path dir = prepare_directory(c);
  const std::string json = report_to_json(report) + "\n";
  write_text_file(dir / "metrics.json", json);
  out << json;
  return kExitOk;
}

int cmd_compare(const RunConfig& c, std::ostream& out) {
  const Cohort cohort = load_dataset(c);
  const ExperimentConfig e = experiment_for(c, cohort);
  const fs::path dir = prepare_directory(c);
  const auto result = run_experiment(cohort, e);
  const std::string table = comparison_table(result);
  write_text_file(dir / "compare.txt", table);
  write_text_file(dir / "compare.json", experiment_to_json(result) + "\n");
  out << table << "wrote " << (dir / "compare.json").string() << "\n";
  return kExitOk;
}

int cmd_export(const RunConfig& c, std::ostream& out) {
  const Checkpoint ck = load_required_checkpoint(c);
  const Cohort cohort = load_dataset(c);
  Cohort part = part_of(cohort, ck.split, c.eval_split);
  std::stable_sort(part.begin(), part.end(), [](const auto& a, const auto& b) {
    return std::tie(a.patient_id, a.lesion_id) < std::tie(b.patient_id, b.lesion_id);
  });
  const fs::path dir = prepare_directory(c);
  export_embeddings(ck.params, part, dir / "embeddings.csv");

  std::vector<Vec> emb;
  emb.reserve(part.size());
  for (const auto& s : part) emb.push_back(embed(ck.params, s.features));
  const auto proj = pca_2d(emb);
  std::string csv = "patient_id,lesion_id,label,pc1,pc2\n";
  char buf[96];
  for (std::size_t i = 0; i < part.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", proj.points[i][0], proj.points[i][1]);
    csv += part[i].patient_id + "," + part[i].lesion_id + "," +
           std::string(to_string(part[i].label)) + buf;
  }
  write_text_file(dir / "projection.csv", csv);
  out << "exported " << part.size() << " embeddings; explained variance "
      << proj.explained_variance[0] << ", " << proj.explained_variance[1] << "\n"
      << "wrote " << (dir / "embeddings.csv").string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out) {
  GradCheckConfig g;
  g.margins = c.experiment.stage1.margins;
  g.margins.validate(true);
  g.corrupt_analytic = c.gradcheck_corrupt;
  ojson runs = ojson::array();
  bool pass = true;
  for (int i = 0; i < c.gradcheck_seeds; ++i) {
    const std::uint64_t seed = derive_seed(c.seed, static_cast<std::uint64_t>(i));
    const auto r = grad_check(g, seed);
    const bool ok = r.max_relative_error < c.gradcheck_tolerance && r.instances > 0;
    pass = pass && ok;
    out << (ok ? "PASS" : "FAIL") << " seed " << seed << " max_rel_err " << r.max_relative_error
        << " worst layer " << r.worst_layer << " " << (r.worst_is_bias ? "bias" : "weight")
        << "[" << r.worst_index << "] analytic " << r.worst_analytic << " numeric "
        << r.worst_numeric << " (" << r.parameters_checked << " params, " << r.skipped_at_kinks
        << " skipped at kinks, " << r.instances << " quadruplets)\n";
    runs.push_back({{"seed", seed},
                    {"pass", ok},
                    {"max_relative_error", r.max_relative_error},
                    {"worst_layer", r.worst_layer},
                    {"worst_is_bias", r.worst_is_bias},
                    {"worst_index", r.worst_index},
                    {"worst_analytic", r.worst_analytic},
                    {"worst_numeric", r.worst_numeric},
                    {"parameters_checked", r.parameters_checked},
                    {"skipped_at_kinks", r.skipped_at_kinks},
                    {"instances", r.instances}});
  }
  const fs::path dir = prepare_directory(c);
  ojson report{{"tolerance", c.gradcheck_tolerance}, {"pass", pass}, {"runs", runs}};
  write_text_file(dir / "gradcheck.json", report.dump(2) + "\n");
  return pass ? kExitOk : kExitGradcheckFailed;
}

}  // namespace

std::string model_fingerprint(const RunConfig& config) {
  RunConfig c = config;
  c.out = "-";
  c.checkpoint.clear();
  c.experiment.stage1.epochs = 0;
  c.eval_split = "test";
  c.gradcheck_seeds = 1;
  c.gradcheck_tolerance = 1.0;
  c.gradcheck_corrupt = false;
  return config_hash(c);
}

fs::path run_directory(const RunConfig& config) {
  return fs::path(config.out) / config_hash(config);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Patient-aware metric learning for ugly-duckling lesion classification", "udm"};
  app.require_subcommand(1);
  Flags flags;
  using Handler = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"generate", "generate a synthetic cohort", cmd_generate},
      {"inspect", "print per-patient counts of a cohort", cmd_inspect},
      {"train", "train one mode (metric stage, then classifier)", cmd_train},
      {"evaluate", "evaluate a checkpoint on a split", cmd_evaluate},
      {"compare", "train and test every mode over every seed", cmd_compare},
      {"export-embeddings", "write embeddings and a 2-D projection", cmd_export},
      {"gradcheck", "finite-difference check of the quadruplet loss gradient", cmd_gradcheck},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, fn] : commands) {
    subs.push_back(app.add_subcommand(name, help));
    add_common(subs.back(), flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << app.help();
    return kExitConfigError;
  }

  try {
    const RunConfig config = resolve(flags);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return std::get<2>(commands[i])(config, out);
    }
    return kExitConfigError;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitConfigError;
  } catch (const MissingArtifact& ex) {
    err << "missing artifact: " << ex.what() << "\n";
    return kExitMissingArtifact;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kExitMissingArtifact;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kExitNumericFailure;
  } catch (const InputError& ex) {
    err << "input error: " << ex.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace udm::cli
