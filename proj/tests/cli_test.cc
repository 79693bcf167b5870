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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "udm/checkpoint.h"
#include "udm/cohort.h"
#include "udm_cli/commands.h"

namespace udm::cli {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kTiny = {
    "--set", "generator.n_patients=10",   "--set", "generator.min_lesions=20",
    "--set", "generator.max_lesions=30",  "--set", "generator.ud_fraction=0.1",
    "--set", "generator.feature_dim=4",   "--set", "embedder.hidden_dims=[8]",
    "--set", "embedder.embedding_dim=4",  "--set", "stage1.epochs=2",
    "--set", "stage1.batches_per_epoch=3", "--set", "stage2.epochs=3",
    "--set", "baseline.epochs=3",         "--set", "oversample_factor=2",
    "--set", "seeds=[1, 2]"};

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("udm_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  Result run(std::vector<std::string> args, bool tiny = true) {
    if (tiny) {
      args.insert(args.end(), {"--out", root_.string()});
      args.insert(args.end(), kTiny.begin(), kTiny.end());
    }
    std::vector<const char*> argv = {"udm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  // The single run directory created under the output root by a command.
  fs::path only_run_dir() const {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root_)) dirs.push_back(e.path());
    EXPECT_EQ(dirs.size(), 1u);
    return dirs.empty() ? fs::path() : dirs.front();
  }

  fs::path root_;
};

std::string slurp(const fs::path& p) { return read_text_file(p); }

std::vector<std::string> lines_of(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST_F(Cli, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(run({}, false).code, kExitConfigError);
  EXPECT_EQ(run({"frobnicate"}, false).code, kExitConfigError);
  EXPECT_EQ(run({"generate", "--no-such-flag"}, false).code, kExitConfigError);
  EXPECT_EQ(run({"generate", "--set", "generator.colour=3"}).code, kExitConfigError);
  EXPECT_EQ(run({"generate", "--set", "generator.n_patients=zero"}).code, kExitConfigError);
  EXPECT_EQ(run({"train", "--mode", "siamese"}).code, kExitConfigError);
  EXPECT_EQ(run({"generate", "--set", "split.train=0.9"}).code, kExitConfigError);
  EXPECT_EQ(run({"generate", "--config", (root_ / "absent.toml").string()}).code,
            kExitConfigError);
  const auto help = run({"--help"}, false);
  EXPECT_EQ(help.code, kExitOk);
  EXPECT_NE(help.out.find("gradcheck"), std::string::npos);
}

TEST_F(Cli, MissingArtifactsExitThree) {
  EXPECT_EQ(run({"evaluate"}).code, kExitMissingArtifact);
  EXPECT_EQ(run({"evaluate", "--checkpoint", (root_ / "none.json").string()}).code,
            kExitMissingArtifact);
  EXPECT_EQ(run({"export-embeddings"}).code, kExitMissingArtifact);
  EXPECT_EQ(run({"train", "--dataset", (root_ / "none.jsonl").string()}).code,
            kExitMissingArtifact);
  write_text_file(root_ / "broken.json", "{not json");
  EXPECT_EQ(run({"evaluate", "--checkpoint", (root_ / "broken.json").string()}).code,
            kExitMissingArtifact);
}

TEST_F(Cli, GenerateIsDeterministicAndRoundTrips) {
  ASSERT_EQ(run({"generate", "--seed", "4"}).code, kExitOk);
  const fs::path dir = only_run_dir();
  const std::string first = slurp(dir / "cohort.jsonl");
  ASSERT_EQ(run({"generate", "--seed", "4"}).code, kExitOk);
  EXPECT_EQ(slurp(dir / "cohort.jsonl"), first);

  const auto cohort = load_cohort(dir / "cohort.jsonl");
  EXPECT_EQ(cohort_to_jsonl(cohort), first);
  EXPECT_EQ(summarize(cohort).patients.size(), 10u);
  EXPECT_EQ(slurp(dir / "summary.txt"), format_summary(summarize(cohort)));
  EXPECT_TRUE(fs::exists(dir / "effective_config.toml"));

  const auto inspected = run({"inspect", "--dataset", (dir / "cohort.jsonl").string()});
  ASSERT_EQ(inspected.code, kExitOk);
  EXPECT_EQ(inspected.out, format_summary(summarize(cohort)));
}

TEST_F(Cli, EffectiveConfigReproducesTheRunDirectory) {
  ASSERT_EQ(run({"generate", "--seed", "9"}).code, kExitOk);
  const fs::path dir = only_run_dir();
  const auto again = run({"generate", "--config", (dir / "effective_config.toml").string()}, false);
  ASSERT_EQ(again.code, kExitOk) << again.err;
  EXPECT_EQ(only_run_dir(), dir);
}

TEST_F(Cli, TrainResumeEvaluateExport) {
  ASSERT_EQ(run({"train", "--mode", "dmt_quad"}).code, kExitOk);
  const fs::path dir = only_run_dir();
  for (const char* f : {"checkpoint.json", "stage1_log.jsonl", "stage2_log.jsonl",
                        "validation_metrics.json", "effective_config.toml"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto log = lines_of(dir / "stage1_log.jsonl");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(log[1])["epoch"], 1);
  EXPECT_EQ(lines_of(dir / "stage2_log.jsonl").size(), 3u);
  const auto ck = load_checkpoint(dir / "checkpoint.json");
  EXPECT_EQ(ck.epoch, 2);
  EXPECT_TRUE(ck.optimizer.has_value());

  // Resuming continues the epoch counter.
  const fs::path ck_path = root_ / "ck.json";
  fs::copy_file(dir / "checkpoint.json", ck_path);
  const auto resumed = run({"train", "--mode", "dmt_quad", "--checkpoint", ck_path.string()});
  ASSERT_EQ(resumed.code, kExitOk) << resumed.err;
  EXPECT_EQ(resumed.out.find("warning"), std::string::npos);
  fs::path resumed_dir;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (e.is_directory() && e.path() != dir) resumed_dir = e.path();
  }
  ASSERT_FALSE(resumed_dir.empty());
  const auto more = lines_of(resumed_dir / "stage1_log.jsonl");
  ASSERT_EQ(more.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(more[0])["epoch"], 2);
  EXPECT_EQ(load_checkpoint(resumed_dir / "checkpoint.json").epoch, 4);

  // Mode mismatch on resume is a configuration error.
  EXPECT_EQ(run({"train", "--mode", "t_quad", "--checkpoint", ck_path.string()}).code,
            kExitConfigError);

  const auto eval = run({"evaluate", "--checkpoint", ck_path.string()});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  const auto metrics = nlohmann::json::parse(eval.out);
  for (const char* k : {"sensitivity", "specificity", "accuracy", "roc_auc"}) {
    EXPECT_GE(metrics[k].get<double>(), 0.0) << k;
    EXPECT_LE(metrics[k].get<double>(), 1.0) << k;
  }

  const auto exported =
      run({"export-embeddings", "--checkpoint", ck_path.string(), "--set", "evaluate.split=all"});
  ASSERT_EQ(exported.code, kExitOk) << exported.err;
  fs::path export_dir;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (fs::exists(e.path() / "embeddings.csv")) export_dir = e.path();
  }
  ASSERT_FALSE(export_dir.empty());
  const auto rows = lines_of(export_dir / "embeddings.csv");
  const auto proj = lines_of(export_dir / "projection.csv");
  EXPECT_EQ(rows.front(), "patient_id,lesion_id,label,e_0,e_1,e_2,e_3");
  EXPECT_EQ(proj.front(), "patient_id,lesion_id,label,pc1,pc2");
  EXPECT_EQ(rows.size(), proj.size());
  EXPECT_GT(rows.size(), 200u);
}

TEST_F(Cli, BaselineTrainsWithoutMetricStage) {
  ASSERT_EQ(run({"train", "--mode", "baseline"}).code, kExitOk);
  const fs::path dir = only_run_dir();
  EXPECT_FALSE(fs::exists(dir / "stage1_log.jsonl"));
  EXPECT_EQ(lines_of(dir / "baseline_log.jsonl").size(), 3u);
  const auto ck = load_checkpoint(dir / "checkpoint.json");
  EXPECT_FALSE(ck.optimizer.has_value());
  EXPECT_EQ(run({"train", "--mode", "baseline", "--checkpoint", (dir / "checkpoint.json").string()})
                .code,
            kExitConfigError);
}

TEST_F(Cli, EvaluateSeparableDataset) {
  // Every patient's UD lesions sit on the far side of the first feature.
  Cohort cohort;
  for (int p = 0; p < 10; ++p) {
    for (int i = 0; i < 20; ++i) {
      const bool ud = i < 4;
      Vec x(4);
      x << (ud ? 3.0 : -3.0) + 0.01 * i, 0.1 * p, -0.05 * i, 1.0;
      cohort.push_back({"P0" + std::to_string(p), "L" + std::to_string(100 + i),
                        ud ? Label::ud : Label::normal, x});
    }
  }
  const fs::path data = fs::path(root_.string() + "_data.jsonl");
  save_cohort(cohort, data);
  ASSERT_EQ(run({"train", "--mode", "baseline", "--dataset", data.string(), "--set",
                 "baseline.epochs=30", "--set", "baseline.lr=0.01"})
                .code,
            kExitOk);
  const fs::path ck = only_run_dir() / "checkpoint.json";
  const auto eval = run({"evaluate", "--dataset", data.string(), "--checkpoint", ck.string()});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  const auto m = nlohmann::json::parse(eval.out);
  EXPECT_EQ(m["sensitivity"].get<double>(), 1.0);
  EXPECT_EQ(m["specificity"].get<double>(), 1.0);
  EXPECT_EQ(m["roc_auc"].get<double>(), 1.0);
  fs::remove(data);
}

TEST_F(Cli, CompareRerunIsByteIdentical) {
  const std::vector<std::string> args = {"compare", "--set",
                                         "modes=[\"baseline\", \"ps_triplet\", \"dmt_quad\"]"};
  const auto first = run(args);
  ASSERT_EQ(first.code, kExitOk) << first.err;
  const fs::path dir = only_run_dir();
  const std::string table = slurp(dir / "compare.txt");
  const std::string json = slurp(dir / "compare.json");
  ASSERT_EQ(run(args).code, kExitOk);
  EXPECT_EQ(slurp(dir / "compare.txt"), table);
  EXPECT_EQ(slurp(dir / "compare.json"), json);
  EXPECT_EQ(lines_of(dir / "compare.txt").size(), 4u);
  const auto j = nlohmann::json::parse(json);
  ASSERT_EQ(j["modes"].size(), 3u);
  EXPECT_EQ(j["modes"][2]["mode"], "dmt_quad");
  EXPECT_EQ(j["modes"][2]["runs"].size(), 2u);
}

TEST_F(Cli, GradcheckExitCodes) {
  const auto ok = run({"gradcheck"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  EXPECT_TRUE(fs::exists(only_run_dir() / "gradcheck.json"));
  const auto bad = run({"gradcheck", "--set", "gradcheck.corrupt=true"});
  EXPECT_EQ(bad.code, kExitGradcheckFailed);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, NumericFailureExitsFourWithDiagnostic) {
  const auto r = run({"train", "--mode", "t_quad", "--set", "stage1.lr=1e300"});
  EXPECT_EQ(r.code, kExitNumericFailure);
  const auto diag = nlohmann::json::parse(slurp(only_run_dir() / "diagnostic.json"));
  EXPECT_EQ(diag["mode"], "t_quad");
  EXPECT_TRUE(diag.contains("recent_epochs"));
}

}  // namespace
}  // namespace udm::cli
