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

#ifndef UDM_CLI_COMMANDS_H_
#define UDM_CLI_COMMANDS_H_

#include <filesystem>
#include <ostream>
#include <string>

#include "udm_cli/run_config.h"

namespace udm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitGradcheckFailed = 1,
  kExitConfigError = 2,
  kExitMissingArtifact = 3,
  kExitNumericFailure = 4,
};

// Hash of the settings that determine the trained model; stored in
// checkpoints and compared on resume. Output paths, the resume checkpoint
// and the stage-1 epoch count are excluded.
std::string model_fingerprint(const RunConfig& config);

// <out>/<config_hash>; created on demand by the commands.
std::filesystem::path run_directory(const RunConfig& config);

// Entry point behind the udm executable. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace udm::cli

#endif  // UDM_CLI_COMMANDS_H_
