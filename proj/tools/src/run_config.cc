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

#include "udm_cli/run_config.h"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <system_error>

#include "CLI11.hpp"
#include "udm/error.h"
#include "udm/random.h"

namespace udm::cli {

namespace {

const std::string& single(std::string_view key, const std::vector<std::string>& values) {
  if (values.size() != 1) throw ConfigError(std::string(key) + ": expected a single value");
  return values.front();
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": not an integer: '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": not a number: '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(std::string(key) + ": expected true or false");
}

std::string real_literal(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string string_literal(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <typename T>
std::string list_literal(const std::vector<T>& values, std::string (*fmt)(const T&)) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out + "]";
}

ConfigKey int_key(std::string name, int& ref) {
  return {name,
          [name, &ref](const auto& v) { ref = parse_integer<int>(name, single(name, v)); },
          [&ref] { return std::to_string(ref); }};
}

ConfigKey u64_key(std::string name, std::uint64_t& ref) {
  return {name,
          [name, &ref](const auto& v) {
            ref = parse_integer<std::uint64_t>(name, single(name, v));
          },
          [&ref] { return std::to_string(ref); }};
}

ConfigKey real_key(std::string name, double& ref) {
  return {name, [name, &ref](const auto& v) { ref = parse_real(name, single(name, v)); },
          [&ref] { return real_literal(ref); }};
}

ConfigKey bool_key(std::string name, bool& ref) {
  return {name, [name, &ref](const auto& v) { ref = parse_bool(name, single(name, v)); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

ConfigKey string_key(std::string name, std::string& ref) {
  return {name, [name, &ref](const auto& v) { ref = single(name, v); },
          [&ref] { return string_literal(ref); }};
}

}  // namespace

void RunConfig::validate() const {
  generator.validate();
  experiment.validate();
  parse_mode(mode);
  if (eval_split != "train" && eval_split != "validation" && eval_split != "test" &&
      eval_split != "all") {
    throw ConfigError("evaluate.split must be train, validation, test or all");
  }
  if (gradcheck_seeds < 1) throw ConfigError("gradcheck.seeds must be >= 1");
  if (!(gradcheck_tolerance > 0.0)) throw ConfigError("gradcheck.tolerance must be positive");
  if (out.empty()) throw ConfigError("out must not be empty");
}

GeneratorConfig RunConfig::effective_generator() const {
  GeneratorConfig g = generator;
  g.seed = derive_seed(seed, "generator");
  return g;
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "split"); }

std::vector<ConfigKey> config_keys(RunConfig& c) {
  auto& g = c.generator;
  auto& e = c.experiment;
  std::vector<ConfigKey> keys = {
      u64_key("seed", c.seed),
      string_key("mode", c.mode),
      string_key("out", c.out),
      string_key("dataset", c.dataset),
      string_key("checkpoint", c.checkpoint),
      {"modes",
       [&e](const auto& v) {
         std::vector<Mode> modes;
         for (const auto& s : v) modes.push_back(parse_mode(s));
         e.modes = std::move(modes);
       },
       [&e] {
         std::vector<std::string> names;
         for (Mode m : e.modes) names.emplace_back(to_string(m));
         return list_literal<std::string>(names, [](const std::string& s) {
           return string_literal(s);
         });
       }},
      {"seeds",
       [&e](const auto& v) {
         std::vector<std::uint64_t> seeds;
         for (const auto& s : v) seeds.push_back(parse_integer<std::uint64_t>("seeds", s));
         e.seeds = std::move(seeds);
       },
       [&e] {
         return list_literal<std::uint64_t>(e.seeds, [](const std::uint64_t& s) {
           return std::to_string(s);
         });
       }},
      int_key("oversample_factor", e.oversample_factor),
      {"averaging",
       [&e](const auto& v) {
         try {
           e.averaging = parse_averaging(single("averaging", v));
         } catch (const InputError& ex) {
           throw ConfigError(ex.what());
         }
       },
       [&e] { return string_literal(to_string(e.averaging)); }},
      bool_key("validation_snapshots", e.validation_snapshots),

      int_key("generator.n_patients", g.n_patients),
      int_key("generator.min_lesions", g.min_lesions),
      int_key("generator.max_lesions", g.max_lesions),
      real_key("generator.ud_fraction", g.ud_fraction),
      int_key("generator.feature_dim", g.feature_dim),
      real_key("generator.center_spread", g.center_spread),
      real_key("generator.normal_noise", g.normal_noise),
      real_key("generator.ud_offset_min", g.ud_offset_min),
      real_key("generator.ud_offset_max", g.ud_offset_max),

      real_key("split.train", e.fractions.train),
      real_key("split.validation", e.fractions.validation),
      real_key("split.test", e.fractions.test),

      {"embedder.hidden_dims",
       [&e](const auto& v) {
         std::vector<int> dims;
         for (const auto& s : v) dims.push_back(parse_integer<int>("embedder.hidden_dims", s));
         e.embedder.hidden_dims = std::move(dims);
       },
       [&e] {
         return list_literal<int>(e.embedder.hidden_dims,
                                  [](const int& d) { return std::to_string(d); });
       }},
      int_key("embedder.embedding_dim", e.embedder.embedding_dim),

      int_key("sampler.patients_per_batch", e.stage1.sampler.patients_per_batch),
      int_key("sampler.samples_per_patient", e.stage1.sampler.samples_per_patient),

      real_key("margins.alpha", e.stage1.margins.alpha),
      real_key("margins.beta", e.stage1.margins.beta),

      int_key("stage1.epochs", e.stage1.epochs),
      int_key("stage1.batches_per_epoch", e.stage1.batches_per_epoch),
      real_key("stage1.lr", e.stage1.optimizer.lr),
      {"stage1.strategy",
       [&e](const auto& v) {
         const auto& s = single("stage1.strategy", v);
         if (s == "random_hard") {
           e.stage1.strategy = SelectionStrategy::random_hard;
         } else if (s == "hardest") {
           e.stage1.strategy = SelectionStrategy::hardest;
         } else {
           throw ConfigError("stage1.strategy must be random_hard or hardest");
         }
       },
       [&e] {
         return string_literal(e.stage1.strategy == SelectionStrategy::hardest ? "hardest"
                                                                               : "random_hard");
       }},
      bool_key("stage1.pin_dynamic_margin", e.stage1.pin_dynamic_margin),

      int_key("stage2.epochs", e.stage2.epochs),
      int_key("stage2.batch_size", e.stage2.batch_size),
      real_key("stage2.lr", e.stage2.optimizer.lr),

      int_key("baseline.epochs", e.baseline.epochs),
      int_key("baseline.batch_size", e.baseline.batch_size),
      real_key("baseline.lr", e.baseline.optimizer.lr),

      string_key("evaluate.split", c.eval_split),

      int_key("gradcheck.seeds", c.gradcheck_seeds),
      real_key("gradcheck.tolerance", c.gradcheck_tolerance),
      bool_key("gradcheck.corrupt", c.gradcheck_corrupt),
  };
  return keys;
}

void set_value(RunConfig& config, std::string_view key, const std::vector<std::string>& values) {
  for (auto& k : config_keys(config)) {
    if (k.name == key) {
      k.set(values);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_toml(RunConfig& config, std::istream& in) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& ex) {
    throw ConfigError(std::string("config file: ") + ex.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    set_value(config, item.fullname(), item.inputs);
  }
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
  }
  std::istringstream in(std::string(assignment.substr(0, eq)) + " = " +
                        std::string(assignment.substr(eq + 1)) + "\n");
  apply_toml(config, in);
}

std::string dump_toml(const RunConfig& config) {
  RunConfig copy = config;
  std::string top;
  std::vector<std::string> sections;
  std::map<std::string, std::string> bodies;
  for (const auto& k : config_keys(copy)) {
    const auto dot = k.name.find('.');
    if (dot == std::string::npos) {
      top += k.name + " = " + k.get() + "\n";
      continue;
    }
    const std::string section = k.name.substr(0, dot);
    if (!bodies.count(section)) sections.push_back(section);
    bodies[section] += k.name.substr(dot + 1) + " = " + k.get() + "\n";
  }
  std::string out = top;
  for (const auto& s : sections) out += "\n[" + s + "]\n" + bodies[s];
  return out;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump_toml(config))));
  return buf;
}

}  // namespace udm::cli
