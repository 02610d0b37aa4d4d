// Copyright 2026 The cdro Authors
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


// Command-line runner: generate, train, eval, oracle-check.

#include "cdro/experiment.hpp"
#include "cdro/io.hpp"
#include "cdro/oracle_suite.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3 };

// Options shared by the subcommands that build an ExperimentConfig.
struct ConfigOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<std::string> epsilon;
  std::optional<std::string> lrt_threshold;
  std::optional<std::string> lambda;
  std::vector<std::string> baselines;
  std::optional<std::string> data_dir;
  std::optional<std::string> output_dir;

  void attach(CLI::App& app, bool training) {
    app.add_option("--config", config_file, "Flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override one config key (key=value), repeatable");
    app.add_option("--seed", seed, "Seed for data generation and training");
    app.add_option("--data-dir", data_dir, "Dataset directory");
    app.add_option("--preset", preset, "Annotator preset, e.g. idn-mid-r5");
    if (!training) return;
    app.add_option("--epsilon", epsilon, "Ambiguity radius in (0, 1/K)");
    app.add_option("--lrt-threshold", lrt_threshold, "Pseudo-label likelihood-ratio threshold (> 1)");
    app.add_option("--lambda", lambda, "Multiplier step parameter");
    app.add_option("--baseline", baselines, "Baselines to train: mv, em or none (repeatable)");
    app.add_option("--output-dir", output_dir, "Run directory");
  }

  // Defaults, then the file, then --set, then the named flags.
  cdro::ExperimentConfig build() const {
    cdro::ExperimentConfig config;
    if (!config_file.empty()) {
      for (const auto& [key, value] : cdro::read_config_file(config_file)) config.set(key, value);
    }
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw cdro::ConfigError("--set expects key=value, got '" + item + "'");
      config.set(item.substr(0, eq), item.substr(eq + 1));
    }
    if (seed) config.set("seed", std::to_string(*seed));
    if (preset) config.set("preset", *preset);
    if (epsilon) config.set("epsilon", *epsilon);
    if (lrt_threshold) config.set("lrt_threshold", *lrt_threshold);
    if (lambda) config.set("lambda", *lambda);
    if (!baselines.empty()) {
      std::string joined;
      for (const auto& b : baselines) joined += (joined.empty() ? "" : ",") + b;
      config.set("baselines", joined);
    }
    if (data_dir) config.set("data_dir", *data_dir);
    if (output_dir) config.set("output_dir", *output_dir);
    // Relative paths live under the output root.
    if (const char* root = std::getenv("CDRO_OUTPUT_ROOT"); root && *root) {
      if (config.data_dir.is_relative()) config.data_dir = fs::path(root) / config.data_dir;
      if (config.output_dir.is_relative()) config.output_dir = fs::path(root) / config.output_dir;
    }
    return config;
  }
};

int cmd_generate(const ConfigOptions& options) {
  const auto config = options.build();
  const auto data = cdro::generate_data(config);
  cdro::write_data_dir(config.data_dir, data, config);
  std::cout << "wrote " << data.train.n() << " instances, " << data.train.annotations().size() << " annotations from "
            << data.train.r() << " annotators to " << config.data_dir.string() << '\n';
  return kOk;
}

void print_outcome(const cdro::RunOutcome& r) {
  std::cout << std::left << std::setw(10) << r.name << " best_epoch " << std::setw(4) << r.best_epoch << " val "
            << std::fixed << std::setprecision(4) << r.best_val_acc;
  if (r.test_acc) std::cout << " test " << *r.test_acc;
  std::cout << '\n';
}

int cmd_train(const ConfigOptions& options, bool verbose) {
  const auto config = options.build();
  if (!fs::exists(config.data_dir)) {
    std::cerr << "data directory " << config.data_dir.string() << " not found; run `generate` first\n";
    return kDataError;
  }
  const auto data = cdro::read_data_dir(config.data_dir);
  const auto summary = cdro::run_experiment(config, data, verbose ? &std::cerr : nullptr);
  print_outcome(summary.adaptcdrp);
  if (summary.ce_mv) print_outcome(*summary.ce_mv);
  if (summary.ce_em) print_outcome(*summary.ce_em);
  std::cout << "summary written to " << (config.output_dir / "summary.json").string() << '\n';
  return kOk;
}

int cmd_eval(const std::string& run_dir, const std::string& data_dir) {
  const auto data = cdro::read_data_dir(data_dir);
  for (const auto& r : cdro::evaluate_run(run_dir, data)) {
    std::cout << std::left << std::setw(10) << r.name << " accuracy " << std::fixed << std::setprecision(4)
              << r.accuracy << '\n';
  }
  return kOk;
}

int cmd_oracle_check(std::uint64_t seed) {
  struct Named {
    const char* name;
    cdro::CheckResult result;
  };
  const Named checks[] = {
      {"duality", cdro::check_duality(1000, seed)},
      {"binary_action", cdro::check_binary_action(500, seed + 1)},
      {"multiclass_action", cdro::check_multiclass_action(500, seed + 2)},
      {"batch_closed_form", cdro::check_batch_closed_form(200, seed + 3)},
      {"gradients", cdro::check_gradients(50, seed + 4)},
  };
  bool all = true;
  for (const auto& c : checks) {
    std::cout << (c.result.passed ? "PASS " : "FAIL ") << std::left << std::setw(18) << c.name << ' '
              << c.result.detail << " (" << std::fixed << std::setprecision(2) << c.result.seconds << " s)\n";
    all = all && c.result.passed;
  }
  return all ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust training from crowdsourced labels"};
  app.require_subcommand(1);

  ConfigOptions gen_options;
  auto* generate = app.add_subcommand("generate", "Write a synthetic annotated dataset");
  gen_options.attach(*generate, false);

  ConfigOptions train_options;
  bool verbose = false;
  auto* train = app.add_subcommand("train", "Train AdaptCDRP and baselines on a dataset directory");
  train_options.attach(*train, true);
  train->add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  std::string run_dir;
  std::string eval_data;
  auto* eval = app.add_subcommand("eval", "Score saved checkpoints against true labels");
  eval->add_option("--run", run_dir, "Run directory with checkpoints")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--data-dir", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  std::uint64_t oracle_seed = 20260101;
  auto* oracle = app.add_subcommand("oracle-check", "Run the closed-form oracle suites");
  oracle->add_option("--seed", oracle_seed, "Seed for the random instances");

  auto* keys = app.add_subcommand("keys", "List config keys with their defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(gen_options);
    if (*train) return cmd_train(train_options, verbose);
    if (*eval) return cmd_eval(run_dir, eval_data);
    if (*oracle) return cmd_oracle_check(oracle_seed);
    if (*keys) {
      const auto defaults = cdro::ExperimentConfig{}.entries();
      for (const auto& k : cdro::config_keys()) {
        std::cout << std::left << std::setw(20) << k.name << std::setw(16) << defaults.at(k.name) << k.help << '\n';
      }
      return kOk;
    }
  } catch (const cdro::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const cdro::SchemaError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
