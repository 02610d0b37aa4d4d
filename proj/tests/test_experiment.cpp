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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cdro/experiment.hpp"
#include "cdro/io.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace cdro;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cdro_test_experiment" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ExperimentConfig small_config(const std::string& name) {
  ExperimentConfig c;
  c.set("n", "500");
  c.set("test_n", "500");
  c.set("warmup_epochs", "5");
  c.set("epochs", "15");
  c.set("seed", "3");
  c.data_dir = scratch(name + "_data");
  c.output_dir = scratch(name + "_run");
  return c;
}

}  // namespace

TEST_CASE("config keys") {
  ExperimentConfig c;
  c.set("epsilon", "0.05");
  c.set("transform", "linear");
  c.set("lrt_threshold", " 3 ");
  c.set("baselines", "em");
  c.set("small_loss_ratio", "0.5");
  CHECK(c.train.spec.epsilon() == 0.05);
  CHECK(c.train.spec.transform().kind() == TransformKind::Linear);
  CHECK(c.train.lrt_threshold == 3.0);
  CHECK_FALSE(c.baseline_mv);
  CHECK(c.baseline_em);
  CHECK(c.train.small_loss_ratio == 0.5);
  c.set("small_loss_ratio", "auto");
  CHECK_FALSE(c.train.small_loss_ratio);
  CHECK_THROWS_AS(c.set("nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("epochs", "ten"), ConfigError);
  CHECK_THROWS_AS(c.set("epsilon", "-1"), ConfigError);
  CHECK_THROWS_AS(c.set("baselines", "mv,xx"), ConfigError);

  // Every documented key round-trips through its printed value.
  const auto entries = c.entries();
  CHECK(entries.size() == config_keys().size());
  ExperimentConfig copy;
  for (const auto& [key, value] : entries) copy.set(key, value);
  CHECK(copy.entries() == entries);
}

TEST_CASE("config file parsing") {
  const auto dir = scratch("config_file");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "run.cfg");
    out << "# comment\nseed = 7\n\nepsilon=0.1  # trailing\n";
  }
  const auto kv = read_config_file(dir / "run.cfg");
  CHECK(kv.at("seed") == "7");
  CHECK(kv.at("epsilon") == "0.1");
  {
    std::ofstream out(dir / "bad.cfg");
    out << "seed = 7\njust words\n";
  }
  try {
    read_config_file(dir / "bad.cfg");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("generate writes the documented files deterministically") {
  auto c = small_config("gen");
  c.set("n", "2000");
  const auto data = generate_data(c);
  write_data_dir(c.data_dir, data, c);
  for (const char* f : {"features.csv", "annotations.csv", "truth.csv", "test_features.csv", "test_truth.csv",
                        "manifest.json"}) {
    CHECK(fs::exists(c.data_dir / f));
  }
  // Header plus one row per annotation.
  std::ifstream in(c.data_dir / "annotations.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 2001);

  const auto manifest = Json::parse(slurp(c.data_dir / "manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["preset"] == "idn-mid-r5");

  auto again = c;
  again.data_dir = scratch("gen_again");
  write_data_dir(again.data_dir, generate_data(again), again);
  for (const char* f : {"features.csv", "annotations.csv", "truth.csv", "test_features.csv", "manifest.json"}) {
    CHECK(slurp(c.data_dir / f) == slurp(again.data_dir / f));
  }

  const auto loaded = read_data_dir(c.data_dir);
  CHECK(loaded.train.features() == data.train.features());
  CHECK(loaded.train.annotations() == data.train.annotations());
  CHECK(loaded.train.true_labels() == data.train.true_labels());
  CHECK(loaded.train.r() == 5);
  REQUIRE(loaded.test);
  CHECK(loaded.test->true_labels() == data.test->true_labels());
}

TEST_CASE("large presets use every annotator") {
  auto c = small_config("high");
  c.set("n", "3000");
  c.set("preset", "idn-high-r30");
  const auto data = generate_data(c);
  std::set<int> ids;
  for (const auto& a : data.train.annotations()) ids.insert(a.annotator);
  CHECK(ids.size() == 30);
  CHECK_THROWS_AS([&] {
    auto bad = c;
    bad.set("preset", "idn-extreme-r5");
    generate_data(bad);
  }(), ConfigError);
}

TEST_CASE("training smoke run writes metrics, summary and checkpoints") {
  auto c = small_config("smoke");
  const auto data = generate_data(c);
  const auto start = std::chrono::steady_clock::now();
  const auto summary = run_experiment(c, data);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 60.0);

  std::ifstream in(c.output_dir / "metrics.jsonl");
  int prev = 0;
  int records = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = Json::parse(line);
    CHECK(j["epoch"].get<int>() > prev);
    prev = j["epoch"].get<int>();
    for (const char* key : {"train_loss", "gamma_a", "gamma_b", "pseudo_coverage", "val_acc", "test_acc"}) {
      CHECK(j.contains(key));
    }
    if (j["phase"] == "robust") CHECK(j.contains("pseudo_precision"));
    ++records;
  }
  CHECK(records == 15);

  const auto s = Json::parse(slurp(c.output_dir / "summary.json"));
  for (const char* run : {"adaptcdrp", "ce_mv", "ce_em"}) {
    REQUIRE(s.contains(run));
    const double acc = s[run]["test_acc"].get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  CHECK(s["adaptcdrp"]["test_acc"].get<double>() == summary.adaptcdrp.test_acc.value());

  const auto evals = evaluate_run(c.output_dir, data);
  REQUIRE(evals.size() == 3);
  CHECK(evals[0].name == "adaptcdrp");
  CHECK(evals[0].accuracy == summary.adaptcdrp.test_acc.value());
  CHECK(evals[1].accuracy == summary.ce_mv->test_acc.value());
}

TEST_CASE("baseline toggle") {
  auto c = small_config("toggle");
  c.set("baselines", "mv");
  c.set("epochs", "7");
  const auto summary = run_experiment(c, generate_data(c));
  CHECK(summary.ce_mv);
  CHECK_FALSE(summary.ce_em);
  const auto s = Json::parse(slurp(c.output_dir / "summary.json"));
  CHECK(s.contains("adaptcdrp"));
  CHECK(s.contains("ce_mv"));
  CHECK_FALSE(s.contains("ce_em"));
}

TEST_CASE("epsilon outside (0, 1/K) is rejected before training") {
  auto c = small_config("bad_eps");
  c.set("epsilon", "0.3");
  const auto data = generate_data(c);
  CHECK_THROWS_AS(run_experiment(c, data), ConfigError);
  CHECK_FALSE(fs::exists(c.output_dir));
  CHECK_THROWS_AS(c.set("epsilon", "0"), ConfigError);
}
