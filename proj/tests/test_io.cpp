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

#include "cdro/io.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

using namespace cdro;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cdro_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int schema_line(const std::function<void()>& read) {
  try {
    read();
  } catch (const SchemaError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("features round trip exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1e3);
  Eigen::MatrixXd x(17, 3);
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = normal(rng);
  x(0, 0) = 1e-300;
  x(1, 1) = -0.0;
  const auto path = scratch("features.csv");
  write_features_csv(path, x);
  CHECK(read_features_csv(path) == x);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "instance_id,f0,f1,f2");
}

TEST_CASE("annotations and truth use 1-based labels on disk") {
  const std::vector<Annotation> anns{{0, 0, 0}, {0, 2, 1}, {1, 1, 2}};
  const auto path = scratch("annotations.csv");
  write_annotations_csv(path, anns);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "instance_id,annotator_id,label");
  std::getline(in, line);
  CHECK(line == "0,0,1");
  CHECK(read_annotations_csv(path, 2, 3) == anns);

  const std::vector<ClassIndex> truth{2, 0};
  write_truth_csv(scratch("truth.csv"), truth);
  CHECK(read_truth_csv(scratch("truth.csv"), 2, 3) == truth);
}

TEST_CASE("schema violations carry line numbers") {
  const auto f = scratch("bad_features.csv");
  write_file(f, "instance_id,f0,f1\n0,1.0,2.0\n1,abc,2.0\n");
  CHECK(schema_line([&] { read_features_csv(f); }) == 3);
  write_file(f, "instance_id,x0\n0,1.0\n");
  CHECK(schema_line([&] { read_features_csv(f); }) == 1);
  write_file(f, "instance_id,f0\n0,1.0\n2,1.0\n");
  CHECK(schema_line([&] { read_features_csv(f); }) == 3);
  write_file(f, "instance_id,f0\n0,1.0\n1\n");
  CHECK(schema_line([&] { read_features_csv(f); }) == 3);
  write_file(f, "");
  CHECK(schema_line([&] { read_features_csv(f); }) == 0);

  const auto a = scratch("bad_annotations.csv");
  write_file(a, "instance_id,annotator_id,label\n0,0,1\n\n5,0,1\n");
  CHECK(schema_line([&] { read_annotations_csv(a, 2, 2); }) == 4);
  write_file(a, "instance_id,annotator_id,label\n0,0,0\n");
  CHECK(schema_line([&] { read_annotations_csv(a, 2, 2); }) == 2);
  write_file(a, "instance_id,annotator_id,label\n0,0,3\n");
  CHECK(schema_line([&] { read_annotations_csv(a, 2, 2); }) == 2);
  write_file(a, "instance_id,annotator,label\n");
  CHECK(schema_line([&] { read_annotations_csv(a, 2, 2); }) == 1);

  const auto t = scratch("bad_truth.csv");
  write_file(t, "instance_id,label\n0,1\n");
  CHECK_THROWS_AS(read_truth_csv(t, 2), SchemaError);
  write_file(t, "instance_id,label\n1,1\n");
  CHECK(schema_line([&] { read_truth_csv(t, 2); }) == 2);
}

TEST_CASE("CRLF line endings and blank lines are accepted") {
  const auto f = scratch("crlf.csv");
  write_file(f, "instance_id,f0\r\n0,1.5\r\n\r\n1,-2\r\n");
  const auto x = read_features_csv(f);
  REQUIRE(x.rows() == 2);
  CHECK(x(1, 0) == -2.0);
}

TEST_CASE("read_dataset infers counts") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
  write_features_csv(scratch("ds_features.csv"), x);
  const std::vector<Annotation> anns{{0, 0, 0}, {1, 3, 2}, {2, 1, 1}};
  write_annotations_csv(scratch("ds_annotations.csv"), anns);
  const std::vector<ClassIndex> truth{0, 2, 1};
  write_truth_csv(scratch("ds_truth.csv"), truth);
  const auto ds = read_dataset(scratch("ds_features.csv"), scratch("ds_annotations.csv"), scratch("ds_truth.csv"));
  CHECK(ds.n() == 3);
  CHECK(ds.k() == 3);
  CHECK(ds.r() == 4);
  CHECK(ds.true_labels() == truth);
  const auto declared = read_dataset(scratch("ds_features.csv"), scratch("ds_annotations.csv"), std::nullopt, 5, 6);
  CHECK(declared.k() == 5);
  CHECK(declared.r() == 6);
  CHECK_FALSE(declared.has_truth());
  CHECK_THROWS(read_dataset(scratch("ds_features.csv"), scratch("ds_annotations.csv"), std::nullopt, 0, 2));
}
