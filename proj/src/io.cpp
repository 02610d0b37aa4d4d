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


#include "cdro/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>
#include <system_error>

namespace cdro {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Line-oriented reader that tracks the 1-based line number.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot read " + path.string());
  }

  // Next nonblank line split at commas; false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++number_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      fields.clear();
      std::string_view rest(line_);
      for (;;) {
        const auto comma = rest.find(',');
        fields.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& message) const { throw SchemaError(path_, number_, message); }

  void expect_header(const std::vector<std::string_view>& fields, std::span<const std::string> names) {
    if (fields.size() != names.size()) fail("expected " + std::to_string(names.size()) + " header columns");
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (fields[j] != names[j]) fail("expected header column '" + names[j] + "'");
    }
  }

  int to_int(std::string_view field, const char* what) const {
    int v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
      fail(std::string("invalid ") + what + " '" + std::string(field) + "'");
    }
    return v;
  }

  double to_double(std::string_view field) const {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
      fail("invalid feature value '" + std::string(field) + "'");
    }
    return v;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  int number_ = 0;
};

void require_header(CsvReader& reader, std::vector<std::string_view>& fields, std::span<const std::string> names) {
  if (!reader.next(fields)) reader.fail("missing header");
  reader.expect_header(fields, names);
}

}  // namespace

SchemaError::SchemaError(std::filesystem::path file, int line, const std::string& message)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + message),
      file_(std::move(file)),
      line_(line) {}

void write_features_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  auto out = open_for_write(path);
  out << "instance_id";
  for (Eigen::Index j = 0; j < features.cols(); ++j) out << ",f" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < features.cols(); ++j) out << ',' << format_double(features(i, j));
    out << '\n';
  }
  finish(out, path);
}

void write_annotations_csv(const std::filesystem::path& path, std::span<const Annotation> annotations) {
  auto out = open_for_write(path);
  out << "instance_id,annotator_id,label\n";
  for (const auto& a : annotations) out << a.instance << ',' << a.annotator << ',' << a.label + 1 << '\n';
  finish(out, path);
}

void write_truth_csv(const std::filesystem::path& path, std::span<const ClassIndex> labels) {
  auto out = open_for_write(path);
  out << "instance_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] + 1 << '\n';
  finish(out, path);
}

Eigen::MatrixXd read_features_csv(const std::filesystem::path& path) {
  CsvReader reader(path);
  std::vector<std::string_view> fields;
  if (!reader.next(fields)) reader.fail("missing header");
  if (fields.size() < 2) reader.fail("expected instance_id and at least one feature column");
  std::vector<std::string> names{"instance_id"};
  for (std::size_t j = 0; j + 1 < fields.size(); ++j) names.push_back("f" + std::to_string(j));
  reader.expect_header(fields, names);
  const std::size_t d = names.size() - 1;

  std::vector<double> values;
  int rows = 0;
  while (reader.next(fields)) {
    if (fields.size() != d + 1) reader.fail("expected " + std::to_string(d + 1) + " columns");
    if (reader.to_int(fields[0], "instance_id") != rows) reader.fail("instance_id must equal the row index " + std::to_string(rows));
    for (std::size_t j = 1; j <= d; ++j) values.push_back(reader.to_double(fields[j]));
    ++rows;
  }
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(d));
  for (int i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(i) * d + j];
  return out;
}

std::vector<Annotation> read_annotations_csv(const std::filesystem::path& path, int n, int num_classes) {
  CsvReader reader(path);
  std::vector<std::string_view> fields;
  const std::string names[] = {"instance_id", "annotator_id", "label"};
  require_header(reader, fields, names);
  std::vector<Annotation> out;
  while (reader.next(fields)) {
    if (fields.size() != 3) reader.fail("expected 3 columns");
    Annotation a;
    a.instance = reader.to_int(fields[0], "instance_id");
    a.annotator = reader.to_int(fields[1], "annotator_id");
    const int label = reader.to_int(fields[2], "label");
    if (a.instance < 0 || a.instance >= n) reader.fail("instance_id out of range [0, " + std::to_string(n) + ")");
    if (a.annotator < 0) reader.fail("annotator_id must be nonnegative");
    if (label < 1 || (num_classes > 0 && label > num_classes)) reader.fail("label out of range");
    a.label = label - 1;
    out.push_back(a);
  }
  return out;
}

std::vector<ClassIndex> read_truth_csv(const std::filesystem::path& path, int n, int num_classes) {
  CsvReader reader(path);
  std::vector<std::string_view> fields;
  const std::string names[] = {"instance_id", "label"};
  require_header(reader, fields, names);
  std::vector<ClassIndex> out;
  while (reader.next(fields)) {
    if (fields.size() != 2) reader.fail("expected 2 columns");
    const int id = reader.to_int(fields[0], "instance_id");
    if (id != static_cast<int>(out.size())) reader.fail("instance_id must equal the row index " + std::to_string(out.size()));
    if (id >= n) reader.fail("more truth rows than instances");
    const int label = reader.to_int(fields[1], "label");
    if (label < 1 || (num_classes > 0 && label > num_classes)) reader.fail("label out of range");
    out.push_back(label - 1);
  }
  if (static_cast<int>(out.size()) != n) {
    throw SchemaError(path, 0, "expected " + std::to_string(n) + " truth rows, found " + std::to_string(out.size()));
  }
  return out;
}

AnnotationDataset read_dataset(const std::filesystem::path& features, const std::optional<std::filesystem::path>& annotations,
                               const std::optional<std::filesystem::path>& truth, int num_classes, int num_annotators) {
  Eigen::MatrixXd x = read_features_csv(features);
  const int n = static_cast<int>(x.rows());
  std::vector<Annotation> anns;
  if (annotations) anns = read_annotations_csv(*annotations, n, num_classes);
  std::optional<std::vector<ClassIndex>> labels;
  if (truth) labels = read_truth_csv(*truth, n, num_classes);

  int k = num_classes;
  int r = num_annotators;
  for (const auto& a : anns) {
    if (num_classes == 0) k = std::max(k, a.label + 1);
    if (num_annotators == 0) r = std::max(r, a.annotator + 1);
    if (num_annotators > 0 && a.annotator >= num_annotators) {
      throw std::invalid_argument("annotator id " + std::to_string(a.annotator) + " exceeds the declared count");
    }
  }
  if (labels && num_classes == 0) {
    for (ClassIndex y : *labels) k = std::max(k, y + 1);
  }
  if (k < 2) throw std::invalid_argument("could not infer at least two classes");
  return AnnotationDataset(std::move(x), std::move(anns), k, std::max(r, 1), std::move(labels));
}

}  // namespace cdro
