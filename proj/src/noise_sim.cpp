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

#include "cdro/noise_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cdro {

namespace {

double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

Eigen::MatrixXd class_means(int d, int k, double separation) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, d);
  if (d >= k) {
    for (int c = 0; c < k; ++c) means(c, c) = separation / std::numbers::sqrt2;
  } else {
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / k));
    for (int c = 0; c < k; ++c) {
      const double angle = 2.0 * std::numbers::pi * c / k;
      means(c, 0) = radius * std::cos(angle);
      means(c, 1) = radius * std::sin(angle);
    }
  }
  return means;
}

Eigen::MatrixXd random_projections(int d, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd v(d, k);
  for (int c = 0; c < k; ++c) {
    for (int f = 0; f < d; ++f) v(f, c) = normal(rng);
    v.col(c).normalize();
  }
  return v;
}

struct Preset {
  std::string_view level;
  std::array<double, 3> rates;
};

constexpr std::array<Preset, 3> kLevels{{
    {"low", {0.1, 0.2, 0.3}},
    {"mid", {0.3, 0.4, 0.5}},
    {"high", {0.5, 0.6, 0.7}},
}};

// Annotators per rate tier for each group size.
constexpr std::array<std::array<int, 4>, 6> kGroups{{
    {5, 2, 2, 1},
    {10, 4, 4, 2},
    {30, 11, 11, 8},
    {50, 18, 18, 14},
    {100, 35, 35, 30},
    {200, 70, 70, 60},
}};

}  // namespace

AnnotationDataset make_gaussian_dataset(int n, int d, int k, double separation, std::uint64_t seed) {
  if (k < 2 || d < 2 || n < k) throw std::invalid_argument("make_gaussian_dataset: need k >= 2, d >= 2, n >= k");
  if (separation < 0) throw std::invalid_argument("make_gaussian_dataset: separation must be nonnegative");
  std::mt19937_64 rng(seed);
  std::vector<ClassIndex> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % k;
  std::shuffle(labels.begin(), labels.end(), rng);

  const Eigen::MatrixXd means = class_means(d, k, separation);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < d; ++f) x(i, f) = means(labels[static_cast<std::size_t>(i)], f) + normal(rng);
  }
  return AnnotationDataset(std::move(x), {}, k, 1, std::move(labels));
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out = features.rowwise() - features.colwise().mean();
  for (Eigen::Index f = 0; f < out.cols(); ++f) {
    const double sd = std::sqrt(out.col(f).squaredNorm() / std::max<Eigen::Index>(1, out.rows()));
    if (sd > 0) out.col(f) /= sd;
  }
  return out;
}

Eigen::VectorXd flip_probabilities(const Eigen::MatrixXd& standardized, std::span<const ClassIndex> truth,
                                   const AnnotatorSpec& spec) {
  const Eigen::Index n = standardized.rows();
  const double tau = spec.target_rate;
  if (spec.model == NoiseModel::Uniform || tau == 0.0) return Eigen::VectorXd::Constant(n, tau);

  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w(i) = softplus(standardized.row(i).dot(spec.projections.col(truth[static_cast<std::size_t>(i)])));
  }
  w /= w.mean();
  // Clipping at min(2 tau, 1) pulls the mean below tau; rescale the weights
  // so the realized average matches.
  const double cap = std::min(2.0 * tau, 1.0);
  auto mean_rate = [&](double scale) { return (scale * tau * w.array()).min(cap).mean(); };
  double lo = 1.0;
  double hi = 1.0;
  while (mean_rate(hi) < tau && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < tau ? lo : hi) = mid;
  }
  return (hi * tau * w.array()).min(cap).matrix();
}

AnnotationDataset annotate(const AnnotationDataset& dataset, std::span<const AnnotatorSpec> annotators,
                           int labels_per_instance, std::uint64_t seed) {
  const int r = static_cast<int>(annotators.size());
  if (r == 0) throw std::invalid_argument("annotate: no annotators");
  if (labels_per_instance < 1 || labels_per_instance > r) {
    throw std::invalid_argument("annotate: labels_per_instance must lie in [1, R]");
  }
  const auto& truth = dataset.true_labels();
  const int n = dataset.n();
  const int k = dataset.k();
  std::mt19937_64 rng(seed);

  std::vector<AnnotatorSpec> specs(annotators.begin(), annotators.end());
  for (auto& s : specs) {
    if (!(s.target_rate >= 0.0 && s.target_rate < 1.0)) throw std::invalid_argument("annotate: rate outside [0,1)");
    if (s.projections.size() == 0) s.projections = random_projections(dataset.d(), k, rng);
    if (s.projections.rows() != dataset.d() || s.projections.cols() != k) {
      throw std::invalid_argument("annotate: projection shape must be d x K");
    }
  }

  const Eigen::MatrixXd z = standardize(dataset.features());
  std::vector<Eigen::VectorXd> flip;
  flip.reserve(specs.size());
  for (const auto& s : specs) flip.push_back(flip_probabilities(z, truth, s));

  std::vector<int> pool(static_cast<std::size_t>(r));
  std::vector<Annotation> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(labels_per_instance));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> weights(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    std::iota(pool.begin(), pool.end(), 0);
    for (int m = 0; m < labels_per_instance; ++m) {
      std::uniform_int_distribution<int> pick(m, r - 1);
      std::swap(pool[static_cast<std::size_t>(m)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    for (int m = 0; m < labels_per_instance; ++m) {
      const int a = pool[static_cast<std::size_t>(m)];
      const auto& s = specs[static_cast<std::size_t>(a)];
      const ClassIndex y = truth[static_cast<std::size_t>(i)];
      ClassIndex label = y;
      if (unit(rng) < flip[static_cast<std::size_t>(a)](i)) {
        for (int c = 0; c < k; ++c) {
          weights[static_cast<std::size_t>(c)] =
              c == y ? 0.0 : (s.model == NoiseModel::Uniform ? 1.0 : std::exp(z.row(i).dot(s.projections.col(c))));
        }
        std::discrete_distribution<int> target(weights.begin(), weights.end());
        label = target(rng);
      }
      out.push_back({i, a, label});
    }
  }
  return dataset.with_annotations(std::move(out), r);
}

std::vector<AnnotatorSpec> annotator_preset(std::string_view name) {
  for (const Preset& level : kLevels) {
    for (const auto& group : kGroups) {
      const std::string key = "idn-" + std::string(level.level) + "-r" + std::to_string(group[0]);
      if (key != name) continue;
      std::vector<AnnotatorSpec> out;
      for (int tier = 0; tier < 3; ++tier) {
        for (int m = 0; m < group[static_cast<std::size_t>(tier) + 1]; ++m) {
          out.push_back({level.rates[static_cast<std::size_t>(tier)], NoiseModel::InstanceDependent, {}});
        }
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown annotator preset: " + std::string(name));
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const Preset& level : kLevels) {
    for (const auto& group : kGroups) out.push_back("idn-" + std::string(level.level) + "-r" + std::to_string(group[0]));
  }
  return out;
}

double realized_noise_rate(const AnnotationDataset& dataset) {
  const auto& truth = dataset.true_labels();
  if (dataset.annotations().empty()) return 0.0;
  std::size_t wrong = 0;
  for (const Annotation& a : dataset.annotations()) {
    if (a.label != truth[static_cast<std::size_t>(a.instance)]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(dataset.annotations().size());
}

}  // namespace cdro
