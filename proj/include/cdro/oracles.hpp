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

// Brute-force reference solvers used to check the closed forms. They share
// only the loss transform with the library code and evaluate the dual
// objective directly.

#pragma once

#include "cdro/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

namespace cdro::oracle {

/// gamma * eps^p + sum_j P_j max_y' {loss(y') - gamma * kappa^p * 1(y' != j)}.
inline double point_objective(const Eigen::VectorXd& losses, const Eigen::VectorXd& posterior, double gamma,
                              double eps_pow, double kappa_pow) {
  double total = gamma * eps_pow;
  for (Eigen::Index j = 0; j < losses.size(); ++j) {
    double best = losses(j);
    for (Eigen::Index y = 0; y < losses.size(); ++y) {
      if (y != j) best = std::max(best, losses(y) - gamma * kappa_pow);
    }
    total += posterior(j) * best;
  }
  return total;
}

/// Exact minimum over gamma >= 0: the objective is convex piecewise linear
/// with kinks at positive loss gaps, so scanning those and 0 suffices.
inline double point_objective_min(const Eigen::VectorXd& losses, const Eigen::VectorXd& posterior, double eps_pow,
                                  double kappa_pow) {
  double best = point_objective(losses, posterior, 0.0, eps_pow, kappa_pow);
  for (Eigen::Index a = 0; a < losses.size(); ++a) {
    for (Eigen::Index b = 0; b < losses.size(); ++b) {
      const double gap = losses(a) - losses(b);
      if (gap > 0) best = std::min(best, point_objective(losses, posterior, gap / kappa_pow, eps_pow, kappa_pow));
    }
  }
  return best;
}

struct BinaryGridResult {
  double value;
  double psi;
};

/// Minimum over a psi grid of the exact inner minimum in gamma (K = 2,
/// psi = probability of class 1).
inline BinaryGridResult binary_grid_min(const RobustLossSpecd& spec, const CategoricalDistd& posterior,
                                        double psi_step = 1e-3) {
  const auto& t = spec.transform();
  const int steps = static_cast<int>(std::lround(1.0 / psi_step));
  BinaryGridResult out{std::numeric_limits<double>::infinity(), 0.0};
  Eigen::VectorXd losses(2);
  for (int s = 0; s <= steps; ++s) {
    const double psi = static_cast<double>(s) / steps;
    losses << t(1.0 - psi), t(psi);
    const double v = point_objective_min(losses, posterior.probs(), spec.epsilon_pow(), spec.kappa_pow());
    if (v < out.value) out = {v, psi};
  }
  return out;
}

struct ExtremePointResult {
  double value;
  /// Support size of the best extreme point.
  int support;
  /// Best value per support size (index k-1).
  std::vector<double> by_support;
};

/// Minimum over every psi that is uniform on a nonempty class subset
/// (linear transform).
inline ExtremePointResult multiclass_extreme_point_min(const RobustLossSpecd& spec,
                                                       const CategoricalDistd& posterior) {
  const int k = posterior.size();
  ExtremePointResult out{std::numeric_limits<double>::infinity(), 0,
                         std::vector<double>(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity())};
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    const int size = std::popcount(mask);
    Eigen::VectorXd losses(k);
    for (int j = 0; j < k; ++j) losses(j) = spec.transform()((mask >> j) & 1u ? 1.0 / size : 0.0);
    const double v = point_objective_min(losses, posterior.probs(), spec.epsilon_pow(), spec.kappa_pow());
    auto& slot = out.by_support[static_cast<std::size_t>(size - 1)];
    slot = std::min(slot, v);
    if (v < out.value) out.value = v;
  }
  // Smallest support attaining the minimum.
  for (int s = 1; s <= k; ++s) {
    if (out.by_support[static_cast<std::size_t>(s - 1)] <= out.value) {
      out.support = s;
      break;
    }
  }
  return out;
}

/// Empirical dual objective at a fixed gamma from a precomputed n x K loss
/// matrix and n x K reference rows.
inline double batch_objective_from_losses(const Eigen::MatrixXd& losses, const Eigen::MatrixXd& refs, double gamma,
                                          double eps_pow, double kappa_pow) {
  double total = 0.0;
  const Eigen::Index k = losses.cols();
  for (Eigen::Index i = 0; i < losses.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    Eigen::Index top_at = 0;
    for (Eigen::Index y = 0; y < k; ++y) {
      const double l = losses(i, y);
      if (l > top) {
        second = top;
        top = l;
        top_at = y;
      } else if (l > second) {
        second = l;
      }
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      const double other = j == top_at ? second : top;
      total += refs(i, j) * std::max(losses(i, j), other - gamma * kappa_pow);
    }
  }
  return gamma * eps_pow + total / static_cast<double>(losses.rows());
}

inline Eigen::MatrixXd batch_losses(const RobustLossSpecd& spec, const Eigen::MatrixXd& preds) {
  return preds.unaryExpr([&spec](double t) { return spec.transform()(t); });
}

/// Empirical dual objective of a batch at a fixed gamma; rows of `preds`
/// are classifier outputs, rows of `refs` reference distributions.
inline double batch_objective(const RobustLossSpecd& spec, const Eigen::MatrixXd& preds, const Eigen::MatrixXd& refs,
                              double gamma) {
  return batch_objective_from_losses(batch_losses(spec, preds), refs, gamma, spec.epsilon_pow(), spec.kappa_pow());
}

struct GammaGridResult {
  double value;
  double gamma;
};

/// Scan gamma over [0, hi] with the given step; first minimum wins.
/// `hi` defaults to the largest loss gap over kappa^p, past which the
/// objective only grows.
inline GammaGridResult batch_gamma_grid_min(const RobustLossSpecd& spec, const Eigen::MatrixXd& preds,
                                            const Eigen::MatrixXd& refs, double step = 1e-5, double hi = -1.0) {
  if (hi < 0) {
    double gap = 0.0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
      double lo_loss = std::numeric_limits<double>::infinity();
      double hi_loss = -std::numeric_limits<double>::infinity();
      for (Eigen::Index y = 0; y < preds.cols(); ++y) {
        const double l = spec.transform()(preds(i, y));
        lo_loss = std::min(lo_loss, l);
        hi_loss = std::max(hi_loss, l);
      }
      gap = std::max(gap, hi_loss - lo_loss);
    }
    hi = gap / spec.kappa_pow() + step;
  }
  const long steps = static_cast<long>(std::ceil(hi / step));
  const Eigen::MatrixXd losses = batch_losses(spec, preds);
  GammaGridResult out{std::numeric_limits<double>::infinity(), 0.0};
  for (long s = 0; s <= steps; ++s) {
    const double g = static_cast<double>(s) * step;
    const double v = batch_objective_from_losses(losses, refs, g, spec.epsilon_pow(), spec.kappa_pow());
    if (v < out.value) out = {v, g};
  }
  return out;
}

}  // namespace cdro::oracle
