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

// Closed-form per-point minimizers of the empirical dual robust risk.
//
// Binary case (psi = predicted probability of class 1, loss
// l(psi, y) = (1 - y) T(1 - psi) + y T(psi)): for concave T the optimal action
// is a hard label j when P_j >= rho + varpi1 and 1/2 otherwise; for convex T it
// is a hard label when P_j >= rho + varpi2, an interior root of the
// first-order condition when rho + 1/2 < P_j < rho + varpi2, and 1/2 otherwise.
//
// Multi-class case with T(t) = 1 - t: the optimum spreads mass uniformly over
// the k0 most probable classes, where k0 maximizes
// score(k) = (P^(1) + ... + P^(k) - rho) / k, or is uniform when no score
// exceeds 1/K.
//
// For a clipped transform, T(0), T(1), T'(0), T'(1) are read at the clip
// bounds; the action 0 (resp. 1) is then equivalent to any psi below the lower
// (above the upper) clip bound.

#pragma once

#include "cdro/core.hpp"
#include "cdro/wasserstein_dual.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cdro {

enum class BinaryCase { AssignZero, AssignOne, Half, InteriorT0, InteriorT1 };

template <typename Scalar>
struct BinaryActionResult {
  Scalar psi_star;
  BinaryCase case_tag;
  Scalar gamma_star;
  /// Dual objective at (psi_star, gamma_star).
  Scalar objective;
};

template <typename Scalar>
struct MultiClassActionResult {
  CategoricalDist<Scalar> psi_star;
  /// Support size of psi_star; K means uniform.
  int k0;
  /// Classes ordered by decreasing posterior (ties by index).
  std::vector<ClassIndex> permutation;
  Scalar gamma_star;
  Scalar objective;
};

/// {T(0) - T(1/2)} / {T(0) - T(1)}; concave (or linear) transforms only.
template <typename Scalar>
Scalar varpi1(const LossTransform<Scalar>& t) {
  if (!t.is_concave()) throw std::invalid_argument("varpi1: transform must be concave");
  const Scalar v = (t(t.lower()) - t(Scalar(0.5))) / (t(t.lower()) - t(t.upper()));
  if (!(v > Scalar(0) && v <= Scalar(0.5) + Scalar(1e-12))) {
    throw std::invalid_argument("varpi1: value outside (0, 1/2]; transform is not strictly decreasing and concave");
  }
  return v;
}

/// T'(0) / {T'(0) + T'(1)}; convex (or linear) transforms only.
template <typename Scalar>
Scalar varpi2(const LossTransform<Scalar>& t) {
  if (!t.is_convex()) throw std::invalid_argument("varpi2: transform must be convex");
  const Scalar d0 = t.slope(t.lower());
  const Scalar d1 = t.slope(t.upper());
  if (!(d0 < Scalar(0) && d1 < Scalar(0))) {
    throw std::invalid_argument("varpi2: T'(0) and T'(1) must be strictly negative");
  }
  const Scalar v = d0 / (d0 + d1);
  if (!(v >= Scalar(0.5) - Scalar(1e-12) && v < Scalar(1))) {
    throw std::invalid_argument("varpi2: value outside [1/2, 1)");
  }
  return v;
}

template <typename Scalar>
Scalar varpi1(const RobustLossSpec<Scalar>& spec) {
  return varpi1(spec.transform());
}

template <typename Scalar>
Scalar varpi2(const RobustLossSpec<Scalar>& spec) {
  return varpi2(spec.transform());
}

/// Binary dual objective at (psi, gamma), psi = probability of class 1.
template <typename Scalar>
Scalar binary_objective(const RobustLossSpec<Scalar>& spec, const CategoricalDist<Scalar>& posterior, Scalar psi,
                        Scalar gamma) {
  Vector<Scalar> losses(2);
  losses << spec.transform()(Scalar(1) - psi), spec.transform()(psi);
  return detail::dual_value_from_losses(losses, posterior.probs(), gamma, spec.epsilon_pow(), spec.kappa_pow());
}

namespace detail {

/// Root of a nondecreasing function on [lo, hi] with f(lo) <= 0 <= f(hi).
template <typename Scalar, typename F>
Scalar bisect_increasing(F&& f, Scalar lo, Scalar hi, Scalar tol) {
  for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
    const Scalar mid = (lo + hi) / 2;
    if (f(mid) < Scalar(0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return (lo + hi) / 2;
}

}  // namespace detail

template <typename Scalar>
BinaryActionResult<Scalar> binary_optimal_action(const RobustLossSpec<Scalar>& spec,
                                                 const CategoricalDist<Scalar>& posterior) {
  if (posterior.size() != 2) throw std::invalid_argument("binary_optimal_action: posterior must have K = 2");
  const auto& t = spec.transform();
  const Scalar p0 = posterior[0];
  const Scalar p1 = posterior[1];
  const Scalar rho = spec.rho();
  const Scalar kp = spec.kappa_pow();
  const Scalar hard_gamma = (t(t.lower()) - t(t.upper())) / kp;

  auto finish = [&](Scalar psi, BinaryCase tag, Scalar gamma) {
    return BinaryActionResult<Scalar>{psi, tag, gamma, binary_objective(spec, posterior, psi, gamma)};
  };
  auto hard = [&](ClassIndex j) {
    return j == 0 ? finish(Scalar(0), BinaryCase::AssignZero, hard_gamma)
                  : finish(Scalar(1), BinaryCase::AssignOne, hard_gamma);
  };
  const auto half = [&] { return finish(Scalar(0.5), BinaryCase::Half, Scalar(0)); };

  // Exact tie: both hard labels may qualify; keep the symmetric action.
  if (p0 == p1) return half();
  const ClassIndex top = p0 > p1 ? 0 : 1;
  const Scalar p_top = std::max(p0, p1);

  if (t.is_concave()) {
    return p_top >= rho + varpi1(t) ? hard(top) : half();
  }

  const Scalar w2 = varpi2(t);
  if (p_top >= rho + w2) return hard(top);
  if (p_top > rho + Scalar(0.5)) {
    constexpr double kEdge = 1e-9;
    const Scalar tol = Scalar(1e-10);
    if (top == 0) {
      // (P1 + rho) T'(psi) - (P0 - rho) T'(1 - psi) = 0 on (0, 1/2).
      auto grad = [&](Scalar s) { return (p1 + rho) * t.slope(s) - (p0 - rho) * t.slope(Scalar(1) - s); };
      const Scalar s = detail::bisect_increasing(grad, Scalar(kEdge), Scalar(0.5 - kEdge), tol);
      return finish(s, BinaryCase::InteriorT0, (t(s) - t(Scalar(1) - s)) / kp);
    }
    // (P1 - rho) T'(psi) - (P0 + rho) T'(1 - psi) = 0 on (1/2, 1).
    auto grad = [&](Scalar s) { return (p1 - rho) * t.slope(s) - (p0 + rho) * t.slope(Scalar(1) - s); };
    const Scalar s = detail::bisect_increasing(grad, Scalar(0.5 + kEdge), Scalar(1 - kEdge), tol);
    return finish(s, BinaryCase::InteriorT1, (t(Scalar(1) - s) - t(s)) / kp);
  }
  return half();
}

template <typename Scalar>
MultiClassActionResult<Scalar> multiclass_optimal_action(const RobustLossSpec<Scalar>& spec,
                                                         const CategoricalDist<Scalar>& posterior) {
  if (spec.transform().kind() != TransformKind::Linear) {
    throw std::invalid_argument("multiclass_optimal_action: only the linear transform T(t) = 1 - t is supported");
  }
  const int k = posterior.size();
  std::vector<ClassIndex> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ClassIndex a, ClassIndex b) { return posterior[a] > posterior[b]; });

  const Scalar rho = spec.rho();
  Scalar best_score = -std::numeric_limits<Scalar>::infinity();
  int best_k = k;
  Scalar head = 0;
  for (int m = 1; m < k; ++m) {
    head += posterior[order[static_cast<std::size_t>(m - 1)]];
    const Scalar score = (head - rho) / Scalar(m);
    if (score > best_score) {
      best_score = score;
      best_k = m;
    }
  }

  const Scalar uniform_level = Scalar(1) / Scalar(k);
  if (!(best_score > uniform_level)) {
    return {CategoricalDist<Scalar>::uniform(k), k, order, Scalar(0), Scalar(1) - uniform_level};
  }
  Vector<Scalar> psi = Vector<Scalar>::Zero(k);
  for (int m = 0; m < best_k; ++m) psi(order[static_cast<std::size_t>(m)]) = Scalar(1) / Scalar(best_k);
  return {CategoricalDist<Scalar>(std::move(psi)), best_k, order, Scalar(1) / (Scalar(best_k) * spec.kappa_pow()),
          Scalar(1) - best_score};
}

}  // namespace cdro
