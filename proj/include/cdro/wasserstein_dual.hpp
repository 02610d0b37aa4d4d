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

// Dual Wasserstein robust risk under the scaled discrete cost
// c(y, y') = kappa * 1(y != y'):
//
//   per point:   inf_{gamma >= 0} gamma * eps^p + E_P[ sup_{y'} { l(psi, y') - gamma * c^p(y', Y) } ]
//   empirical:   inf_{gamma >= 0} of the average of the bracket over a batch
//
// The empirical version has a closed form. Write a_{ij} = max_k T(psi_ik) -
// T(psi_ij) >= 0 and sort all nK values decreasingly with their reference
// probabilities attached. The objective is piecewise linear in gamma with
// breakpoints a^(t)/kappa^p, and its minimizer is a^(s*)/kappa^p where s* is
// the first index at which (1/n) * (P^(1) + ... + P^(s)) reaches rho = eps^p/kappa^p.

#pragma once

#include "cdro/core.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace cdro {

template <typename Scalar>
struct InnerSup {
  Scalar value;
  ClassIndex worst_label;
};

template <typename Scalar>
struct PerPointDualResult {
  Scalar gamma_argmin;
  Scalar value;
  /// For each true label j, the maximizing y' at gamma_argmin.
  std::vector<ClassIndex> worst_labels;
};

template <typename Scalar>
struct ClosedFormRiskResult {
  Scalar gamma_star;
  /// 1-based index into alpha_sorted; nK + 1 means "past the end" (alpha = 0).
  int s_star;
  Scalar robust_risk;
  Scalar nominal_risk;
  Vector<Scalar> alpha_sorted;
  Vector<Scalar> p_aligned;
};

namespace detail {

/// max_{y'} losses(y') - gamma_cost * 1(y' != true_label); ties to the smallest y'.
template <typename Derived>
InnerSup<typename Derived::Scalar> inner_sup_from_losses(const Eigen::MatrixBase<Derived>& losses,
                                                         ClassIndex true_label,
                                                         typename Derived::Scalar gamma_cost) {
  using Scalar = typename Derived::Scalar;
  InnerSup<Scalar> best{-std::numeric_limits<Scalar>::infinity(), 0};
  for (Eigen::Index y = 0; y < losses.size(); ++y) {
    const Scalar v = losses(y) - (y == true_label ? Scalar(0) : gamma_cost);
    if (v > best.value) best = {v, static_cast<ClassIndex>(y)};
  }
  return best;
}

template <typename DerivedL, typename DerivedP>
typename DerivedL::Scalar dual_value_from_losses(const Eigen::MatrixBase<DerivedL>& losses,
                                                 const Eigen::MatrixBase<DerivedP>& posterior,
                                                 typename DerivedL::Scalar gamma,
                                                 typename DerivedL::Scalar eps_pow,
                                                 typename DerivedL::Scalar kappa_pow) {
  using Scalar = typename DerivedL::Scalar;
  Scalar total = gamma * eps_pow;
  for (Eigen::Index j = 0; j < posterior.size(); ++j) {
    if (posterior(j) == Scalar(0)) continue;
    total += posterior(j) * inner_sup_from_losses(losses, static_cast<ClassIndex>(j), gamma * kappa_pow).value;
  }
  return total;
}

inline void require_nonnegative_gamma(double gamma) {
  if (!(gamma >= 0)) throw std::invalid_argument("gamma must be nonnegative");
}

}  // namespace detail

template <typename Scalar>
InnerSup<Scalar> dual_inner_sup(const RobustLossSpec<Scalar>& spec, const CategoricalDist<Scalar>& pred,
                                ClassIndex true_label, Scalar gamma) {
  detail::require_nonnegative_gamma(static_cast<double>(gamma));
  if (true_label < 0 || true_label >= pred.size()) throw std::out_of_range("dual_inner_sup: label out of range");
  return detail::inner_sup_from_losses(loss_vector(spec.transform(), pred), true_label, gamma * spec.kappa_pow());
}

/// gamma * eps^p + sum_j posterior_j * sup_{y'} { l(pred, y') - gamma * kappa^p * 1(y' != j) }.
template <typename Scalar>
Scalar per_point_dual_value(const RobustLossSpec<Scalar>& spec, const CategoricalDist<Scalar>& pred,
                            const CategoricalDist<Scalar>& posterior, Scalar gamma) {
  detail::require_nonnegative_gamma(static_cast<double>(gamma));
  if (pred.size() != posterior.size()) throw std::invalid_argument("per_point_dual_value: dimension mismatch");
  return detail::dual_value_from_losses(loss_vector(spec.transform(), pred), posterior.probs(), gamma,
                                        spec.epsilon_pow(), spec.kappa_pow());
}

/// Exact minimizer over gamma >= 0. The objective is convex piecewise linear
/// with kinks only at loss differences / kappa^p, so scanning {0} and those
/// differences finds a global minimizer. Returns the smallest minimizing gamma.
template <typename Scalar>
PerPointDualResult<Scalar> per_point_dual_min(const RobustLossSpec<Scalar>& spec,
                                              const CategoricalDist<Scalar>& pred,
                                              const CategoricalDist<Scalar>& posterior) {
  if (pred.size() != posterior.size()) throw std::invalid_argument("per_point_dual_min: dimension mismatch");
  const Vector<Scalar> losses = loss_vector(spec.transform(), pred);
  const Scalar kp = spec.kappa_pow();
  const Scalar ep = spec.epsilon_pow();

  std::vector<Scalar> candidates{Scalar(0)};
  for (Eigen::Index a = 0; a < losses.size(); ++a) {
    for (Eigen::Index b = 0; b < losses.size(); ++b) {
      const Scalar diff = losses(a) - losses(b);
      if (diff > Scalar(0)) candidates.push_back(diff / kp);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  Scalar best_value = detail::dual_value_from_losses(losses, posterior.probs(), Scalar(0), ep, kp);
  Scalar best_gamma = 0;
  for (Scalar g : candidates) {
    const Scalar v = detail::dual_value_from_losses(losses, posterior.probs(), g, ep, kp);
    // Ascending scan: only a strict improvement moves the argmin.
    if (v < best_value - Scalar(1e-13) * (Scalar(1) + std::abs(best_value))) {
      best_value = v;
      best_gamma = g;
    }
  }
  PerPointDualResult<Scalar> out{best_gamma, best_value, {}};
  out.worst_labels.reserve(static_cast<std::size_t>(pred.size()));
  for (ClassIndex j = 0; j < pred.size(); ++j) {
    out.worst_labels.push_back(detail::inner_sup_from_losses(losses, j, best_gamma * kp).worst_label);
  }
  return out;
}

/// Worst-case expected loss over the total-variation ball of radius
/// min(rho, 1) around the posterior. Under the discrete cost
/// W_p^p(Q, P) = kappa^p * TV(Q, P), so this is the primal of the per-point
/// dual. Mass moves greedily from the cheapest classes to the costliest one.
template <typename Scalar>
Scalar primal_tv_oracle(const RobustLossSpec<Scalar>& spec, const CategoricalDist<Scalar>& pred,
                        const CategoricalDist<Scalar>& posterior) {
  if (pred.size() != posterior.size()) throw std::invalid_argument("primal_tv_oracle: dimension mismatch");
  const Vector<Scalar> losses = loss_vector(spec.transform(), pred);
  const int k = pred.size();
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return losses(a) < losses(b); });
  Eigen::Index worst = 0;
  losses.maxCoeff(&worst);

  Vector<Scalar> q = posterior.probs();
  Scalar budget = std::min(spec.rho(), Scalar(1));
  for (int j : order) {
    if (budget <= Scalar(0)) break;
    if (j == worst) continue;
    const Scalar moved = std::min(budget, q(j));
    q(j) -= moved;
    q(worst) += moved;
    budget -= moved;
  }
  return q.dot(losses);
}

/// Closed-form empirical robust risk over a batch. Rows of `pred_probs` are
/// classifier outputs, rows of `ref_probs` the reference distributions.
template <typename DerivedA, typename DerivedB>
ClosedFormRiskResult<typename DerivedA::Scalar> closed_form_empirical_risk(
    const RobustLossSpec<typename DerivedA::Scalar>& spec, const Eigen::MatrixBase<DerivedA>& pred_probs,
    const Eigen::MatrixBase<DerivedB>& ref_probs) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = pred_probs.rows();
  const Eigen::Index k = pred_probs.cols();
  if (n == 0) throw std::invalid_argument("closed_form_empirical_risk: empty batch");
  if (ref_probs.rows() != n || ref_probs.cols() != k) {
    throw std::invalid_argument("closed_form_empirical_risk: predictions and references do not align");
  }
  const auto& transform = spec.transform();
  const Eigen::Index total = n * k;
  Vector<Scalar> alpha(total);
  Vector<Scalar> prob(total);
  Scalar nominal = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar worst = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < k; ++j) worst = std::max(worst, transform(pred_probs(i, j)));
    for (Eigen::Index j = 0; j < k; ++j) {
      const Scalar loss = transform(pred_probs(i, j));
      alpha(i * k + j) = worst - loss;
      prob(i * k + j) = ref_probs(i, j);
      nominal += ref_probs(i, j) * loss;
    }
  }
  const Scalar inv_n = Scalar(1) / Scalar(n);
  nominal *= inv_n;

  // Row-major flat index already encodes the (i, j) lexicographic tie-break.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return alpha(a) > alpha(b); });

  ClosedFormRiskResult<Scalar> out;
  out.alpha_sorted.resize(total);
  out.p_aligned.resize(total);
  for (Eigen::Index t = 0; t < total; ++t) {
    out.alpha_sorted(t) = alpha(order[static_cast<std::size_t>(t)]);
    out.p_aligned(t) = prob(order[static_cast<std::size_t>(t)]);
  }

  const Scalar rho = spec.rho();
  const Scalar mass = out.p_aligned.sum() * inv_n;
  Eigen::Index s_star = 1;  // 1-based
  if (rho <= out.p_aligned(0) * inv_n) {
    s_star = 1;
  } else if (rho >= mass) {
    s_star = total + 1;
  } else {
    Scalar partial = 0;
    s_star = total + 1;
    for (Eigen::Index s = 1; s <= total; ++s) {
      partial += out.p_aligned(s - 1) * inv_n;
      if (partial >= rho) {
        s_star = s;
        break;
      }
    }
  }

  Scalar head_mass = 0;
  Scalar head_gap = 0;
  for (Eigen::Index t = 0; t + 1 < s_star; ++t) {
    head_mass += out.p_aligned(t) * inv_n;
    head_gap += out.p_aligned(t) * out.alpha_sorted(t) * inv_n;
  }
  const Scalar alpha_s = s_star <= total ? out.alpha_sorted(s_star - 1) : Scalar(0);

  out.s_star = static_cast<int>(s_star);
  out.gamma_star = alpha_s / spec.kappa_pow();
  out.nominal_risk = nominal;
  out.robust_risk = nominal + head_gap + alpha_s * (rho - head_mass);
  return out;
}

template <typename Scalar>
ClosedFormRiskResult<Scalar> closed_form_empirical_risk(const RobustLossSpec<Scalar>& spec,
                                                        std::span<const CategoricalDist<Scalar>> preds,
                                                        std::span<const CategoricalDist<Scalar>> posteriors) {
  if (preds.empty()) throw std::invalid_argument("closed_form_empirical_risk: empty batch");
  if (preds.size() != posteriors.size()) {
    throw std::invalid_argument("closed_form_empirical_risk: mismatched lengths");
  }
  const int k = preds.front().size();
  Matrix<Scalar> a(static_cast<Eigen::Index>(preds.size()), k);
  Matrix<Scalar> b(static_cast<Eigen::Index>(preds.size()), k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != k || posteriors[i].size() != k) {
      throw std::invalid_argument("closed_form_empirical_risk: inconsistent class counts");
    }
    a.row(static_cast<Eigen::Index>(i)) = preds[i].probs().transpose();
    b.row(static_cast<Eigen::Index>(i)) = posteriors[i].probs().transpose();
  }
  return closed_form_empirical_risk(spec, a, b);
}

/// Empirical dual objective at a fixed gamma, averaged over the batch rows.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar empirical_dual_objective(const RobustLossSpec<typename DerivedA::Scalar>& spec,
                                                   const Eigen::MatrixBase<DerivedA>& pred_probs,
                                                   const Eigen::MatrixBase<DerivedB>& ref_probs,
                                                   typename DerivedA::Scalar gamma) {
  using Scalar = typename DerivedA::Scalar;
  detail::require_nonnegative_gamma(static_cast<double>(gamma));
  const Eigen::Index n = pred_probs.rows();
  if (n == 0) return Scalar(0);
  Vector<Scalar> losses(pred_probs.cols());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < losses.size(); ++j) losses(j) = spec.transform()(pred_probs(i, j));
    total += detail::dual_value_from_losses(losses, ref_probs.row(i).transpose(), gamma, spec.epsilon_pow(),
                                            spec.kappa_pow());
  }
  return total / Scalar(n);
}

/// E_ref[ 1(y'(Y) != Y) ] averaged over the batch, where y'(j) is the inner
/// maximizer at `gamma` for true label j. Multiply by kappa^p for E c^p(y', Y).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar inner_mismatch_rate(const RobustLossSpec<typename DerivedA::Scalar>& spec,
                                              const Eigen::MatrixBase<DerivedA>& pred_probs,
                                              const Eigen::MatrixBase<DerivedB>& ref_probs,
                                              typename DerivedA::Scalar gamma) {
  using Scalar = typename DerivedA::Scalar;
  detail::require_nonnegative_gamma(static_cast<double>(gamma));
  const Eigen::Index n = pred_probs.rows();
  if (n == 0) return Scalar(0);
  Vector<Scalar> losses(pred_probs.cols());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < losses.size(); ++j) losses(j) = spec.transform()(pred_probs(i, j));
    for (Eigen::Index j = 0; j < losses.size(); ++j) {
      if (ref_probs(i, j) == Scalar(0)) continue;
      const auto sup = detail::inner_sup_from_losses(losses, static_cast<ClassIndex>(j), gamma * spec.kappa_pow());
      if (sup.worst_label != j) total += ref_probs(i, j);
    }
  }
  return total / Scalar(n);
}

/// One proximal step on gamma: argmin_{gamma >= 0} gamma * (eps^p - kappa^p * m)
/// + (lambda / 2) (gamma - gamma_ref)^2.
template <typename Scalar>
Scalar gamma_one_step(Scalar gamma_ref, Scalar epsilon, Scalar p, Scalar kappa, Scalar mismatch_rate,
                      Scalar lambda) {
  if (!(lambda > Scalar(0))) throw std::invalid_argument("gamma_one_step: lambda must be positive");
  if (!(mismatch_rate >= Scalar(0) && mismatch_rate <= Scalar(1))) {
    throw std::invalid_argument("gamma_one_step: mismatch rate must lie in [0,1]");
  }
  using std::pow;
  const Scalar slope = pow(epsilon, p) - pow(kappa, p) * mismatch_rate;
  return std::max(Scalar(0), gamma_ref - slope / lambda);
}

}  // namespace cdro
