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

#include "cdro/classifier.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace cdro {

namespace {

Eigen::Index param_count(Architecture arch, int d, int k, int hidden) {
  if (arch == Architecture::Linear) return static_cast<Eigen::Index>(k) * d + k;
  return static_cast<Eigen::Index>(hidden) * d + hidden + static_cast<Eigen::Index>(k) * hidden + k;
}

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// dLoss/dlogits from dLoss/dprobs: p_c (g_c - sum_m g_m p_m).
Eigen::MatrixXd chain_softmax(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& grad_probs) {
  const Eigen::VectorXd inner = (grad_probs.array() * probs.array()).rowwise().sum();
  return (probs.array() * (grad_probs.colwise() - inner).array()).matrix();
}

}  // namespace

std::string to_string(Architecture arch) { return arch == Architecture::Linear ? "linear" : "mlp"; }

Architecture architecture_from_string(const std::string& name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  throw std::invalid_argument("unknown architecture: " + name);
}

SoftmaxModel::SoftmaxModel(Architecture arch, int d, int k, int hidden)
    : arch_(arch), d_(d), k_(k), hidden_(arch == Architecture::Linear ? 0 : hidden) {
  if (d < 1 || k < 2) throw std::invalid_argument("SoftmaxModel: need d >= 1 and k >= 2");
  if (arch == Architecture::Mlp && hidden < 1) throw std::invalid_argument("SoftmaxModel: hidden width must be positive");
  params_ = Eigen::VectorXd::Zero(param_count(arch, d, k, hidden_));
}

SoftmaxModel SoftmaxModel::initialized(Architecture arch, int d, int k, int hidden, std::mt19937_64& rng) {
  SoftmaxModel m(arch, d, k, hidden);
  auto fill = [&](Eigen::Index offset, int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(rows) * cols; ++t) m.params_(offset + t) = u(rng);
  };
  if (arch == Architecture::Linear) {
    fill(0, k, d);
  } else {
    fill(0, m.hidden_, d);
    fill(static_cast<Eigen::Index>(m.hidden_) * d + m.hidden_, k, m.hidden_);
  }
  return m;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

Eigen::MatrixXd SoftmaxModel::logits(const Eigen::MatrixXd& x) const {
  if (x.cols() != d_) throw std::invalid_argument("SoftmaxModel: feature dimension mismatch");
  const double* p = params_.data();
  if (arch_ == Architecture::Linear) {
    ConstMap w(p, k_, d_);
    ConstVecMap b(p + static_cast<Eigen::Index>(k_) * d_, k_);
    return (x * w.transpose()).rowwise() + b.transpose();
  }
  ConstMap w1(p, hidden_, d_);
  p += static_cast<Eigen::Index>(hidden_) * d_;
  ConstVecMap b1(p, hidden_);
  p += hidden_;
  ConstMap w2(p, k_, hidden_);
  p += static_cast<Eigen::Index>(k_) * hidden_;
  ConstVecMap b2(p, k_);
  const Eigen::MatrixXd h = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh();
  return (h * w2.transpose()).rowwise() + b2.transpose();
}

Eigen::MatrixXd SoftmaxModel::predict_batch(const Eigen::MatrixXd& x) const { return softmax_rows(logits(x)); }

CategoricalDistd SoftmaxModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != d_) throw std::invalid_argument("SoftmaxModel: feature dimension mismatch");
  return CategoricalDistd(predict_batch(x.transpose()).row(0).transpose());
}

Eigen::VectorXd SoftmaxModel::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_logits) const {
  Eigen::VectorXd grad(params_.size());
  double* g = grad.data();
  if (arch_ == Architecture::Linear) {
    Eigen::Map<Eigen::MatrixXd>(g, k_, d_) = grad_logits.transpose() * x;
    Eigen::Map<Eigen::VectorXd>(g + static_cast<Eigen::Index>(k_) * d_, k_) = grad_logits.colwise().sum().transpose();
    return grad;
  }
  const double* p = params_.data();
  ConstMap w1(p, hidden_, d_);
  ConstVecMap b1(p + static_cast<Eigen::Index>(hidden_) * d_, hidden_);
  ConstMap w2(p + static_cast<Eigen::Index>(hidden_) * d_ + hidden_, k_, hidden_);
  const Eigen::MatrixXd h = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh();
  const Eigen::MatrixXd grad_pre = ((grad_logits * w2).array() * (1.0 - h.array().square())).matrix();

  Eigen::Map<Eigen::MatrixXd>(g, hidden_, d_) = grad_pre.transpose() * x;
  g += static_cast<Eigen::Index>(hidden_) * d_;
  Eigen::Map<Eigen::VectorXd>(g, hidden_) = grad_pre.colwise().sum().transpose();
  g += hidden_;
  Eigen::Map<Eigen::MatrixXd>(g, k_, hidden_) = grad_logits.transpose() * h;
  g += static_cast<Eigen::Index>(k_) * hidden_;
  Eigen::Map<Eigen::VectorXd>(g, k_) = grad_logits.colwise().sum().transpose();
  return grad;
}

bool SoftmaxModel::operator==(const SoftmaxModel& other) const {
  return arch_ == other.arch_ && d_ == other.d_ && k_ == other.k_ && hidden_ == other.hidden_ &&
         params_ == other.params_;
}

LossAndGradient soft_target_gradient(const SoftmaxModel& model, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& targets, const LossTransformd& transform) {
  LossAndGradient out{0.0, Eigen::VectorXd::Zero(model.num_params()), 0.0};
  const Eigen::Index n = x.rows();
  if (n == 0) return out;
  const Eigen::MatrixXd probs = model.predict_batch(x);
  Eigen::MatrixXd grad_probs = Eigen::MatrixXd::Zero(n, model.k());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < model.k(); ++j) {
      if (targets(i, j) == 0.0) continue;
      out.loss += targets(i, j) * transform(probs(i, j));
      grad_probs(i, j) = targets(i, j) * transform.gradient(probs(i, j));
    }
  }
  out.loss /= static_cast<double>(n);
  out.gradient = model.backward(x, chain_softmax(probs, grad_probs)) / static_cast<double>(n);
  return out;
}

LossAndGradient robust_batch_gradient(const SoftmaxModel& model, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& references, const RobustLossSpecd& spec, double gamma) {
  if (gamma < 0) throw std::invalid_argument("robust_batch_gradient: gamma must be nonnegative");
  LossAndGradient out{0.0, Eigen::VectorXd::Zero(model.num_params()), 0.0};
  const Eigen::Index n = x.rows();
  if (n == 0) return out;
  const auto& t = spec.transform();
  const double shift = gamma * spec.kappa_pow();
  const Eigen::MatrixXd probs = model.predict_batch(x);
  Eigen::MatrixXd grad_probs = Eigen::MatrixXd::Zero(n, model.k());
  Eigen::VectorXd losses(model.k());
  double total = 0.0;
  double mismatch = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index y = 0; y < model.k(); ++y) losses(y) = t(probs(i, y));
    for (Eigen::Index j = 0; j < model.k(); ++j) {
      const double weight = references(i, j);
      if (weight == 0.0) continue;
      Eigen::Index worst = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index y = 0; y < model.k(); ++y) {
        const double v = losses(y) - (y == j ? 0.0 : shift);
        if (v > best) {
          best = v;
          worst = y;
        }
      }
      total += weight * best;
      if (worst != j) mismatch += weight;
      grad_probs(i, worst) += weight * t.gradient(probs(i, worst));
    }
  }
  out.loss = gamma * spec.epsilon_pow() + total / static_cast<double>(n);
  out.mismatch = mismatch / static_cast<double>(n);
  out.gradient = model.backward(x, chain_softmax(probs, grad_probs)) / static_cast<double>(n);
  return out;
}

void sgd_step(SoftmaxModel& model, const Eigen::VectorXd& gradient, double learning_rate, OptimizerState& state) {
  if (learning_rate < 0) throw std::invalid_argument("sgd_step: learning rate must be nonnegative");
  auto& w = model.params();
  if (gradient.size() != w.size()) throw std::invalid_argument("sgd_step: gradient size mismatch");
  const auto& c = state.config;
  if (state.first.size() != w.size()) {
    state.first = Eigen::VectorXd::Zero(w.size());
    state.second = Eigen::VectorXd::Zero(w.size());
    state.steps = 0;
  }
  const Eigen::VectorXd g = c.weight_decay > 0 ? Eigen::VectorXd(gradient + c.weight_decay * w) : gradient;
  ++state.steps;
  if (c.kind == OptimizerKind::Sgd) {
    state.first = c.momentum * state.first + g;
    w -= learning_rate * state.first;
    return;
  }
  state.first = c.beta1 * state.first + (1.0 - c.beta1) * g;
  state.second = c.beta2 * state.second + (1.0 - c.beta2) * g.cwiseAbs2();
  const double t = static_cast<double>(state.steps);
  const double m_scale = 1.0 / (1.0 - std::pow(c.beta1, t));
  const double v_scale = 1.0 / (1.0 - std::pow(c.beta2, t));
  w.array() -= learning_rate * (state.first.array() * m_scale) / ((state.second.array() * v_scale).sqrt() + c.eps);
}

void save_model(const SoftmaxModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "cdro-model v1\n"
      << to_string(model.architecture()) << ' ' << model.d() << ' ' << model.k() << ' ' << model.hidden() << '\n'
      << model.num_params() << '\n'
      << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index t = 0; t < model.num_params(); ++t) out << model.params()(t) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

SoftmaxModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "cdro-model v1") throw std::runtime_error("not a cdro-model v1 checkpoint: " + path.string());
  std::string arch;
  int d = 0, k = 0, hidden = 0;
  Eigen::Index count = 0;
  in >> arch >> d >> k >> hidden >> count;
  SoftmaxModel model(architecture_from_string(arch), d, k, hidden);
  if (count != model.num_params()) throw std::runtime_error("checkpoint parameter count mismatch");
  for (Eigen::Index t = 0; t < count; ++t) {
    if (!(in >> model.params()(t))) throw std::runtime_error("truncated checkpoint " + path.string());
  }
  return model;
}

double accuracy(const Eigen::MatrixXd& probs, std::span<const ClassIndex> labels) {
  if (probs.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    hits += best == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

}  // namespace cdro
