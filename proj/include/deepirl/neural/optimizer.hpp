#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepirl/neural/network.hpp"

namespace deepirl::nn {

/// lambda1 * sign(w) + 2 * lambda2 * w, with sign(0) = 0.
inline std::vector<double> elastic_net_grad(std::span<const double> params, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("elastic net coefficients must be nonnegative");
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double w = params[i];
    const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
    g[i] = lambda1 * sign + 2.0 * lambda2 * w;
  }
  return g;
}

inline double elastic_net_penalty(std::span<const double> params, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("elastic net coefficients must be nonnegative");
  double l1 = 0.0, l2 = 0.0;
  for (double w : params) {
    l1 += std::abs(w);
    l2 += w * w;
  }
  return lambda1 * l1 + lambda2 * l2;
}

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Minimizes: `step` moves parameters against the supplied gradients. The
/// training loop hands it the gradient of the negated objective.
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  }

  const OptimizerConfig& config() const { return cfg_; }
  long long step_count() const { return t_; }

  /// `grads[i]` pairs with `params[i]`.
  void step(std::span<const std::span<double>> params, std::span<const std::vector<double>> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("optimizer: parameter layout changed");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].size() != grads[i].size() || params[i].size() != m_[i].size())
        throw std::invalid_argument("optimizer: shape mismatch for parameter " + std::to_string(i));

    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= lr * grads[i][j];
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        const double g = grads[i][j];
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
        params[i][j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
      }
    }
  }

  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

private:
  OptimizerConfig cfg_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace deepirl::nn
