#pragma once

#include <cmath>
#include <vector>

#include "fineas/tensor.hpp"

namespace fineas::num {

// Adam with bias correction. Moments are kept in double regardless of the
// parameter storage type. Defaults beyond the learning rate follow the
// original Adam paper.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    // lr = 0 is admitted so the no-op update property is expressible.
    if (lr < 0.0) raise(Errc::ConfigError, "adam lr must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      raise(Errc::ConfigError, "adam betas must be in [0, 1)");
    }
    if (epsilon <= 0.0) raise(Errc::ConfigError, "adam epsilon must be > 0");
  }
};

template <class T>
class AdamState {
 public:
  AdamState(AdamConfig cfg, const std::vector<Tensor<T>>& params)
      : cfg_(cfg) {
    cfg_.validate();
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // One update over all parameters. Gradients must be populated (backward
  // has run); they are left untouched so the caller can inspect them
  // before zeroing.
  void step(std::vector<Tensor<T>>& params) {
    if (params.size() != m_.size()) {
      raise(Errc::ShapeMismatch, "adam_step: parameter list changed size");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = params[pi];
      if (!p.has_grad()) {
        raise(Errc::MissingGrad, p.name().empty() ? "(unnamed parameter)"
                                                  : p.name());
      }
      const auto& g = p.grad();
      auto& values = p.mutable_values();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < values.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        values[i] = static_cast<T>(
            static_cast<double>(values[i]) -
            cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon));
      }
    }
  }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  state.step(params);
}

template <class T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace fineas::num
