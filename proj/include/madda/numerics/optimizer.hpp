#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "madda/errors.hpp"
#include "madda/numerics/tensor.hpp"

namespace madda::numerics {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct BasicAdamState {
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;
};

// Adam with bias correction over a fixed list of parameters.
template <typename T>
class BasicAdam {
 public:
  using State = BasicAdamState<T>;

  BasicAdam(ParameterRefs<T> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (const auto* p : params_) {
      state_.first_moment.emplace_back(p->value.shape());
      state_.second_moment.emplace_back(p->value.shape());
    }
  }

  void step() {
    for (const auto* p : params_) {
      if (p->grad.shape() != p->value.shape() || p->grad.empty() != p->value.empty())
        throw ContractError("parameter '" + p->name + "' has no gradient for this step");
    }
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const T lr = static_cast<T>(config_.learning_rate);
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.epsilon);
    const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = state_.first_moment[k];
      auto& v = state_.second_moment[k];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j];
        m[j] = b1 * m[j] + (T{1} - b1) * g;
        v[j] = b2 * v[j] + (T{1} - b2) * g * g;
        const T mhat = m[j] / c1;
        const T vhat = v[j] / c2;
        p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grad() { madda::zero_grad(params_); }

  const ParameterRefs<T>& parameters() const noexcept { return params_; }
  const AdamConfig& config() const noexcept { return config_; }
  const State& state() const noexcept { return state_; }

  void restore(State state) {
    if (state.first_moment.size() != params_.size() || state.second_moment.size() != params_.size())
      throw ContractError("optimizer state has the wrong number of moment buffers");
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (state.first_moment[k].shape() != params_[k]->value.shape() ||
          state.second_moment[k].shape() != params_[k]->value.shape())
        throw ContractError("optimizer state shape mismatch for '" + params_[k]->name + "'");
    }
    state_ = std::move(state);
  }

 private:
  ParameterRefs<T> params_;
  AdamConfig config_;
  State state_;
};

// Plain gradient descent; used for descent-property checks.
template <typename T>
class BasicSgd {
 public:
  BasicSgd(ParameterRefs<T> params, double learning_rate) : params_(std::move(params)), lr_(learning_rate) {}

  void step() {
    for (auto* p : params_) {
      if (p->grad.shape() != p->value.shape())
        throw ContractError("parameter '" + p->name + "' has no gradient for this step");
      for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] -= static_cast<T>(lr_) * p->grad[j];
    }
    ++steps_;
  }
  void zero_grad() { madda::zero_grad(params_); }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  ParameterRefs<T> params_;
  double lr_;
  std::uint64_t steps_ = 0;
};

using Adam = BasicAdam<float>;
using AdamState = BasicAdamState<float>;
using Sgd = BasicSgd<float>;

}  // namespace madda::numerics
