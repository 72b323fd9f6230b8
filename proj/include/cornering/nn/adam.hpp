#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cornering/error.hpp"
#include "cornering/nn/layers.hpp"

namespace cornering::nn {

/// Adam with an inverse-time learning-rate schedule
/// lr_t = lr / (1 + decay * step_count).
struct AdamState {
  double lr = 0.001;
  double decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  double effective_rate() const {
    return lr / (1.0 + decay * static_cast<double>(step_count));
  }

  void reset() {
    step_count = 0;
    first_moment.clear();
    second_moment.clear();
  }
};

/// Single Adam update over a flat parameter block `index` of `state`.
inline void adam_update_block(std::span<double> params,
                              std::span<const double> grads, AdamState& state,
                              std::size_t index, double rate,
                              double correction1, double correction2) {
  auto& m = state.first_moment[index];
  auto& v = state.second_moment[index];
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
    v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = m[k] / correction1;
    const double v_hat = v[k] / correction2;
    params[k] -= rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

/// Applies one step to every parameter block; moments are allocated lazily
/// on the first call and must keep the same shapes afterwards.
inline void adam_step(const std::vector<ParamView>& params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size, 0.0);
      state.second_moment.emplace_back(p.size, 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeMismatch("Adam state has a different number of blocks");
  }
  const double rate = state.effective_rate();
  const auto t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size) {
      throw ShapeMismatch("Adam moment shape differs from parameter shape");
    }
    adam_update_block({params[i].value, params[i].size},
                      {params[i].grad, params[i].size}, state, i, rate, c1, c2);
  }
  ++state.step_count;
}

/// Flat-vector form: a single parameter block.
inline void adam_step(std::vector<double>& params,
                      const std::vector<double>& grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("Adam: parameter and gradient sizes differ");
  }
  std::vector<double> g = grads;
  adam_step(std::vector<ParamView>{{params.data(), g.data(), params.size()}},
            state);
}

}  // namespace cornering::nn
