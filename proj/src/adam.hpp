#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace cn::ad {

// Bias-corrected Adam. One state per parameter tensor; the step counter
// lives in the optimizer and is shared across parameters.
template <class T>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::int64_t step = 0;

  std::vector<std::vector<T>> m;  // first moments, one vector per param
  std::vector<std::vector<T>> v;  // second moments
};

template <class T>
void adam_step(std::vector<std::vector<T>*> params,
               std::vector<const std::vector<T>*> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw RuntimeError("adam: param/grad count");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), T(0));
      state.v[i].assign(params[i]->size(), T(0));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    if (g.size() != p.size() || state.m[i].size() != p.size())
      throw RuntimeError("adam: shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      double gj = static_cast<double>(g[j]) + state.weight_decay * static_cast<double>(p[j]);
      double mj = state.beta1 * static_cast<double>(state.m[i][j]) + (1.0 - state.beta1) * gj;
      double vj = state.beta2 * static_cast<double>(state.v[i][j]) + (1.0 - state.beta2) * gj * gj;
      state.m[i][j] = static_cast<T>(mj);
      state.v[i][j] = static_cast<T>(vj);
      p[j] -= static_cast<T>(state.lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.eps));
    }
  }
}

}  // namespace cn::ad
