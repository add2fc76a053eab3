#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mili/autodiff/tensor.hpp"

namespace mili::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config = {});

// One bias-corrected Adam update, in place. Throws before touching any
// parameter if a gradient is non-finite or shapes disagree.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace mili::ad
