#include "mili/autodiff/adam.hpp"

#include <cmath>
#include <string>

#include "mili/common/error.hpp"

namespace mili::ad {

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config) {
  AdamState state{.config = config};
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor& p : params) {
    state.m.emplace_back(p.shape(), 0.0);
    state.v.emplace_back(p.shape(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw Error(ErrorKind::shape, "adam_step: " + std::to_string(params.size()) + " params, " +
                                      std::to_string(grads.size()) + " grads, " +
                                      std::to_string(state.m.size()) + " moment slots");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape())
      throw Error(ErrorKind::shape, "adam_step: parameter " + std::to_string(i) + " has shape " +
                                        shape_string(params[i].shape()) + " but gradient " +
                                        shape_string(grads[i].shape()));
    if (!grads[i].all_finite())
      throw Error(ErrorKind::numeric, "adam_step: non-finite gradient for parameter " + std::to_string(i));
  }

  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace mili::ad
