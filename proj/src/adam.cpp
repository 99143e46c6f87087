#include "maln/adam.hpp"

#include <cmath>

#include "maln/errors.hpp"

namespace maln {

AdamState::AdamState(std::size_t parameter_count, AdamConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != state.m_.size() || grads.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  const auto& c = state.config_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m_[i] = c.beta1 * state.m_[i] + (1.0 - c.beta1) * g;
    state.v_[i] = c.beta2 * state.v_[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m_[i] / correct1;
    const double v_hat = state.v_[i] / correct2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace maln
