#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace maln {

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

/// Moment accumulators for a flat parameter vector.
class AdamState {
 public:
  AdamState(std::size_t parameter_count, AdamConfig config = {});

  const AdamConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return step_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

 private:
  friend void adam_step(AdamState&, std::span<double>, std::span<const double>);

  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace maln
