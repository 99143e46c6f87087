#pragma once

#include <cmath>
#include <span>

#include "maln/tensor.hpp"

namespace maln {

/// Smallest variance the emission model will use. Log-variances below
/// ln(kVarianceFloor) are clamped, and their gradient is zero.
inline constexpr double kVarianceFloor = 1e-6;
inline const double kLogVarianceFloor = std::log(kVarianceFloor);

/// Observation sequence: n frames by d channels, all finite.
class MelSequence {
 public:
  explicit MelSequence(Tensor frames);

  const Tensor& frames() const noexcept { return frames_; }
  std::size_t frame_count() const noexcept { return frames_.dim(0); }
  std::size_t channels() const noexcept { return frames_.dim(1); }
  std::span<const double> frame(std::size_t t) const { return frames_.row(t); }

 private:
  Tensor frames_;
};

/// One diagonal Gaussian per token: means and log-variances, both (m, d).
class GaussianSequence {
 public:
  GaussianSequence(Tensor means, Tensor log_vars);

  /// Splits a packed (2, m, d) tensor: index 0 means, index 1 log-variances.
  static GaussianSequence unpack(const Tensor& packed);
  Tensor pack() const;

  const Tensor& means() const noexcept { return means_; }
  const Tensor& log_vars() const noexcept { return log_vars_; }
  std::size_t token_count() const noexcept { return means_.dim(0); }
  std::size_t channels() const noexcept { return means_.dim(1); }
  std::span<const double> mean(std::size_t s) const { return means_.row(s); }
  std::span<const double> log_var(std::size_t s) const { return log_vars_.row(s); }

 private:
  Tensor means_;
  Tensor log_vars_;
};

/// The variance actually used for a given log-variance, after the floor.
inline double effective_variance(double log_var) noexcept {
  return log_var < kLogVarianceFloor ? kVarianceFloor : std::exp(log_var);
}

/// Diagonal Gaussian log-density of one frame under one token.
/// Throws ShapeError on length mismatch or empty vectors.
double gaussian_log_prob(std::span<const double> frame, std::span<const double> mean,
                         std::span<const double> log_var);

/// (n, m) matrix of gaussian_log_prob(frame t, token s).
Tensor emission_matrix(const MelSequence& mel, const GaussianSequence& gaussians);

}  // namespace maln
