#include "maln/emission.hpp"

#include <numbers>
#include <string>
#include <vector>

#include "maln/errors.hpp"

namespace maln {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw InputError(std::string(what) + " must be finite");
  }
}

}  // namespace

MelSequence::MelSequence(Tensor frames) : frames_(std::move(frames)) {
  if (frames_.rank() != 2) throw ShapeError("mel sequence must be rank 2 (frames, channels)");
  require_finite(frames_, "mel frames");
}

GaussianSequence::GaussianSequence(Tensor means, Tensor log_vars)
    : means_(std::move(means)), log_vars_(std::move(log_vars)) {
  if (means_.rank() != 2) throw ShapeError("means must be rank 2 (tokens, channels)");
  if (means_.dims() != log_vars_.dims()) throw ShapeError("means and log-variances differ in shape");
  require_finite(means_, "means");
  require_finite(log_vars_, "log-variances");
}

GaussianSequence GaussianSequence::unpack(const Tensor& packed) {
  if (packed.rank() != 3 || packed.dim(0) != 2) {
    throw ShapeError("packed gaussians must have dims (2, m, d)");
  }
  const std::size_t m = packed.dim(1);
  const std::size_t d = packed.dim(2);
  const auto v = packed.values();
  std::vector<double> means(v.begin(), v.begin() + m * d);
  std::vector<double> log_vars(v.begin() + m * d, v.end());
  return GaussianSequence(Tensor({m, d}, std::move(means)), Tensor({m, d}, std::move(log_vars)));
}

Tensor GaussianSequence::pack() const {
  std::vector<double> data(means_.values().begin(), means_.values().end());
  data.insert(data.end(), log_vars_.values().begin(), log_vars_.values().end());
  return Tensor({2, token_count(), channels()}, std::move(data));
}

double gaussian_log_prob(std::span<const double> frame, std::span<const double> mean,
                         std::span<const double> log_var) {
  if (frame.size() != mean.size() || frame.size() != log_var.size()) {
    throw ShapeError("gaussian_log_prob: frame, mean and log_var lengths differ");
  }
  if (frame.empty()) throw ShapeError("gaussian_log_prob: empty vectors");
  double acc = 0.0;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const double lv = std::max(log_var[k], kLogVarianceFloor);
    const double diff = frame[k] - mean[k];
    acc += -0.5 * (kLog2Pi + lv + diff * diff / effective_variance(log_var[k]));
  }
  return acc;
}

Tensor emission_matrix(const MelSequence& mel, const GaussianSequence& gaussians) {
  if (mel.channels() != gaussians.channels()) {
    throw ShapeError("emission_matrix: mel has " + std::to_string(mel.channels()) +
                     " channels, gaussians have " + std::to_string(gaussians.channels()));
  }
  const std::size_t n = mel.frame_count();
  const std::size_t m = gaussians.token_count();
  const std::size_t d = mel.channels();

  // Per-token precision and normalizer, hoisted out of the (t, s) loop.
  std::vector<double> precision(m * d);
  std::vector<double> normalizer(m, 0.0);
  for (std::size_t s = 0; s < m; ++s) {
    const auto lv = gaussians.log_var(s);
    for (std::size_t k = 0; k < d; ++k) {
      precision[s * d + k] = 1.0 / effective_variance(lv[k]);
      normalizer[s] += -0.5 * (kLog2Pi + std::max(lv[k], kLogVarianceFloor));
    }
  }

  const auto means = gaussians.means().values();
  std::vector<double> out(n * m);
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = mel.frame(t);
    for (std::size_t s = 0; s < m; ++s) {
      const double* mu = means.data() + s * d;
      const double* prec = precision.data() + s * d;
      double quad = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = y[k] - mu[k];
        quad += diff * diff * prec[k];
      }
      out[t * m + s] = normalizer[s] - 0.5 * quad;
    }
  }
  return Tensor({n, m}, std::move(out));
}

}  // namespace maln
