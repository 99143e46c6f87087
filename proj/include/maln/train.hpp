#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "maln/adam.hpp"
#include "maln/alignment.hpp"
#include "maln/emission.hpp"
#include "maln/mlp.hpp"

namespace maln {

// ---- synthetic data -------------------------------------------------------

struct TaskConfig {
  std::size_t tokens = 5;
  std::size_t channels = 2;
  std::size_t max_duration = 8;
  double noise_std = 0.1;
  /// Standard deviation of each true mean coordinate.
  double mean_spread = 3.0;
  std::uint64_t seed = 0;
};

/// A token sequence with known Gaussian means and durations, and the
/// noisy frames generated from them.
struct SyntheticTask {
  TaskConfig config;
  Tensor true_means;  // (tokens, channels)
  DurationSequence true_durations;
  MelSequence mel;
  std::vector<std::size_t> token_ids;  // 0 .. tokens-1
};

/// Means ~ N(0, mean_spread^2 I), kept only if at least 4 * noise_std from every earlier
/// mean; durations uniform in [1, max_duration]; frames are mean + noise.
/// Throws ConfigError when 1000 rejections are not enough.
SyntheticTask generate_task(const TaskConfig& config);

// ---- mixture density network ------------------------------------------------

/// Token-to-Gaussian network. Output columns [0, d) are means and
/// [d, 2d) are log-variances.
class MdnParams {
 public:
  MdnParams(std::size_t vocab, std::size_t channels, std::size_t embed_dim, std::size_t hidden_dim,
            std::size_t hidden_layers, std::uint64_t seed);
  explicit MdnParams(Mlp net);

  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }
  std::size_t channels() const noexcept { return net_.shape().output_dim / 2; }

 private:
  Mlp net_;
};

GaussianSequence mdn_forward(const MdnParams& params, std::span<const std::size_t> token_ids);

/// Flat parameter gradient (layout of Mlp::parameters()).
std::vector<double> mdn_backward(const MdnParams& params, std::span<const std::size_t> token_ids,
                                 const Tensor& d_means, const Tensor& d_log_vars);

// ---- phase 1: alignment-loss training ---------------------------------------

struct Phase1Config {
  std::size_t steps = 500;
  AdamConfig adam{};  // learning rate 1e-2 by default
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t hidden_layers = 1;
  std::uint64_t init_seed = 1;
  /// Independent initializations (seeds init_seed, init_seed+1, ...), each
  /// trained for `steps`; the one with the lowest final loss is kept. The
  /// alignment loss has local optima, so a single start often converges to
  /// a shifted segmentation.
  std::size_t restarts = 64;
};

/// Fixed learning rate used for whole-model fine-tuning at full scale.
inline constexpr double kFineTuneLearningRate = 1e-4;

struct Phase1Result {
  MdnParams params;
  std::vector<double> losses;  // loss before each update, for the kept restart
  double final_loss;           // loss of the returned params
  std::size_t restart;         // index of the kept restart
};

/// Trains an MDN on a single task by the alignment loss. Throws
/// TrainingError naming the step if the loss becomes non-finite.
Phase1Result train_phase1(const SyntheticTask& task, const Phase1Config& config);

/// Viterbi durations of the task's frames under the MDN's Gaussians.
DurationSequence extract_durations(const MdnParams& params, const SyntheticTask& task);

// ---- phase 4: duration regressor --------------------------------------------

struct RegressorConfig {
  std::size_t steps = 2000;
  AdamConfig adam{};
  std::size_t embed_dim = 8;
  std::uint64_t init_seed = 2;
};

struct RegressorResult {
  Mlp regressor;                       // embedding -> affine -> scalar log-duration
  DurationSequence extracted;          // Viterbi durations used as targets
  Tensor log_targets;                  // ln(extracted)
  std::vector<double> log_predictions; // regressor outputs after training
  double mse;                          // mean squared error in the log domain
};

/// Fits the regressor to ln(durations). Throws ConfigError for m < 2.
RegressorResult fit_duration_regressor(std::span<const std::size_t> token_ids,
                                       const DurationSequence& durations,
                                       const RegressorConfig& config);

/// extract_durations followed by fit_duration_regressor.
RegressorResult extract_and_train_duration_regressor(const MdnParams& params,
                                                     const SyntheticTask& task,
                                                     const RegressorConfig& config);

}  // namespace maln
