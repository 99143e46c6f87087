#include "maln/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "maln/errors.hpp"
#include "maln/lattice.hpp"

namespace maln {

namespace {

constexpr std::size_t kMaxRejections = 1000;

MelSequence sample_frames(const Tensor& means, const DurationSequence& durations, double noise_std,
                          std::mt19937_64& rng) {
  const std::size_t d = means.dim(1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> frames;
  frames.reserve(durations.total() * d);
  for (std::size_t j = 0; j < durations.frames.size(); ++j) {
    for (std::size_t r = 0; r < durations.frames[j]; ++r) {
      for (std::size_t k = 0; k < d; ++k) frames.push_back(means(j, k) + noise_std * noise(rng));
    }
  }
  return MelSequence(Tensor({durations.total(), d}, std::move(frames)));
}

}  // namespace

SyntheticTask generate_task(const TaskConfig& config) {
  if (config.tokens == 0 || config.channels == 0 || config.max_duration == 0) {
    throw ConfigError("generate_task: tokens, channels and max_duration must be >= 1");
  }
  if (!(config.noise_std >= 0.0) || !std::isfinite(config.noise_std)) {
    throw ConfigError("generate_task: noise_std must be finite and non-negative");
  }
  if (!(config.mean_spread > 0.0) || !std::isfinite(config.mean_spread)) {
    throw ConfigError("generate_task: mean_spread must be finite and positive");
  }
  const std::size_t m = config.tokens;
  const std::size_t d = config.channels;
  const double min_separation = 4.0 * config.noise_std;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> unit(0.0, config.mean_spread);
  std::vector<double> means;
  means.reserve(m * d);
  std::vector<double> candidate(d);
  std::size_t rejections = 0;
  while (means.size() < m * d) {
    for (double& c : candidate) c = unit(rng);
    bool separated = true;
    for (std::size_t j = 0; j < means.size() / d && separated; ++j) {
      double dist2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = candidate[k] - means[j * d + k];
        dist2 += diff * diff;
      }
      separated = std::sqrt(dist2) >= min_separation;
    }
    if (separated) {
      means.insert(means.end(), candidate.begin(), candidate.end());
    } else if (++rejections >= kMaxRejections) {
      throw ConfigError("generate_task: could not separate means by " +
                        std::to_string(min_separation) + " after " +
                        std::to_string(kMaxRejections) + " rejections");
    }
  }

  std::uniform_int_distribution<std::size_t> length(1, config.max_duration);
  DurationSequence durations;
  durations.frames.reserve(m);
  for (std::size_t j = 0; j < m; ++j) durations.frames.push_back(length(rng));

  Tensor true_means({m, d}, std::move(means));
  MelSequence mel = sample_frames(true_means, durations, config.noise_std, rng);
  std::vector<std::size_t> ids(m);
  for (std::size_t j = 0; j < m; ++j) ids[j] = j;
  return {config, std::move(true_means), std::move(durations), std::move(mel), std::move(ids)};
}

MdnParams::MdnParams(std::size_t vocab, std::size_t channels, std::size_t embed_dim,
                     std::size_t hidden_dim, std::size_t hidden_layers, std::uint64_t seed)
    : MdnParams(Mlp::he_init({vocab, embed_dim, hidden_dim, hidden_layers, 2 * channels}, seed)) {}

MdnParams::MdnParams(Mlp net) : net_(std::move(net)) {
  if (net_.shape().output_dim % 2 != 0) throw ConfigError("mdn output width must be 2 * channels");
}

GaussianSequence mdn_forward(const MdnParams& params, std::span<const std::size_t> token_ids) {
  const Tensor out = params.net().forward(token_ids);
  const std::size_t m = token_ids.size();
  const std::size_t d = params.channels();
  std::vector<double> means(m * d), log_vars(m * d);
  for (std::size_t s = 0; s < m; ++s) {
    const auto row = out.row(s);
    std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d), means.begin() + static_cast<std::ptrdiff_t>(s * d));
    std::copy(row.begin() + static_cast<std::ptrdiff_t>(d), row.end(), log_vars.begin() + static_cast<std::ptrdiff_t>(s * d));
  }
  return GaussianSequence(Tensor({m, d}, std::move(means)), Tensor({m, d}, std::move(log_vars)));
}

std::vector<double> mdn_backward(const MdnParams& params, std::span<const std::size_t> token_ids,
                                 const Tensor& d_means, const Tensor& d_log_vars) {
  const std::size_t m = token_ids.size();
  const std::size_t d = params.channels();
  const std::vector<std::size_t> expected{m, d};
  if (d_means.dims() != expected || d_log_vars.dims() != expected) {
    throw ShapeError("mdn_backward: upstream gradients must be (tokens, channels)");
  }
  std::vector<double> upstream(m * 2 * d);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t k = 0; k < d; ++k) {
      upstream[s * 2 * d + k] = d_means(s, k);
      upstream[s * 2 * d + d + k] = d_log_vars(s, k);
    }
  }
  return params.net().backward(token_ids, Tensor({m, 2 * d}, std::move(upstream)));
}

namespace {

Phase1Result train_single_start(const SyntheticTask& task, const Phase1Config& config,
                                std::uint64_t init_seed) {
  MdnParams params(task.config.tokens, task.mel.channels(), config.embed_dim, config.hidden_dim,
                   config.hidden_layers, init_seed);
  AdamState adam(params.net().parameter_count(), config.adam);
  std::vector<double> losses;
  losses.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const GaussianSequence gaussians = mdn_forward(params, task.token_ids);
    const GaussianLossResult result = alignment_loss(task.mel, gaussians);
    if (!std::isfinite(result.loss)) throw TrainingError("non-finite alignment loss", step);
    losses.push_back(result.loss);
    const auto grads =
        mdn_backward(params, task.token_ids, result.grads.d_means, result.grads.d_log_vars);
    adam_step(adam, params.net().parameters(), grads);
  }
  const double final_loss = forward(emission_matrix(task.mel, mdn_forward(params, task.token_ids))).loss;
  if (!std::isfinite(final_loss)) throw TrainingError("non-finite alignment loss", config.steps);
  return {std::move(params), std::move(losses), final_loss, 0};
}

}  // namespace

Phase1Result train_phase1(const SyntheticTask& task, const Phase1Config& config) {
  if (config.steps == 0) throw ConfigError("train_phase1: steps must be >= 1");
  if (config.restarts == 0) throw ConfigError("train_phase1: restarts must be >= 1");
  Phase1Result best = train_single_start(task, config, config.init_seed);
  for (std::size_t r = 1; r < config.restarts; ++r) {
    Phase1Result candidate = train_single_start(task, config, config.init_seed + r);
    if (candidate.final_loss < best.final_loss) {
      best = std::move(candidate);
      best.restart = r;
    }
  }
  return best;
}

DurationSequence extract_durations(const MdnParams& params, const SyntheticTask& task) {
  const Tensor logp = emission_matrix(task.mel, mdn_forward(params, task.token_ids));
  return path_to_durations(viterbi(logp).path, task.token_ids.size());
}

RegressorResult fit_duration_regressor(std::span<const std::size_t> token_ids,
                                       const DurationSequence& durations,
                                       const RegressorConfig& config) {
  const std::size_t m = token_ids.size();
  if (m < 2) throw ConfigError("duration regressor needs at least 2 tokens");
  if (durations.frames.size() != m) throw ShapeError("duration regressor: one duration per token");

  Tensor targets = duration_targets_log(durations);
  const std::size_t vocab = *std::max_element(token_ids.begin(), token_ids.end()) + 1;
  Mlp net = Mlp::he_init({vocab, config.embed_dim, 0, 0, 1}, config.init_seed);
  AdamState adam(net.parameter_count(), config.adam);

  auto mse_of = [&](const Tensor& out) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double e = out[j] - targets[j];
      acc += e * e;
    }
    return acc / static_cast<double>(m);
  };

  for (std::size_t step = 0; step < config.steps; ++step) {
    const Tensor out = net.forward(token_ids);
    std::vector<double> upstream(m);
    for (std::size_t j = 0; j < m; ++j) {
      upstream[j] = 2.0 * (out[j] - targets[j]) / static_cast<double>(m);
    }
    if (!std::isfinite(mse_of(out))) throw TrainingError("non-finite regressor loss", step);
    adam_step(adam, net.parameters(), net.backward(token_ids, Tensor({m, 1}, std::move(upstream))));
  }

  const Tensor final_out = net.forward(token_ids);
  const double mse = mse_of(final_out);
  std::vector<double> predictions(final_out.values().begin(), final_out.values().end());
  return {std::move(net), durations, std::move(targets), std::move(predictions), mse};
}

RegressorResult extract_and_train_duration_regressor(const MdnParams& params,
                                                     const SyntheticTask& task,
                                                     const RegressorConfig& config) {
  if (task.token_ids.size() < 2) throw ConfigError("duration regressor needs at least 2 tokens");
  return fit_duration_regressor(task.token_ids, extract_durations(params, task), config);
}

}  // namespace maln
