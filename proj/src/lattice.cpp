#include "maln/lattice.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>

#include "maln/errors.hpp"

namespace maln {

namespace {

struct Extent {
  std::size_t n;
  std::size_t m;
};

Extent check_emissions(const Tensor& logp) {
  if (logp.rank() != 2) throw ShapeError("emission matrix must be rank 2 (frames, tokens)");
  const Extent e{logp.dim(0), logp.dim(1)};
  if (e.n < e.m) {
    throw InfeasibleError("infeasible alignment: " + std::to_string(e.n) + " frames < " +
                          std::to_string(e.m) + " tokens");
  }
  return e;
}

}  // namespace

ForwardResult forward(const Tensor& logp) {
  const auto [n, m] = check_emissions(logp);
  const auto lp = logp.values();
  std::vector<double> alpha(n * m, kLogZero);
  alpha[0] = lp[0];
  for (std::size_t t = 1; t < n; ++t) {
    const double* prev = alpha.data() + (t - 1) * m;
    double* cur = alpha.data() + t * m;
    const double* emit = lp.data() + t * m;
    // Cells with s > t cannot be reached yet.
    const std::size_t last = std::min(t, m - 1);
    cur[0] = prev[0] + emit[0];
    for (std::size_t s = 1; s <= last; ++s) cur[s] = log_add(prev[s], prev[s - 1]) + emit[s];
  }
  const double total = alpha[n * m - 1];
  return {Tensor({n, m}, std::move(alpha)), -total};
}

Tensor backward(const Tensor& logp) {
  const auto [n, m] = check_emissions(logp);
  const auto lp = logp.values();
  std::vector<double> beta(n * m, kLogZero);
  beta[n * m - 1] = 0.0;
  for (std::size_t t = n - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * m;
    double* cur = beta.data() + t * m;
    const double* emit = lp.data() + (t + 1) * m;
    // Token s needs at least m - 1 - s further frames to reach the end.
    const std::size_t remaining = n - 1 - t;
    const std::size_t first = m - 1 > remaining ? m - 1 - remaining : 0;
    for (std::size_t s = first; s < m; ++s) {
      const double stay = next[s] + emit[s];
      const double advance = s + 1 < m ? next[s + 1] + emit[s + 1] : kLogZero;
      cur[s] = log_add(stay, advance);
    }
  }
  return Tensor({n, m}, std::move(beta));
}

Tensor posterior(const Tensor& alpha, const Tensor& beta, double total_log_prob) {
  if (alpha.rank() != 2 || alpha.dims() != beta.dims()) {
    throw ShapeError("posterior: alpha and beta must be rank 2 with equal dims");
  }
  if (total_log_prob == kLogZero) throw InputError("zero-probability lattice");
  const auto a = alpha.values();
  const auto b = beta.values();
  std::vector<double> gamma(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == kLogZero || b[i] == kLogZero) continue;
    gamma[i] = std::exp(a[i] + b[i] - total_log_prob);
  }
  return Tensor(alpha.dims(), std::move(gamma));
}

AlignmentLattice compute_lattice(const Tensor& logp) {
  auto fwd = forward(logp);
  auto beta = backward(logp);
  const double total = -fwd.loss;
  auto gamma = posterior(fwd.alpha, beta, total);
  return {std::move(fwd.alpha), std::move(beta), std::move(gamma), total};
}

LossAndGrad loss_and_grad(const Tensor& logp) {
  auto lattice = compute_lattice(logp);
  std::vector<double> grad = std::move(lattice.gamma).release();
  for (double& g : grad) g = -g;
  return {-lattice.total_log_prob, Tensor(logp.dims(), std::move(grad))};
}

std::vector<LossAndGrad> loss_and_grad_batch(std::span<const Tensor> batch, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, batch.size()));

  std::vector<LossAndGrad> results(batch.size(), LossAndGrad{0.0, Tensor()});
  std::vector<std::exception_ptr> errors(batch.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < batch.size(); i = next++) {
      try {
        results[i] = loss_and_grad(batch[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

GaussianGrads grad_gaussians(const Tensor& gamma, const MelSequence& mel,
                             const GaussianSequence& gaussians) {
  const std::size_t n = mel.frame_count();
  const std::size_t m = gaussians.token_count();
  const std::size_t d = mel.channels();
  if (gaussians.channels() != d) throw ShapeError("grad_gaussians: channel mismatch");
  if (gamma.rank() != 2 || gamma.dim(0) != n || gamma.dim(1) != m) {
    throw ShapeError("grad_gaussians: gamma must be (frames, tokens)");
  }

  const auto means = gaussians.means().values();
  const auto log_vars = gaussians.log_vars().values();
  std::vector<double> precision(m * d);
  for (std::size_t i = 0; i < m * d; ++i) precision[i] = 1.0 / effective_variance(log_vars[i]);

  std::vector<double> d_means(m * d, 0.0);
  std::vector<double> d_log_vars(m * d, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = mel.frame(t);
    for (std::size_t s = 0; s < m; ++s) {
      const double g = gamma(t, s);
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t i = s * d + k;
        const double diff = y[k] - means[i];
        d_means[i] += g * (-diff * precision[i]);
        d_log_vars[i] += g * 0.5 * (1.0 - diff * diff * precision[i]);
      }
    }
  }
  for (std::size_t i = 0; i < m * d; ++i) {
    if (log_vars[i] < kLogVarianceFloor) d_log_vars[i] = 0.0;
  }
  return {Tensor({m, d}, std::move(d_means)), Tensor({m, d}, std::move(d_log_vars))};
}

GaussianLossResult alignment_loss(const MelSequence& mel, const GaussianSequence& gaussians) {
  const Tensor logp = emission_matrix(mel, gaussians);
  auto lattice = compute_lattice(logp);
  auto grads = grad_gaussians(lattice.gamma, mel, gaussians);
  return {-lattice.total_log_prob, std::move(grads)};
}

std::uint64_t alignment_count(std::size_t n, std::size_t m) {
  if (m == 0 || m > n) return 0;
  const std::uint64_t top = n - 1;
  std::uint64_t k = m - 1;
  k = std::min(k, top - k);
  unsigned __int128 c = 1;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  for (std::uint64_t i = 0; i < k; ++i) {
    // c * (top - i) / (i + 1) stays integral; c grows monotonically for i < k <= top/2.
    c = c * (top - i) / (i + 1);
    if (c > kMax) return kMax;
  }
  return static_cast<std::uint64_t>(c);
}

void for_each_alignment(std::size_t n, std::size_t m,
                        const std::function<void(std::span<const std::size_t>)>& visit,
                        std::uint64_t limit) {
  if (m == 0) throw InputError("token count must be at least 1");
  if (n < m) {
    throw InfeasibleError("infeasible alignment: " + std::to_string(n) + " frames < " +
                          std::to_string(m) + " tokens");
  }
  const std::uint64_t count = alignment_count(n, m);
  if (count > limit) throw LimitError(count, limit);

  // Lexicographic successor: bump the rightmost part whose tail can spare a
  // frame, reset the parts after it to 1 and give the remainder to the last.
  std::vector<std::size_t> parts(m, 1);
  parts[m - 1] = n - (m - 1);
  for (;;) {
    visit(parts);
    bool advanced = false;
    std::size_t tail = parts[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) {
      if (tail > m - 1 - i) {
        ++parts[i];
        std::fill(parts.begin() + static_cast<std::ptrdiff_t>(i) + 1, parts.end() - 1, 1);
        parts[m - 1] = tail - 1 - (m - 2 - i);
        advanced = true;
        break;
      }
      tail += parts[i];
    }
    if (!advanced) return;
  }
}

std::vector<std::vector<std::size_t>> enumerate_alignments(std::size_t n, std::size_t m,
                                                           std::uint64_t limit) {
  std::vector<std::vector<std::size_t>> out;
  for_each_alignment(
      n, m, [&](std::span<const std::size_t> d) { out.emplace_back(d.begin(), d.end()); }, limit);
  return out;
}

double path_log_prob(const Tensor& logp, std::span<const std::size_t> durations) {
  const auto [n, m] = check_emissions(logp);
  if (durations.size() != m) throw ShapeError("path_log_prob: need one duration per token");
  double acc = 0.0;
  std::size_t t = 0;
  for (std::size_t s = 0; s < m; ++s) {
    if (durations[s] == 0) throw InputError("path_log_prob: durations must be positive");
    for (std::size_t k = 0; k < durations[s]; ++k, ++t) {
      if (t >= n) throw InputError("path_log_prob: durations exceed frame count");
      acc += logp(t, s);
    }
  }
  if (t != n) throw InputError("path_log_prob: durations do not cover every frame");
  return acc;
}

double brute_force_loss(const Tensor& logp, std::uint64_t limit) {
  const auto [n, m] = check_emissions(logp);
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(std::min(alignment_count(n, m), limit)));
  for_each_alignment(
      n, m, [&](std::span<const std::size_t> d) { scores.push_back(path_log_prob(logp, d)); },
      limit);
  return -logsumexp(scores);
}

}  // namespace maln
