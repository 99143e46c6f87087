#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "maln/emission.hpp"
#include "maln/tensor.hpp"

namespace maln {

// Monotonic alignment lattice over an (n, m) emission matrix of log-densities.
// Frame t is aligned to exactly one token; the token index starts at 0, ends
// at m - 1, and advances by 0 or 1 per frame. All quantities are in the log
// domain with kLogZero marking unreachable cells.

struct ForwardResult {
  Tensor alpha;  // (n, m)
  double loss;   // -alpha[n-1][m-1]
};

struct AlignmentLattice {
  Tensor alpha;  // (n, m) log forward variables
  Tensor beta;   // (n, m) log backward variables
  Tensor gamma;  // (n, m) posterior occupancies, rows sum to 1
  double total_log_prob;
};

struct LossAndGrad {
  double loss;
  Tensor grad;  // d loss / d logp, equal to -gamma
};

struct GaussianGrads {
  Tensor d_means;     // (m, d)
  Tensor d_log_vars;  // (m, d)
};

/// Default cap on brute-force enumeration size.
inline constexpr std::uint64_t kDefaultCombinationLimit = 1'000'000;

ForwardResult forward(const Tensor& logp);
Tensor backward(const Tensor& logp);
/// Throws InputError("zero-probability lattice") when total is kLogZero.
Tensor posterior(const Tensor& alpha, const Tensor& beta, double total_log_prob);
AlignmentLattice compute_lattice(const Tensor& logp);
LossAndGrad loss_and_grad(const Tensor& logp);

/// Runs loss_and_grad on independent instances using up to `threads`
/// workers (0 = hardware concurrency). Results are in input order and
/// identical to the sequential computation.
std::vector<LossAndGrad> loss_and_grad_batch(std::span<const Tensor> batch, unsigned threads = 0);

/// Chain rule from per-cell occupancies through the Gaussian log-density
/// to the means and log-variances. Clamped log-variances get zero gradient.
GaussianGrads grad_gaussians(const Tensor& gamma, const MelSequence& mel,
                             const GaussianSequence& gaussians);

struct GaussianLossResult {
  double loss;
  GaussianGrads grads;
};

/// Emission, lattice and grad_gaussians in one call.
GaussianLossResult alignment_loss(const MelSequence& mel, const GaussianSequence& gaussians);

// ---- brute-force oracle -------------------------------------------------

/// C(n-1, m-1), saturating at UINT64_MAX. Zero when m > n or m == 0.
std::uint64_t alignment_count(std::size_t n, std::size_t m);

/// Calls `visit` with every composition of n into m positive parts, in
/// lexicographic order. Throws LimitError when the count exceeds `limit`.
void for_each_alignment(std::size_t n, std::size_t m,
                        const std::function<void(std::span<const std::size_t>)>& visit,
                        std::uint64_t limit = kDefaultCombinationLimit);

std::vector<std::vector<std::size_t>> enumerate_alignments(
    std::size_t n, std::size_t m, std::uint64_t limit = kDefaultCombinationLimit);

/// Sum of logp along the path that gives token j durations[j] frames.
double path_log_prob(const Tensor& logp, std::span<const std::size_t> durations);

/// -logsumexp over every enumerated alignment of its path log-probability.
double brute_force_loss(const Tensor& logp, std::uint64_t limit = kDefaultCombinationLimit);

}  // namespace maln
