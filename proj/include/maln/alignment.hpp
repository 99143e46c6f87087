#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maln/tensor.hpp"

namespace maln {

/// Frames per token. Extracted alignments give entries >= 1; rounded
/// predictions may contain zeros (skipped tokens).
struct DurationSequence {
  std::vector<std::size_t> frames;

  std::size_t total() const noexcept;
  bool operator==(const DurationSequence&) const = default;
};

/// Token index per frame; starts at 0, ends at m - 1, steps by 0 or 1.
struct AlignmentPath {
  std::vector<std::size_t> token_index;

  bool operator==(const AlignmentPath&) const = default;
};

struct ViterbiResult {
  AlignmentPath path;
  double score;  // summed logp along the path
};

/// Best monotonic path through an (n, m) emission matrix. On ties the
/// backtrack keeps the current token (stay) rather than stepping back.
ViterbiResult viterbi(const Tensor& logp);

/// Counts frames per token. Throws InputError if the path is not a valid
/// monotonic alignment onto exactly m tokens.
DurationSequence path_to_durations(const AlignmentPath& path, std::size_t m);

/// Repeats row j of `hidden` durations[j] times. Throws InputError
/// ("empty expansion") when every duration is zero.
Tensor length_regulate(const Tensor& hidden, const DurationSequence& durations);

/// ln(duration) per token; throws DomainError on a zero duration.
Tensor duration_targets_log(const DurationSequence& durations);

/// Scales linear-domain predictions by `speed`, rounds half away from
/// zero and clamps at 0.
DurationSequence round_durations(std::span<const double> predicted, double speed = 1.0);

/// Inverse of duration_targets_log for inference: exp, then round_durations.
DurationSequence durations_from_log(std::span<const double> log_predicted, double speed = 1.0);

}  // namespace maln
