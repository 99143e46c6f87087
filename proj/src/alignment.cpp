#include "maln/alignment.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "maln/errors.hpp"

namespace maln {

std::size_t DurationSequence::total() const noexcept {
  return std::accumulate(frames.begin(), frames.end(), std::size_t{0});
}

ViterbiResult viterbi(const Tensor& logp) {
  if (logp.rank() != 2) throw ShapeError("emission matrix must be rank 2 (frames, tokens)");
  const std::size_t n = logp.dim(0);
  const std::size_t m = logp.dim(1);
  if (n < m) {
    throw InfeasibleError("infeasible alignment: " + std::to_string(n) + " frames < " +
                          std::to_string(m) + " tokens");
  }

  // advanced[t*m+s] == 1 when the best predecessor of (t, s) is (t-1, s-1).
  std::vector<double> score(n * m, kLogZero);
  std::vector<std::uint8_t> advanced(n * m, 0);
  score[0] = logp(0, 0);
  for (std::size_t t = 1; t < n; ++t) {
    const double* prev = score.data() + (t - 1) * m;
    double* cur = score.data() + t * m;
    const std::size_t last = std::min(t, m - 1);
    cur[0] = prev[0] + logp(t, 0);
    for (std::size_t s = 1; s <= last; ++s) {
      const bool step = prev[s - 1] > prev[s];
      advanced[t * m + s] = step;
      cur[s] = (step ? prev[s - 1] : prev[s]) + logp(t, s);
    }
  }

  AlignmentPath path;
  path.token_index.resize(n);
  std::size_t s = m - 1;
  for (std::size_t t = n; t-- > 0;) {
    path.token_index[t] = s;
    if (t > 0 && advanced[t * m + s]) --s;
  }
  return {std::move(path), score[n * m - 1]};
}

DurationSequence path_to_durations(const AlignmentPath& path, std::size_t m) {
  const auto& idx = path.token_index;
  if (m == 0 || idx.empty()) throw InputError("path_to_durations: empty path or zero tokens");
  if (idx.front() != 0) throw InputError("path_to_durations: path must start at token 0");
  if (idx.back() != m - 1) throw InputError("path_to_durations: path must end at token m-1");
  DurationSequence out{std::vector<std::size_t>(m, 0)};
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (t > 0 && idx[t] != idx[t - 1] && idx[t] != idx[t - 1] + 1) {
      throw InputError("path_to_durations: non-monotonic step at frame " + std::to_string(t));
    }
    ++out.frames[idx[t]];
  }
  return out;
}

Tensor length_regulate(const Tensor& hidden, const DurationSequence& durations) {
  if (hidden.rank() != 2) throw ShapeError("length_regulate: hidden must be rank 2 (tokens, features)");
  const std::size_t m = hidden.dim(0);
  const std::size_t h = hidden.dim(1);
  if (durations.frames.size() != m) {
    throw ShapeError("length_regulate: " + std::to_string(durations.frames.size()) +
                     " durations for " + std::to_string(m) + " tokens");
  }
  const std::size_t total = durations.total();
  if (total == 0) throw InputError("empty expansion");

  std::vector<double> out;
  out.reserve(total * h);
  for (std::size_t j = 0; j < m; ++j) {
    const auto row = hidden.row(j);
    for (std::size_t r = 0; r < durations.frames[j]; ++r) out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({total, h}, std::move(out), hidden.dtype());
}

Tensor duration_targets_log(const DurationSequence& durations) {
  if (durations.frames.empty()) throw ShapeError("duration_targets_log: empty sequence");
  std::vector<double> out;
  out.reserve(durations.frames.size());
  for (std::size_t j = 0; j < durations.frames.size(); ++j) {
    if (durations.frames[j] == 0) {
      throw DomainError("duration_targets_log: zero duration at token " + std::to_string(j));
    }
    out.push_back(std::log(static_cast<double>(durations.frames[j])));
  }
  const std::size_t m = out.size();
  return Tensor({m}, std::move(out));
}

DurationSequence round_durations(std::span<const double> predicted, double speed) {
  DurationSequence out;
  out.frames.reserve(predicted.size());
  for (double p : predicted) {
    // std::round is half-away-from-zero.
    const double r = std::round(p * speed);
    if (!std::isfinite(r) || r > 1e15) throw InputError("round_durations: non-finite or huge prediction");
    out.frames.push_back(r > 0.0 ? static_cast<std::size_t>(r) : 0);
  }
  return out;
}

DurationSequence durations_from_log(std::span<const double> log_predicted, double speed) {
  std::vector<double> linear(log_predicted.size());
  for (std::size_t i = 0; i < linear.size(); ++i) linear[i] = std::exp(log_predicted[i]);
  return round_durations(linear, speed);
}

}  // namespace maln
