// Acceptance runner: one PASS/FAIL line per criterion; non-zero exit if any fail.
// Usage: acceptance <path-to-maln-executable>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "json.hpp"
#include "maln/alignment.hpp"
#include "maln/errors.hpp"
#include "maln/lattice.hpp"
#include "maln/mlp.hpp"
#include "maln/tensor.hpp"
#include "maln/train.hpp"
#include "test_support.hpp"

namespace {

using namespace maln;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Every (n, m) with 1 <= m <= n <= 10, 50 matrices each, in a fixed order.
template <typename Visit>
void for_each_small_instance(Visit&& visit) {
  std::mt19937_64 rng(1001);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::size_t m = 1; m <= n; ++m) {
      for (int k = 0; k < 50; ++k) visit(testing::random_matrix(rng, n, m, -5.0, 0.0));
    }
  }
}

Verdict oracle_equivalence() {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t count = 0;
  for_each_small_instance([&](const Tensor& logp) {
    const double diff = std::abs(forward(logp).loss - brute_force_loss(logp));
    worst = std::max(worst, diff);
    ++count;
    v.require(diff < 1e-9, "n=" + std::to_string(logp.dim(0)) + " m=" + std::to_string(logp.dim(1)) +
                               " diff " + fmt("%.3g", diff));
  });
  const double elapsed = seconds_since(t0);
  v.require(elapsed < 30.0, "runtime " + fmt("%.2f s", elapsed));
  if (v.pass) {
    v.detail = std::to_string(count) + " instances, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.2f s", elapsed);
  }
  return v;
}

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  double worst = 0.0, worst_chain = 0.0;
  const auto check = [&](const std::string& what, const std::vector<double>& a, const std::vector<double>& b,
                         double tol, double& track) {
    const double err = testing::relative_error(a, b);
    track = std::max(track, err);
    v.require(err < tol, what + " relative error " + fmt("%.3g", err));
  };

  // d loss / d logp
  for (auto [n, m] : {std::pair<std::size_t, std::size_t>{3, 2}, {6, 3}, {10, 4}, {12, 12}, {9, 1}}) {
    const Tensor logp = testing::random_matrix(rng, n, m, -3.0, 0.0);
    const Tensor grad = loss_and_grad(logp).grad;
    const auto fd = testing::central_difference(
        [&](std::span<const double> x) {
          return forward(Tensor(logp.dims(), std::vector<double>(x.begin(), x.end()))).loss;
        },
        std::vector<double>(logp.values().begin(), logp.values().end()));
    check("logp", std::vector<double>(grad.values().begin(), grad.values().end()), fd, 1e-6, worst);
  }

  // d loss / d means, d log-variances
  struct Shape { std::size_t n, m, d; };
  for (Shape s : {Shape{4, 2, 3}, Shape{12, 5, 4}, Shape{7, 7, 2}, Shape{9, 1, 1}}) {
    const MelSequence mel(testing::random_matrix(rng, s.n, s.d, -1.0, 1.0));
    const Tensor means = testing::random_matrix(rng, s.m, s.d, -1.0, 1.0);
    const Tensor log_vars = testing::random_matrix(rng, s.m, s.d, -0.5, 0.5);
    const auto grads = alignment_loss(mel, GaussianSequence(means, log_vars)).grads;
    const auto fd_means = testing::central_difference(
        [&](std::span<const double> x) {
          const Tensor mu(means.dims(), std::vector<double>(x.begin(), x.end()));
          return alignment_loss(mel, GaussianSequence(mu, log_vars)).loss;
        },
        std::vector<double>(means.values().begin(), means.values().end()));
    const auto fd_vars = testing::central_difference(
        [&](std::span<const double> x) {
          const Tensor lv(log_vars.dims(), std::vector<double>(x.begin(), x.end()));
          return alignment_loss(mel, GaussianSequence(means, lv)).loss;
        },
        std::vector<double>(log_vars.values().begin(), log_vars.values().end()));
    check("means", {grads.d_means.values().begin(), grads.d_means.values().end()}, fd_means, 1e-6, worst);
    check("log-vars", {grads.d_log_vars.values().begin(), grads.d_log_vars.values().end()}, fd_vars, 1e-6, worst);
  }

  // every MDN weight, through its outputs
  {
    MdnParams params(3, 2, 4, 6, 2, 31);
    for (double& p : params.net().parameters()) p += 0.01;
    const std::vector<std::size_t> ids{2, 0, 1, 0};
    const Tensor d_means = testing::random_matrix(rng, 4, 2, -1.0, 1.0);
    const Tensor d_log_vars = testing::random_matrix(rng, 4, 2, -1.0, 1.0);
    const auto analytic = mdn_backward(params, ids, d_means, d_log_vars);
    const auto fd = testing::central_difference(
        [&](std::span<const double> x) {
          MdnParams probe = params;
          std::copy(x.begin(), x.end(), probe.net().parameters().begin());
          const GaussianSequence g = mdn_forward(probe, ids);
          double acc = 0.0;
          for (std::size_t i = 0; i < g.means().size(); ++i) {
            acc += g.means()[i] * d_means[i] + g.log_vars()[i] * d_log_vars[i];
          }
          return acc;
        },
        std::vector<double>(params.net().parameters().begin(), params.net().parameters().end()));
    check("mdn weights", analytic, fd, 1e-6, worst);
  }

  // end-to-end: weights -> Gaussians -> emissions -> loss
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    const MelSequence mel(testing::random_matrix(rng, 4, 1, -1.0, 1.0));
    const std::vector<std::size_t> ids{0, 1};
    const MdnParams params(2, 1, 3, 4, 1, seed);
    const auto result = alignment_loss(mel, mdn_forward(params, ids));
    const auto analytic = mdn_backward(params, ids, result.grads.d_means, result.grads.d_log_vars);
    const auto fd = testing::central_difference(
        [&](std::span<const double> x) {
          MdnParams probe = params;
          std::copy(x.begin(), x.end(), probe.net().parameters().begin());
          return alignment_loss(mel, mdn_forward(probe, ids)).loss;
        },
        std::vector<double>(params.net().parameters().begin(), params.net().parameters().end()));
    check("end-to-end", analytic, fd, 1e-5, worst_chain);
  }

  const double elapsed = seconds_since(t0);
  v.require(elapsed < 60.0, "runtime " + fmt("%.2f s", elapsed));
  if (v.pass) {
    v.detail = "max relative error " + fmt("%.2e", worst) + ", end-to-end " + fmt("%.2e", worst_chain) + ", " +
               fmt("%.2f s", elapsed);
  }
  return v;
}

Verdict posterior_properties() {
  Verdict v;
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::size_t> size(1, 40);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const Tensor logp = testing::random_matrix(rng, n, m, -8.0, 0.0);
    const AlignmentLattice lat = compute_lattice(logp);
    double total = 0.0;
    std::vector<double> per_token(m, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double row = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        row += lat.gamma(t, s);
        per_token[s] += lat.gamma(t, s);
      }
      worst = std::max(worst, std::abs(row - 1.0));
      v.require(std::abs(row - 1.0) < 1e-9, "row sum " + fmt("%.17g", row));
      total += row;
    }
    v.require(std::abs(total - static_cast<double>(n)) < 1e-8, "total mass " + fmt("%.17g", total));
    for (double mass : per_token) v.require(mass >= 1.0 - 1e-9, "token mass " + fmt("%.17g", mass));

    const double c = shift(rng);
    std::vector<double> shifted(logp.values().begin(), logp.values().end());
    for (double& x : shifted) x += c;
    const AlignmentLattice lat2 = compute_lattice(Tensor(logp.dims(), std::move(shifted)));
    const double expected = -lat.total_log_prob - static_cast<double>(n) * c;
    v.require(std::abs(-lat2.total_log_prob - expected) < 1e-9,
              "shift covariance off by " + fmt("%.3g", std::abs(-lat2.total_log_prob - expected)));
    for (std::size_t i = 0; i < lat.gamma.size(); ++i) {
      v.require(std::abs(lat.gamma[i] - lat2.gamma[i]) < 1e-9, "gamma changed under shift");
    }
  }
  if (v.pass) v.detail = "100 instances, max |row sum - 1| " + fmt("%.2e", worst);
  return v;
}

Verdict viterbi_optimality() {
  Verdict v;
  double worst = 0.0;
  std::size_t count = 0;
  for_each_small_instance([&](const Tensor& logp) {
    const std::size_t m = logp.dim(1);
    double best = -std::numeric_limits<double>::infinity();
    for_each_alignment(logp.dim(0), m, [&](std::span<const std::size_t> parts) {
      best = std::max(best, path_log_prob(logp, parts));
    });
    const ViterbiResult r = viterbi(logp);
    const DurationSequence d = path_to_durations(r.path, m);
    const double diff = std::abs(r.score - best);
    const double realized = path_log_prob(logp, d.frames);
    worst = std::max(worst, diff);
    ++count;
    v.require(diff < 1e-12, "score off by " + fmt("%.3g", diff));
    v.require(d.frames.size() == m && d.total() == logp.dim(0) &&
                  std::all_of(d.frames.begin(), d.frames.end(), [](std::size_t x) { return x >= 1; }),
              "durations are not a valid composition");
    v.require(std::abs(realized - best) < 1e-12, "durations do not realize the maximum");
  });
  if (v.pass) v.detail = std::to_string(count) + " instances, max |diff| " + fmt("%.2e", worst);
  return v;
}

struct RecoveryRun {
  std::uint64_t seed;
  SyntheticTask task;
  Phase1Result result;
  double seconds;
};

std::vector<RecoveryRun> recovery_runs() {
  std::vector<RecoveryRun> runs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TaskConfig tc;
    tc.seed = seed;
    SyntheticTask task = generate_task(tc);
    const auto t0 = Clock::now();
    Phase1Result result = train_phase1(task, {});
    const double elapsed = seconds_since(t0);
    runs.push_back({seed, std::move(task), std::move(result), elapsed});
  }
  return runs;
}

Verdict alignment_recovery(const std::vector<RecoveryRun>& runs) {
  Verdict v;
  int exact = 0;
  double slowest = 0.0;
  std::string missed;
  for (const RecoveryRun& r : runs) {
    const bool ok = extract_durations(r.result.params, r.task) == r.task.true_durations;
    exact += ok ? 1 : 0;
    if (!ok) missed += " " + std::to_string(r.seed);
    slowest = std::max(slowest, r.seconds);
  }
  v.require(exact >= 19, "exact recovery on " + std::to_string(exact) + "/20 seeds (missed:" + missed + ")");
  v.require(slowest < 10.0, "slowest run " + fmt("%.2f s", slowest));
  if (v.pass) {
    v.detail = std::to_string(exact) + "/20 seeds exact, slowest run " + fmt("%.2f s", slowest) +
               (missed.empty() ? "" : ", missed:" + missed);
  }
  return v;
}

Verdict duration_regressor(const std::vector<RecoveryRun>& runs) {
  Verdict v;
  double worst = 0.0;
  for (const RecoveryRun& r : runs) {
    const RegressorResult reg = extract_and_train_duration_regressor(r.result.params, r.task, {});
    worst = std::max(worst, reg.mse);
    v.require(reg.mse < 1e-3, "seed " + std::to_string(r.seed) + " mse " + fmt("%.3g", reg.mse));
    v.require(durations_from_log(reg.log_predictions) == reg.extracted,
              "seed " + std::to_string(r.seed) + " exp+round differs from extracted durations");
  }
  if (v.pass) v.detail = "20 tasks, max log-domain mse " + fmt("%.2e", worst);
  return v;
}

Verdict performance() {
  Verdict v;
  std::mt19937_64 rng(7007);
  std::normal_distribution<double> normal;
  const auto gaussian_matrix = [&](std::size_t r, std::size_t c, double scale) {
    std::vector<double> x(r * c);
    for (double& e : x) e = scale * normal(rng);
    return Tensor({r, c}, std::move(x));
  };
  const MelSequence mel(gaussian_matrix(1000, 80, 1.0));
  const GaussianSequence gaussians(gaussian_matrix(180, 80, 1.0), gaussian_matrix(180, 80, 0.1));

  double single = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = Clock::now();
    const GaussianLossResult r = alignment_loss(mel, gaussians);
    single = std::min(single, seconds_since(t0));
    v.require(std::isfinite(r.loss), "non-finite loss");
  }
  v.require(single < 1.0, "single pass " + fmt("%.3f s", single));

  const Tensor logp = emission_matrix(mel, gaussians);
  const std::vector<Tensor> batch(32, logp);
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const auto t1 = Clock::now();
  loss_and_grad_batch(batch, 1);
  const double serial = seconds_since(t1);
  const auto t2 = Clock::now();
  loss_and_grad_batch(batch, cores);
  const double parallel = seconds_since(t2);
  const double workers = std::min(cores, 32u);
  const double speedup = serial / parallel;
  v.require(speedup >= 0.75 * workers,
            "batch speedup " + fmt("%.2f", speedup) + " on " + std::to_string(cores) + " cores");
  if (v.pass) {
    v.detail = "single pass " + fmt("%.3f s", single) + "; batch of 32: " + fmt("%.2f", speedup) + "x on " +
               std::to_string(cores) + (cores == 1 ? " core (scaling not observable)" : " cores");
  }
  return v;
}

struct Process {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Process run_cli(const std::string& exe, const std::string& args, const std::filesystem::path& dir,
                const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd =
      env + "\"" + exe + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

bool diagnostic_has_code(const std::string& err, int code) {
  try {
    return nlohmann::json::parse(err).at("error").get<int>() == code;
  } catch (const std::exception&) {
    return false;
  }
}

Verdict format_and_cli(const std::string& exe) {
  Verdict v;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("maln_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  std::mt19937_64 rng(8008);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rank = 1 + trial % 4;
    std::vector<std::size_t> dims;
    std::size_t count = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      dims.push_back(1 + rng() % 5);
      count *= dims.back();
    }
    std::vector<double> data(count);
    for (double& x : data) x = (rng() % 7 == 0) ? kLogZero : u(rng);
    const Tensor t(dims, std::move(data), trial % 2 ? DType::F32 : DType::F64);
    const fs::path file = dir / "round.bin";
    save_tensor(t, file.string());
    const Tensor back = load_tensor(file.string());
    v.require(back.identical(t) && back.dtype() == t.dtype() && back.dims() == t.dims(),
              "tensor round trip not bit-exact");
  }

  const std::string logp = (dir / "logp.bin").string();
  save_tensor(testing::random_matrix(rng, 20, 10), logp);
  const Process loss = run_cli(exe, "loss --logp \"" + logp + "\"", dir);
  const Process oracle = run_cli(exe, "oracle --logp \"" + logp + "\"", dir);
  v.require(loss.code == 0 && oracle.code == 0, "loss/oracle exit codes " + std::to_string(loss.code) + "/" +
                                                    std::to_string(oracle.code));
  double agreement = std::numeric_limits<double>::infinity();
  if (loss.code == 0 && oracle.code == 0) agreement = std::abs(std::stod(loss.out) - std::stod(oracle.out));
  v.require(agreement < 1e-9, "loss vs oracle differ by " + fmt("%.3g", agreement));

  const std::string wide = (dir / "wide.bin").string();
  save_tensor(testing::random_matrix(rng, 3, 5), wide);
  const Process infeasible = run_cli(exe, "loss --logp \"" + wide + "\"", dir);
  v.require(infeasible.code == 2 && diagnostic_has_code(infeasible.err, 2),
            "infeasible input exit " + std::to_string(infeasible.code));

  const std::string junk = (dir / "junk.bin").string();
  std::ofstream(junk, std::ios::binary) << "MALN\x01\x02";
  const Process malformed = run_cli(exe, "loss --logp \"" + junk + "\"", dir);
  v.require(malformed.code == 3 && diagnostic_has_code(malformed.err, 3),
            "malformed file exit " + std::to_string(malformed.code));

  const Process refused = run_cli(exe, "oracle --logp \"" + logp + "\"", dir, "MALN_COMB_LIMIT=1000 ");
  v.require(refused.code == 4 && diagnostic_has_code(refused.err, 4),
            "limit refusal exit " + std::to_string(refused.code));

  fs::remove_all(dir);
  if (v.pass) v.detail = "200 round trips bit-exact, loss/oracle diff " + fmt("%.2e", agreement) + ", exit codes 2/3/4";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <maln executable>\n");
    return 2;
  }
  const std::string exe = argv[1];

  bool all = true;
  const auto report = [&](int id, const char* name, const std::function<Verdict()>& body) {
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    all = all && v.pass;
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "oracle equivalence", oracle_equivalence);
  report(2, "gradient suite", gradient_suite);
  report(3, "posterior properties", posterior_properties);
  report(4, "viterbi optimality", viterbi_optimality);
  std::vector<RecoveryRun> runs;
  report(5, "synthetic alignment recovery", [&] {
    runs = recovery_runs();
    return alignment_recovery(runs);
  });
  report(6, "duration regressor", [&] {
    if (runs.empty()) runs = recovery_runs();
    return duration_regressor(runs);
  });
  report(7, "performance", performance);
  report(8, "format and cli", [&] { return format_and_cli(exe); });
  return all ? 0 : 1;
}
