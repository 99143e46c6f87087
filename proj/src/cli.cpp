#include "maln/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "maln/alignment.hpp"
#include "maln/emission.hpp"
#include "maln/errors.hpp"
#include "maln/lattice.hpp"
#include "maln/tensor.hpp"
#include "maln/train.hpp"

namespace maln::cli {

namespace {

using nlohmann::json;

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::uint64_t combination_limit() {
  const char* raw = std::getenv(kCombLimitEnv);
  if (raw == nullptr || *raw == '\0') return kDefaultCombinationLimit;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (*end != '\0' || raw[0] == '-') {
    throw InputError(std::string(kCombLimitEnv) + " must be a non-negative integer");
  }
  return v;
}

DurationSequence load_durations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON in ") + path + ": " + e.what(), e.byte);
  }
  const json& list = doc.is_object() && doc.contains("durations") ? doc["durations"] : doc;
  if (!list.is_array()) throw FormatError("durations JSON must be an array or {\"durations\": [...]}", 0);
  DurationSequence out;
  for (const auto& v : list) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw InputError("durations must be non-negative integers");
    }
    out.frames.push_back(v.get<std::size_t>());
  }
  return out;
}

void print_loss(double loss, std::ostream& out) { out << format_real(loss) << '\n'; }

json loss_curve_json(const std::vector<double>& losses) {
  // At most ~100 points plus the final step.
  const std::size_t stride = std::max<std::size_t>(1, (losses.size() + 99) / 100);
  json curve = json::array();
  for (std::size_t i = 0; i < losses.size(); i += stride) curve.push_back({i, losses[i]});
  if ((losses.size() - 1) % stride != 0) curve.push_back({losses.size() - 1, losses.back()});
  return curve;
}

struct TrainDemoArgs {
  std::size_t tokens = 5;
  std::size_t dim = 2;
  std::size_t max_duration = 8;
  double noise = 0.1;
  double spread = 3.0;
  std::size_t steps = 500;
  double lr = 1e-2;
  std::size_t restarts = 64;
  std::size_t regressor_steps = 2000;
  std::uint64_t seed = 0;
  std::string report;
};

void train_demo(const TrainDemoArgs& a, std::ostream& out) {
  const auto started = std::chrono::steady_clock::now();
  TaskConfig task_config;
  task_config.tokens = a.tokens;
  task_config.channels = a.dim;
  task_config.max_duration = a.max_duration;
  task_config.noise_std = a.noise;
  task_config.mean_spread = a.spread;
  task_config.seed = a.seed;
  const SyntheticTask task = generate_task(task_config);

  Phase1Config phase1;
  phase1.steps = a.steps;
  phase1.adam.learning_rate = a.lr;
  phase1.restarts = a.restarts;
  const Phase1Result trained = train_phase1(task, phase1);
  const DurationSequence recovered = extract_durations(trained.params, task);

  json summary;
  summary["tokens"] = a.tokens;
  summary["frames"] = task.mel.frame_count();
  summary["final_loss"] = trained.final_loss;
  summary["true_durations"] = task.true_durations.frames;
  summary["recovered_durations"] = recovered.frames;
  summary["exact_recovery"] = recovered == task.true_durations;
  summary["restart"] = trained.restart;

  if (a.tokens >= 2) {
    RegressorConfig reg;
    reg.steps = a.regressor_steps;
    const RegressorResult fit = fit_duration_regressor(task.token_ids, recovered, reg);
    summary["regressor_mse"] = fit.mse;
    summary["predicted_durations"] = durations_from_log(fit.log_predictions).frames;
  } else {
    summary["regressor_mse"] = nullptr;
    summary["predicted_durations"] = nullptr;
  }

  if (!a.report.empty()) {
    json report = summary;
    report["config"] = {{"tokens", a.tokens},     {"dim", a.dim},       {"max_duration", a.max_duration},
                        {"noise", a.noise},       {"spread", a.spread}, {"steps", a.steps},
                        {"lr", a.lr},             {"restarts", a.restarts},
                        {"regressor_steps", a.regressor_steps}, {"seed", a.seed}};
    report["loss_curve"] = loss_curve_json(trained.losses);
    report["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ofstream file(a.report);
    if (!file) throw IoError("cannot open " + a.report + " for writing");
    file << report.dump(2) << '\n';
  }
  out << summary.dump() << '\n';
}

int fail(std::ostream& err, int code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monotonic alignment loss toolkit", "maln"};
  app.require_subcommand(1);

  std::string mel_path, gaussians_path, out_path, logp_path, grad_path, hidden_path, durations_path;

  auto* emission_cmd = app.add_subcommand("emission", "Gaussian log-likelihood matrix (n, m)");
  emission_cmd->add_option("--mel", mel_path, "mel tensor (n, d)")->required();
  emission_cmd->add_option("--gaussians", gaussians_path, "packed (2, m, d): means, log-variances")->required();
  emission_cmd->add_option("--out", out_path, "output emission tensor")->required();

  auto* loss_cmd = app.add_subcommand("loss", "Alignment loss via the forward recursion");
  loss_cmd->add_option("--logp", logp_path, "emission tensor (n, m)")->required();
  loss_cmd->add_option("--grad", grad_path, "write d loss / d logp to this path");

  auto* oracle_cmd = app.add_subcommand("oracle", "Alignment loss by enumerating every alignment");
  oracle_cmd->add_option("--logp", logp_path, "emission tensor (n, m)")->required();

  auto* align_cmd = app.add_subcommand("align", "Viterbi durations as JSON");
  align_cmd->add_option("--logp", logp_path, "emission tensor (n, m)")->required();

  auto* regulate_cmd = app.add_subcommand("regulate", "Expand token rows by durations");
  regulate_cmd->add_option("--hidden", hidden_path, "token features (m, h)")->required();
  regulate_cmd->add_option("--durations", durations_path, "JSON durations")->required();
  regulate_cmd->add_option("--out", out_path, "output tensor (sum(d), h)")->required();

  TrainDemoArgs demo;
  auto* demo_cmd = app.add_subcommand("train-demo", "Train on a synthetic task and report recovery");
  demo_cmd->add_option("--tokens", demo.tokens, "token count m")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--dim", demo.dim, "channel count d")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--max-duration", demo.max_duration, "largest true duration")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--noise", demo.noise, "frame noise standard deviation");
  demo_cmd->add_option("--spread", demo.spread, "standard deviation of true means");
  demo_cmd->add_option("--steps", demo.steps, "Adam steps per restart")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--lr", demo.lr, "learning rate");
  demo_cmd->add_option("--restarts", demo.restarts, "independent initializations")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--regressor-steps", demo.regressor_steps, "duration regressor steps");
  demo_cmd->add_option("--seed", demo.seed, "task seed");
  demo_cmd->add_option("--report", demo.report, "write a JSON report here");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("maln");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    out << app.help();
    return fail(err, kInvalidInput, e.what());
  }

  try {
    if (emission_cmd->parsed()) {
      const MelSequence mel(load_tensor(mel_path));
      const GaussianSequence gaussians = GaussianSequence::unpack(load_tensor(gaussians_path));
      save_tensor(emission_matrix(mel, gaussians), out_path);
    } else if (loss_cmd->parsed()) {
      const Tensor logp = load_tensor(logp_path);
      if (grad_path.empty()) {
        print_loss(forward(logp).loss, out);
      } else {
        const LossAndGrad result = loss_and_grad(logp);
        save_tensor(result.grad, grad_path);
        print_loss(result.loss, out);
      }
    } else if (oracle_cmd->parsed()) {
      const Tensor logp = load_tensor(logp_path);
      print_loss(brute_force_loss(logp, combination_limit()), out);
    } else if (align_cmd->parsed()) {
      const Tensor logp = load_tensor(logp_path);
      const ViterbiResult best = viterbi(logp);
      const DurationSequence durations = path_to_durations(best.path, logp.dim(1));
      out << json{{"durations", durations.frames}, {"score", best.score}}.dump() << '\n';
    } else if (regulate_cmd->parsed()) {
      const Tensor hidden = load_tensor(hidden_path);
      save_tensor(length_regulate(hidden, load_durations(durations_path)), out_path);
    } else if (demo_cmd->parsed()) {
      train_demo(demo, out);
    }
  } catch (const LimitError& e) {
    return fail(err, kLimitRefused, e.what());
  } catch (const FormatError& e) {
    return fail(err, kFormatError, e.what());
  } catch (const IoError& e) {
    return fail(err, kFormatError, e.what());
  } catch (const Error& e) {
    return fail(err, kInvalidInput, e.what());
  } catch (const std::exception& e) {
    return fail(err, kInternal, e.what());
  }
  return kOk;
}

}  // namespace maln::cli
