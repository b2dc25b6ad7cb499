#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtrrl/agent.hpp"
#include "rtrrl/config.hpp"
#include "rtrrl/metrics.hpp"
#include "rtrrl/snapshot.hpp"
#include "rtrrl/verify.hpp"

namespace fs = std::filesystem;
using namespace rtrrl;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kNumeric = 3 };

std::string default_out(const TrainConfig& cfg) { return "runs/" + cfg.resolved_run_id(); }

TrainResult run_to_dir(const TrainConfig& cfg, const fs::path& dir, bool csv) {
  fs::create_directories(dir);
  FileMetricSink sink((dir / "metrics.jsonl").string(), csv ? (dir / "metrics.csv").string() : "");
  TrainResult res = train(cfg, &sink);
  write_snapshot((dir / "final.snap").string(), snapshot_agent(*res.final_agent, "final"));
  write_snapshot((dir / "best.snap").string(), snapshot_agent(*res.best_agent, "best"));
  return res;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_train(CLI::App& app, TrainConfig& cfg, const TrainOptionBinding& bind, std::string out, bool csv) {
  finish_train_options(app, cfg, bind);
  if (out.empty()) out = default_out(cfg);
  const TrainResult res = run_to_dir(cfg, out, csv);
  std::printf("run %s: %lld steps, %lld episodes, %d epochs%s\n", res.run_id.c_str(),
              static_cast<long long>(res.steps), static_cast<long long>(res.episodes), res.epochs,
              res.early_stopped ? " (early stop)" : "");
  std::printf("best eval reward %.6g at step %lld\n", res.best_eval, static_cast<long long>(res.best_step));
  std::printf("outputs in %s\n", out.c_str());
  return kOk;
}

int cmd_eval(const std::string& path, std::int64_t steps, std::optional<std::uint64_t> seed) {
  const Snapshot snap = read_snapshot(path);
  auto agent = restore_agent(snap);
  const TrainConfig& cfg = agent->config();
  auto env = make_env(cfg.env, cfg.env_params, substream_seed(seed.value_or(cfg.seed), "eval_env"));

  // policy at the first observation of an episode, for inspection
  auto probe = env->clone();
  auto core = agent->core().clone();
  core->set_tracking(false);
  core->forward(agent->meta_input(probe->reset(), nullptr, 0.0));
  core->commit();
  const ActionDistribution dist = policy_forward(agent->heads(), core->features());
  std::ostringstream os;
  const Vector& shown = dist.kind == ActionKind::categorical ? dist.probs : dist.mean;
  for (Index i = 0; i < shown.size(); ++i) os << (i ? " " : "") << shown(i);
  std::printf("initial action %s: %s\n", dist.kind == ActionKind::categorical ? "probabilities" : "mean",
              os.str().c_str());

  const EvalResult res = evaluate(*agent, *env, steps);
  std::printf("episodes %lld\nmean reward %.6g\n", static_cast<long long>(res.episodes), res.mean_return);
  return kOk;
}

int cmd_verify(const VerifyOptions& opts) {
  bool all = true;
  const auto names = property_names();
  if (!opts.inject.empty() && std::find(names.begin(), names.end(), opts.inject) == names.end()) {
    throw ConfigError("unknown property '" + opts.inject + "' for --inject");
  }
  for (const PropertyResult& r : run_verification(opts)) {
    std::printf("%s %-26s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.passed;
  }
  std::printf("%s\n", all ? "all properties pass" : "verification FAILED");
  return all ? kOk : kFailed;
}

int cmd_sweep(CLI::App& app, TrainConfig& cfg, const TrainOptionBinding& bind, std::string out,
              const std::vector<std::uint64_t>& seeds, unsigned jobs, bool csv) {
  finish_train_options(app, cfg, bind);
  if (seeds.empty()) throw ConfigError("--seeds is empty");
  if (out.empty()) out = "runs/sweep-" + cfg.env;
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size())));

  std::vector<double> best(seeds.size(), 0.0);
  std::vector<std::string> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      TrainConfig c = cfg;
      c.seed = seeds[i];
      c.run_id.clear();
      try {
        best[i] = run_to_dir(c, fs::path(out) / ("seed_" + std::to_string(seeds[i])), csv).best_eval;
        std::lock_guard lock(print);
        std::printf("seed %llu: best eval reward %.6g\n", static_cast<unsigned long long>(seeds[i]), best[i]);
        std::fflush(stdout);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  nlohmann::json summary = {{"config", config_to_json(cfg)}, {"runs", nlohmann::json::array()}};
  bool failed = false;
  std::vector<double> ok;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    nlohmann::json r = {{"seed", seeds[i]}};
    if (errors[i].empty()) {
      r["best_eval"] = best[i];
      ok.push_back(best[i]);
    } else {
      r["error"] = errors[i];
      failed = true;
      std::fprintf(stderr, "seed %llu failed: %s\n", static_cast<unsigned long long>(seeds[i]), errors[i].c_str());
    }
    summary["runs"].push_back(r);
  }
  if (!ok.empty()) {
    summary["median_best_eval"] = median(ok);
    std::printf("median best eval reward over %zu seeds: %.6g\n", ok.size(), median(ok));
  }
  std::ofstream(fs::path(out) / "summary.json") << summary.dump(2) << '\n';
  return failed ? kFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online actor-critic with recurrent networks trained in real time"};
  app.require_subcommand(1);

  TrainConfig train_cfg;
  TrainOptionBinding train_bind;
  std::string train_out;
  bool train_csv = true;
  auto* train_cmd = app.add_subcommand("train", "Train one agent");
  add_train_options(*train_cmd, train_cfg, train_bind);
  train_cmd->add_option("--out", train_out, "Output directory (default runs/<run_id>)");
  train_cmd->add_option("--csv", train_csv, "Also write metrics.csv")->capture_default_str();

  std::string snap_path;
  std::int64_t eval_steps = 10'000;
  std::optional<std::uint64_t> eval_seed;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a snapshot with mode actions");
  eval_cmd->add_option("--snapshot", snap_path, "Snapshot file")->required();
  eval_cmd->add_option("--steps", eval_steps, "Environment steps")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "Evaluation seed (default: the run seed)");

  VerifyOptions vopts;
  auto* verify_cmd = app.add_subcommand("verify", "Check gradient engines and TD against reference code");
  verify_cmd->add_flag("--quick", vopts.quick, "Small instances only (T <= 8, N <= 3)");
  verify_cmd->add_option("--seed", vopts.seed, "Instance seed")->capture_default_str();
  verify_cmd->add_option("--inject", vopts.inject, "Perturb the named property's engine output");

  TrainConfig sweep_cfg;
  TrainOptionBinding sweep_bind;
  std::string sweep_out;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool sweep_csv = true;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one agent per seed, in parallel");
  add_train_options(*sweep_cmd, sweep_cfg, sweep_bind);
  sweep_cmd->add_option("--seeds", seeds, "Seeds to run")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--jobs", jobs, "Parallel runs")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "Output directory (default runs/sweep-<env>)");
  sweep_cmd->add_option("--csv", sweep_csv, "Also write metrics.csv")->capture_default_str();

  try {
    app.parse(argc, argv);
    for (CLI::App* sub : {train_cmd, sweep_cmd}) {
      if (*sub) reparse_with_subcommand_config(app, *sub, argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(*train_cmd, train_cfg, train_bind, train_out, train_csv);
    if (*eval_cmd) return cmd_eval(snap_path, eval_steps, eval_seed);
    if (*verify_cmd) return cmd_verify(vopts);
    if (*sweep_cmd) return cmd_sweep(*sweep_cmd, sweep_cfg, sweep_bind, sweep_out, seeds, jobs, sweep_csv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "run with --help for usage\n");
    return kUsage;
  } catch (const NumericFault& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return kNumeric;
  } catch (const SnapshotError& e) {
    std::fprintf(stderr, "snapshot error: %s\n", e.what());
    return kFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kOk;
}
