#include "marl/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "marl/config.hpp"
#include "marl/eval.hpp"
#include "marl/records.hpp"
#include "marl/selftest.hpp"

namespace marl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  RunConfig cfg;
  try {
    cfg = load_run_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    if (args.out) cfg.output_dir = *args.out;
    if (cfg.output_dir.empty()) cfg.output_dir = cfg.name + "-seed" + std::to_string(cfg.seed);
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "marl train: " << e.what() << "\n";
    return kExitValidation;
  }

  const fs::path dir = resolve_output_dir(cfg.output_dir);
  try {
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

    TrainOptions opts = cfg.to_train_options();
    opts.out_dir = dir;
    if (!args.quiet) {
      std::cerr << "marl train: " << cfg.name << " (" << to_string(cfg.experiment) << ", "
                << to_string(cfg.mode) << ", seed " << cfg.seed << ") -> " << dir.string() << "\n";
    }
    const auto on_row = [&](const MetricsRow& row) {
      if (args.quiet) return;
      std::fprintf(stderr, "  step %10lld  %-6s  reward %8.3f  success %5.1f%%  entropy %.3f\n",
                   static_cast<long long>(row.step),
                   row.policy ? std::to_string(*row.policy).c_str() : "shared",
                   row.cumulative_reward, 100.0 * row.success_rate, row.entropy);
    };
    const TrainResult result = train(opts, on_row);

    json summary = {
        {"name", cfg.name},
        {"wall_seconds", result.wall_seconds},
        {"world_steps", result.world_steps},
        {"updates", result.updates},
        {"policy_steps", result.policy_steps},
        {"checkpoint", (dir / "policy.json").string()},
    };
    write_text(dir / "run_summary.json", summary.dump(2) + "\n");
    if (!args.quiet) std::cerr << "marl train: done in " << result.wall_seconds << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "marl train: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& args) {
  if (!fs::is_regular_file(args.checkpoint)) {
    std::cerr << "marl eval: checkpoint not found: " << args.checkpoint.string() << "\n";
    return kExitValidation;
  }
  Checkpoint ckpt;
  Experiment experiment;
  try {
    ckpt = load_checkpoint(args.checkpoint);
    experiment = parse_experiment(args.experiment.value_or(ckpt.experiment));
  } catch (const std::exception& e) {
    std::cerr << "marl eval: " << e.what() << "\n";
    return kExitValidation;
  }

  if (args.latency_trials > 0 && args.latency_trials < 1000) {
    std::cerr << "marl eval: --latency needs at least 1000 trials\n";
    return kExitValidation;
  }

  EvalOptions opts;
  opts.n_episodes = args.episodes;
  opts.seed = args.seed;
  opts.deterministic = args.deterministic;
  opts.trajectory_episodes = args.trajectory_episodes;

  EvalReport report;
  try {
    report = evaluate(ckpt, experiment, opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "marl eval: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "marl eval: " << e.what() << "\n";
    return kExitRuntime;
  }

  try {
    const fs::path dir =
        args.out ? resolve_output_dir(*args.out)
                 : args.checkpoint.parent_path() /
                       ("eval-" + std::string(to_string(experiment)) + "-seed" + std::to_string(args.seed));
    fs::create_directories(dir);
    write_text(dir / "eval_report.json", report_to_json(report));
    write_records(dir / "episodes.ndjson", report.header, report.episodes);
    export_trajectories(report.episodes, report.header, dir);

    std::printf("experiment %s, %zu episodes per agent, %s actions\n",
                std::string(to_string(experiment)).c_str(), report.n_episodes,
                report.deterministic ? "mean" : "sampled");
    for (const AgentEvalStats& a : report.agents) {
      std::printf("  agent %zu: success %6.2f%%  (peer %lld, wall %lld, timeout %lld)\n", a.agent_id,
                  a.success_rate, static_cast<long long>(a.peer_collisions),
                  static_cast<long long>(a.wall_collisions), static_cast<long long>(a.timeouts));
    }
    std::printf("  average %.2f%%, mean time to goal %.2f s\n", report.average_success_rate,
                report.mean_seconds_to_goal);
    if (args.latency_trials > 0) {
      const LatencyStats l = measure_latency(ckpt, experiment, args.latency_trials, args.seed);
      json doc = {{"trials", l.trials}, {"mean_us", l.mean_us}, {"median_us", l.median_us}, {"p99_us", l.p99_us}};
      write_text(dir / "latency.json", doc.dump(2) + "\n");
      std::printf("  latency mean %.1f us, p99 %.1f us over %zu trials\n", l.mean_us, l.p99_us, l.trials);
    }
    std::printf("  output: %s\n", dir.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "marl eval: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_replay(const ReplayArgs& args) {
  RecordFile file;
  try {
    file = read_records(args.records);
  } catch (const std::exception& e) {
    std::cerr << "marl replay: " << e.what() << "\n";
    return kExitValidation;
  }
  if (file.records.empty()) {
    std::cerr << "marl replay: no episodes in " << args.records.string() << "\n";
    return kExitValidation;
  }
  try {
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    write_text(args.out, render_svg(file.header, file.records));
  } catch (const std::exception& e) {
    std::cerr << "marl replay: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : selftest::run_property_suite(20240601)) {
    std::printf("%s  %-55s %s (%.2f s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str(), r.seconds);
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitRuntime;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-robot navigation simulator and PPO trainer"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::string train_out;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Train policies from a config file");
  train->add_option("--config,config", train_args.config, "Run config (JSON)")->required();
  auto* train_out_opt = train->add_option("--out", train_out, "Output directory");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Override the master seed");
  train->add_flag("--quiet", train_args.quiet, "No progress output");

  EvalArgs eval_args;
  std::string eval_exp, eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint,checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  auto* eval_exp_opt = eval->add_option("--experiment", eval_exp, "g2gca, ape or g2gcari");
  eval->add_option("--episodes", eval_args.episodes, "Episodes per agent");
  eval->add_option("--seed", eval_args.seed, "Evaluation seed");
  eval->add_flag("--deterministic", eval_args.deterministic, "Act with the policy mean");
  eval->add_option("--trajectories", eval_args.trajectory_episodes,
                   "Episodes per agent with stored trajectories");
  eval->add_option("--latency", eval_args.latency_trials,
                   "Also time N observation-to-action cycles (N >= 1000)");
  auto* eval_out_opt = eval->add_option("--out", eval_out, "Output directory");

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "Re-render plots from an episode record file");
  replay->add_option("--records,records", replay_args.records, "episodes.ndjson")->required();
  replay->add_option("--out", replay_args.out, "Output SVG")->required();

  app.add_subcommand("selftest", "Run the oracle property suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*train) {
      if (*train_out_opt) train_args.out = train_out;
      if (*train_seed_opt) train_args.seed = train_seed;
      return cmd_train(train_args);
    }
    if (*eval) {
      if (*eval_exp_opt) eval_args.experiment = eval_exp;
      if (*eval_out_opt) eval_args.out = eval_out;
      return cmd_eval(eval_args);
    }
    if (*replay) return cmd_replay(replay_args);
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "marl: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("marl");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(storage.size()), argv.data());
}

}  // namespace marl::cli
