// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--reuse] [--only 1,2,...] [--known-red 11,...] [--workdir DIR]
//
// --reuse skips training when a run directory already holds policy.json.
// Criteria listed in --known-red still print FAIL but do not fail the exit
// code; the reason for each is recorded in the README.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marl/cli.hpp"
#include "marl/config.hpp"
#include "marl/eval.hpp"
#include "marl/selftest.hpp"

namespace fs = std::filesystem;
using namespace marl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Suite {
  fs::path workdir;
  bool reuse = false;
  std::set<int> only, known_red;
  int failures = 0;

  bool wanted(int id) const { return only.empty() || only.count(id) > 0; }

  void report(int id, const std::string& title, const Verdict& o) {
    const bool excused = !o.pass && known_red.count(id) > 0;
    std::printf("%s  criterion %2d: %-38s %s%s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
                o.detail.c_str(), excused ? "  [known red]" : "");
    std::fflush(stdout);
    if (!o.pass && !excused) ++failures;
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Verdict from_check(const selftest::CheckResult& r, double limit_s) {
  Verdict o;
  o.pass = r.passed && r.seconds < limit_s;
  o.detail = r.detail + fmt(", %.2f s (limit %.0f s)", r.seconds, limit_s);
  return o;
}

struct TrainedRun {
  fs::path dir;
  double wall_seconds = 0.0;
  bool ok = false;
  bool reused = false;
};

// A finished run is reused only when its echoed config equals the config
// this suite would train with.
bool reusable(const fs::path& dir, const RunConfig& expected) {
  if (!fs::exists(dir / "policy.json") || !fs::exists(dir / "run_summary.json")) return false;
  try {
    std::ifstream in(dir / "config.json");
    return nlohmann::json::parse(in) == to_json(expected);
  } catch (const std::exception&) {
    return false;
  }
}

TrainedRun train_preset(Suite& s, const std::string& preset, const std::string& tag) {
  TrainedRun run;
  run.dir = s.workdir / tag;
  fs::create_directories(s.workdir);
  const fs::path cfg = s.workdir / (tag + ".json");
  std::ofstream(cfg) << nlohmann::json{{"preset", preset}, {"seed", 1}}.dump();
  RunConfig expected = load_run_config(cfg);
  expected.output_dir = run.dir.string();
  run.reused = s.reuse && reusable(run.dir, expected);
  if (!run.reused) {
    fs::remove_all(run.dir);
    std::fprintf(stderr, "acceptance: training %s ...\n", tag.c_str());
    if (cli::run({"train", cfg.string(), "--out", run.dir.string(), "--quiet"}) != 0) return run;
  }
  std::ifstream in(run.dir / "run_summary.json");
  const auto j = nlohmann::json::parse(in);
  run.wall_seconds = j.at("wall_seconds").get<double>();
  run.ok = true;
  return run;
}

struct EvalPair {
  EvalReport mean, sampled;
};

EvalPair evaluate_both(const TrainedRun& run, Experiment e) {
  const Checkpoint ck = load_checkpoint(run.dir / "policy.json");
  EvalOptions o;
  o.n_episodes = 500;
  o.seed = 1;
  o.trajectory_episodes = 0;
  EvalPair p;
  o.deterministic = true;
  p.mean = evaluate(ck, e, o);
  o.deterministic = false;
  p.sampled = evaluate(ck, e, o);
  return p;
}

Verdict success_criterion(const TrainedRun& run, const EvalPair& ev, double threshold, double reference) {
  Verdict o;
  if (!run.ok) return {false, "training failed"};
  o.pass = ev.mean.average_success_rate >= threshold;
  o.detail = fmt("mean-action %.1f%% (need >= %.0f%%, reference %.1f%%); sampled %.1f%%",
                 ev.mean.average_success_rate, threshold, reference, ev.sampled.average_success_rate) +
             fmt("; train %.0f s", run.wall_seconds) + (run.reused ? " (reused run)" : "");
  return o;
}

std::vector<double> entropy_series(const fs::path& metrics_csv) {
  std::ifstream in(metrics_csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int col = 0; col <= 5 && std::getline(ss, cell, ','); ++col)
      if (col == 5) out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  Suite s;
  std::string workdir = std::string(MARL_TEST_TMP) + "/acceptance";
  std::vector<int> only, known_red;
  CLI::App app{"acceptance suite"};
  app.add_flag("--reuse", s.reuse);
  app.add_option("--only", only)->delimiter(',');
  app.add_option("--known-red", known_red)->delimiter(',');
  app.add_option("--workdir", workdir);
  CLI11_PARSE(app, argc, argv);
  s.workdir = workdir;
  s.only.insert(only.begin(), only.end());
  s.known_red.insert(known_red.begin(), known_red.end());

  const std::uint64_t seed = 20240601;

  // Property suite.
  if (s.wanted(1)) {
    Verdict o{true, ""};
    double secs = 0.0;
    for (int layers : {2, 3}) {
      for (bool separate : {false, true}) {
        const auto r = selftest::check_loss_gradient(layers, seed, 100, separate);
        o.pass = o.pass && r.passed;
        secs += r.seconds;
        o.detail += std::to_string(layers) + (separate ? "L/sep " : "L ") + r.detail.substr(r.detail.find("error") + 6, 9) + "; ";
      }
    }
    o.pass = o.pass && secs < 60.0;
    o.detail += fmt("%.1f s", secs);
    s.report(1, "loss gradient vs finite differences", o);
  }
  if (s.wanted(2)) s.report(2, "GAE vs brute-force oracle", from_check(selftest::check_gae_oracle(seed), 10));
  if (s.wanted(3)) s.report(3, "reward exactness", from_check(selftest::check_reward_oracle(seed), 10));
  if (s.wanted(4)) s.report(4, "observation shape and layout", from_check(selftest::check_observation_layout(seed), 60));
  if (s.wanted(5)) s.report(5, "wall distance vs sampling oracle", from_check(selftest::check_wall_distance(seed), 60));

  if (s.wanted(6)) {
    const fs::path d = s.workdir / "determinism";
    fs::remove_all(d);
    fs::create_directories(d);
    // Smaller buffer than the preset so the 1e4-step smoke run performs updates.
    std::ofstream(d / "smoke.json") << R"({"preset": "g2gca_cp", "summary_interval": 1000,
        "checkpoint_interval": 0, "ppo": {"max_steps": 10000, "batch_size": 512, "buffer_size": 2048}})";
    const int a = cli::run({"train", (d / "smoke.json").string(), "--out", (d / "a").string(), "--quiet"});
    const int b = cli::run({"train", (d / "smoke.json").string(), "--out", (d / "b").string(), "--quiet"});
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    const std::string ma = slurp(d / "a" / "metrics.csv"), mb = slurp(d / "b" / "metrics.csv");
    Verdict o;
    o.pass = a == 0 && b == 0 && !ma.empty() && ma == mb;
    o.detail = (ma == mb ? "identical" : "differ") + fmt(" metrics (%.0f bytes)", static_cast<double>(ma.size()));
    s.report(6, "bitwise-identical smoke runs", o);
  }

  // Desk-scale reproduction.
  TrainedRun g2gca_cp;
  EvalPair g2gca_eval;
  const bool need_g2gca = s.wanted(7) || s.wanted(10) || s.wanted(11) || s.wanted(12) || s.wanted(13);
  if (need_g2gca) {
    g2gca_cp = train_preset(s, "g2gca_cp", "g2gca_cp");
    if (g2gca_cp.ok && (s.wanted(7) || s.wanted(10))) g2gca_eval = evaluate_both(g2gca_cp, Experiment::G2GCA);
  }
  if (s.wanted(7)) {
    Verdict o = success_criterion(g2gca_cp, g2gca_eval, 70, 88.9);
    o.pass = o.pass && g2gca_cp.wall_seconds <= 7200.0;
    o.detail += " (limit 7200 s)";
    s.report(7, "G2GCA-CP success rate", o);
  }

  if (s.wanted(8)) {
    const TrainedRun ape = train_preset(s, "ape_cp", "ape_cp");
    const EvalPair ev = ape.ok ? evaluate_both(ape, Experiment::APE) : EvalPair{};
    s.report(8, "APE-CP success rate", success_criterion(ape, ev, 70, 89.7));
  }

  if (s.wanted(9)) {
    const TrainedRun ri = train_preset(s, "g2gcari_cp", "g2gcari_cp");
    const EvalPair ev = ri.ok ? evaluate_both(ri, Experiment::G2GCARI) : EvalPair{};
    s.report(9, "G2GCARI-CP success rate", success_criterion(ri, ev, 20, 36.5));
  }

  if (s.wanted(10)) {
    Verdict o;
    std::vector<double> lengths;
    for (const auto& r : g2gca_eval.mean.episodes)
      if (r.outcome == marl::Outcome::Success) lengths.push_back(static_cast<double>(r.decision_steps));
    std::vector<double> sampled;
    for (const auto& r : g2gca_eval.sampled.episodes)
      if (r.outcome == marl::Outcome::Success) sampled.push_back(static_cast<double>(r.decision_steps));
    auto median = [](std::vector<double> v) {
      if (v.empty()) return std::nan("");
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double m = median(lengths);
    o.pass = m >= 15 && m <= 60;
    o.detail = fmt("median %.1f steps over %.0f successes (need 15-60, reference ~33); sampled median %.1f", m,
                   static_cast<double>(lengths.size()), median(sampled));
    s.report(10, "G2GCA-CP successful episode length", o);
  }

  if (s.wanted(11)) {
    Verdict o;
    const auto ent = entropy_series(g2gca_cp.dir / "metrics.csv");
    // Smoothing: means over ten equal consecutive blocks of metrics rows.
    std::vector<double> deciles;
    const std::size_t n = ent.size();
    for (std::size_t k = 0; k < 10 && n >= 10; ++k) {
      double sum = 0.0;
      const std::size_t lo = k * n / 10, hi = (k + 1) * n / 10;
      for (std::size_t i = lo; i < hi; ++i) sum += ent[i];
      deciles.push_back(sum / static_cast<double>(hi - lo));
    }
    bool monotone = deciles.size() == 10;
    for (std::size_t k = 1; k < deciles.size(); ++k) monotone = monotone && deciles[k] <= deciles[k - 1];
    const double final_ent = n ? ent.back() : std::nan("");
    o.pass = monotone && final_ent >= 0.8 && final_ent <= 1.6;
    std::string trend;
    for (double d : deciles) trend += fmt("%.2f ", d);
    o.detail = std::string(monotone ? "non-increasing" : "not monotone") +
               fmt(", final %.3f summed / %.3f per-dim (need summed 0.8-1.6, reference ~1.22); deciles ",
                   final_ent, final_ent / 2) +
               trend;
    s.report(11, "entropy trend", o);
  }

  if (s.wanted(12)) {
    Verdict o;
    if (g2gca_cp.ok) {
      const Checkpoint ck = load_checkpoint(g2gca_cp.dir / "policy.json");
      const LatencyStats l = measure_latency(ck, Experiment::G2GCA, 10000, 1);
      o.pass = l.mean_us < 1220.0;
      o.detail = fmt("mean %.1f us, median %.1f us, p99 %.1f us (need mean < 1220 us)", l.mean_us, l.median_us, l.p99_us);
    } else {
      o.detail = "no checkpoint";
    }
    s.report(12, "observation-action latency", o);
  }

  if (s.wanted(13)) {
    const TrainedRun ip = train_preset(s, "g2gca_ip", "g2gca_ip");
    Verdict o;
    o.pass = ip.ok && g2gca_cp.ok && ip.wall_seconds > g2gca_cp.wall_seconds;
    o.detail = fmt("IP %.0f s vs CP %.0f s at 2.5M steps (reference 12h44m vs 4h16m)", ip.wall_seconds,
                   g2gca_cp.wall_seconds);
    s.report(13, "IP slower than CP", o);
  }

  std::printf("%s\n", s.failures == 0 ? "acceptance: all required criteria passed"
                                      : "acceptance: some criteria failed");
  return s.failures == 0 ? 0 : 1;
}
