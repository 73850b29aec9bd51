#include "marl/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "marl/config.hpp"

namespace marl {

namespace {

WorldConfig world_for(const Checkpoint& ckpt, Experiment experiment, const EvalOptions& opts) {
  WorldConfig wc;
  wc.n_agents = ckpt.n_agents;
  wc.arena = Arena::square(ckpt.n_agents);
  wc.experiment = experiment;
  wc.observation_scale = ckpt.observation_scale;
  wc.max_decision_steps = opts.max_decision_steps;
  wc.min_spawn_separation = opts.min_spawn_separation;
  wc.seed = opts.seed;
  return wc;
}

void check_compatible(const Checkpoint& ckpt, Experiment experiment) {
  const int depth = hidden_layers_for(experiment);
  const auto obs_dim = static_cast<int>(4 + 2 * (ckpt.n_agents - 1));
  if (ckpt.mode == "ip" && ckpt.policies.size() != ckpt.n_agents) {
    throw std::invalid_argument("checkpoint: IP checkpoint must hold one policy per agent");
  }
  for (const PolicyParams& p : ckpt.policies) {
    if (p.shape().hidden_layers != depth) {
      throw std::invalid_argument("checkpoint/experiment mismatch: " + std::string(to_string(experiment)) +
                                  " uses " + std::to_string(depth) + " hidden layers, checkpoint has " +
                                  std::to_string(p.shape().hidden_layers));
    }
    if (p.shape().input_dim != obs_dim) {
      throw std::invalid_argument("checkpoint/experiment mismatch: input dimension " +
                                  std::to_string(p.shape().input_dim) + " != " + std::to_string(obs_dim));
    }
  }
}

using ActionFn = std::function<Action(std::size_t, const Observation&)>;

EvalReport run_protocol(const ActionFn& act, WorldConfig wc, const EvalOptions& opts) {
  wc.record_trajectories = opts.trajectory_episodes > 0;
  EvalReport report;
  report.header = make_record_header(wc);
  report.n_episodes = opts.n_episodes;
  report.deterministic = opts.deterministic;
  const std::size_t n = wc.n_agents;
  report.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) report.agents[i].agent_id = i;

  if (opts.n_episodes > 0) {
    World world(wc);
    std::vector<std::size_t> done(n, 0);
    auto finished = [&] {
      return std::all_of(done.begin(), done.end(), [&](std::size_t d) { return d >= opts.n_episodes; });
    };
    std::vector<Action> actions(n);
    while (!finished()) {
      for (std::size_t i = 0; i < n; ++i) actions[i] = act(i, world.build_observation(i));
      const auto results = world.step(actions);
      for (std::size_t i = 0; i < n; ++i) {
        if (!results[i].terminal) continue;
        EpisodeRecord rec = world.respawn_if_terminal(i);
        if (done[i] >= opts.n_episodes) continue;
        ++done[i];
        if (static_cast<std::size_t>(rec.episode_index) >= opts.trajectory_episodes) rec.trajectory.clear();
        AgentEvalStats& s = report.agents[i];
        ++s.episodes;
        switch (rec.outcome) {
          case Outcome::Success: ++s.successes; break;
          case Outcome::PeerCollision: ++s.peer_collisions; break;
          case Outcome::WallCollision: ++s.wall_collisions; break;
          case Outcome::Timeout: ++s.timeouts; break;
        }
        report.episodes.push_back(std::move(rec));
      }
    }
  }

  double rate_sum = 0.0;
  for (auto& s : report.agents) {
    s.success_rate = s.episodes ? 100.0 * static_cast<double>(s.successes) / s.episodes : 0.0;
    rate_sum += s.success_rate;
  }
  report.average_success_rate = n ? rate_sum / static_cast<double>(n) : 0.0;
  double steps = 0.0;
  std::int64_t wins = 0;
  for (const auto& r : report.episodes) {
    if (r.outcome != Outcome::Success) continue;
    steps += static_cast<double>(r.decision_steps);
    ++wins;
  }
  report.mean_steps_to_goal = wins ? steps / static_cast<double>(wins) : 0.0;
  report.mean_seconds_to_goal = report.mean_steps_to_goal * wc.decision_seconds();
  return report;
}

}  // namespace

EvalReport evaluate(const Checkpoint& checkpoint, Experiment experiment, const EvalOptions& opts) {
  check_compatible(checkpoint, experiment);
  const WorldConfig wc = world_for(checkpoint, experiment, opts);
  Rng rng = make_stream(opts.seed, "policy");
  ActionFn act = [&](std::size_t agent, const Observation& obs) {
    const PolicyParams& p = checkpoint.policy_for(agent);
    return opts.deterministic ? mean_action(p, obs).action : sample_action(p, obs, rng).action;
  };
  return run_protocol(act, wc, opts);
}

EvalReport evaluate_scripted(const ScriptedPolicy& policy, const WorldConfig& world,
                             const EvalOptions& opts) {
  WorldConfig wc = world;
  wc.seed = opts.seed;
  wc.max_decision_steps = opts.max_decision_steps;
  wc.min_spawn_separation = opts.min_spawn_separation;
  return run_protocol(policy, wc, opts);
}

std::string report_to_json(const EvalReport& report) {
  using nlohmann::json;
  json agents = json::array();
  for (const auto& s : report.agents) {
    agents.push_back({{"agent_id", s.agent_id},
                      {"episodes", s.episodes},
                      {"successes", s.successes},
                      {"peer_collisions", s.peer_collisions},
                      {"wall_collisions", s.wall_collisions},
                      {"timeouts", s.timeouts},
                      {"success_rate", s.success_rate}});
  }
  json doc = {{"experiment", std::string(to_string(report.header.experiment))},
              {"episodes_per_agent", report.n_episodes},
              {"deterministic", report.deterministic},
              {"agents", agents},
              {"average_success_rate", report.average_success_rate},
              {"mean_steps_to_goal", report.mean_steps_to_goal},
              {"mean_seconds_to_goal", report.mean_seconds_to_goal}};
  return doc.dump(2);
}

// --- exports -----------------------------------------------------------------

namespace {

const char* agent_color(std::size_t i) {
  static constexpr const char* kColors[] = {"#d62728", "#2ca02c", "#1f77b4", "#c20cc2",
                                            "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};
  return kColors[i % (sizeof kColors / sizeof kColors[0])];
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct Panel {
  double x0, y0, w, h;        // pixel box
  double xmin, xmax, ymin, ymax;  // data range
  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void draw_frame(std::ostringstream& s, const Panel& p, const std::string& title,
                const std::string& ylabel, const std::string& ymin_label, const std::string& ymax_label) {
  s << "<rect x=\"" << num(p.x0) << "\" y=\"" << num(p.y0) << "\" width=\"" << num(p.w)
    << "\" height=\"" << num(p.h) << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  s << "<text x=\"" << num(p.x0) << "\" y=\"" << num(p.y0 - 6) << "\" font-size=\"12\">" << title
    << "</text>\n";
  s << "<text x=\"" << num(p.x0 - 4) << "\" y=\"" << num(p.y0 + 10)
    << "\" font-size=\"10\" text-anchor=\"end\">" << ymax_label << "</text>\n";
  s << "<text x=\"" << num(p.x0 - 4) << "\" y=\"" << num(p.y0 + p.h)
    << "\" font-size=\"10\" text-anchor=\"end\">" << ymin_label << "</text>\n";
  s << "<text x=\"" << num(p.x0 + p.w) << "\" y=\"" << num(p.y0 + p.h + 14)
    << "\" font-size=\"10\" text-anchor=\"end\">" << ylabel << "</text>\n";
}

}  // namespace

std::string render_svg(const RecordHeader& header, const std::vector<EpisodeRecord>& records) {
  std::int64_t max_len = 1;
  for (const auto& r : records) {
    if (r.trajectory.size() > 1) {
      max_len = std::max(max_len, r.trajectory.back().tick - r.trajectory.front().tick);
    }
  }
  const double he = header.half_extent;
  const Panel arena{40, 30, 440, 440, -he, he, -he, he};
  const Panel vel{540, 30, 420, 190, 0.0, static_cast<double>(max_len), 0.0, Action::kMaxLinear};
  const Panel ang{540, 280, 420, 190, 0.0, static_cast<double>(max_len), -Action::kMaxAngular,
                  Action::kMaxAngular};

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"510\" "
       "font-family=\"sans-serif\">\n";
  s << "<rect width=\"1000\" height=\"510\" fill=\"white\"/>\n";
  draw_frame(s, arena, "trajectories (" + std::string(to_string(header.experiment)) + ")", "x [m]",
             num(-he), num(he));
  draw_frame(s, vel, "linear velocity v [m/tick]", "tick", "0", num(Action::kMaxLinear));
  draw_frame(s, ang, "angular velocity omega [rad/s]", "tick", num(-Action::kMaxAngular),
             num(Action::kMaxAngular));

  for (std::size_t g = 0; g < header.goals.size(); ++g) {
    const Vec2 goal = header.goals[g];
    const double r = header.goal_radius / (2.0 * he) * arena.w;
    s << "<circle cx=\"" << num(arena.px(goal.x)) << "\" cy=\"" << num(arena.py(goal.z)) << "\" r=\""
      << num(r) << "\" fill=\"none\" stroke=\"" << agent_color(g)
      << "\" stroke-dasharray=\"4 3\"/>\n";
    s << "<rect x=\"" << num(arena.px(goal.x) - 4) << "\" y=\"" << num(arena.py(goal.z) - 4)
      << "\" width=\"8\" height=\"8\" fill=\"" << agent_color(g) << "\"/>\n";
  }

  for (const auto& r : records) {
    if (r.trajectory.empty()) continue;
    const char* color = agent_color(r.agent_id);
    const std::int64_t t0 = r.trajectory.front().tick;
    s << "<polyline class=\"trajectory\" data-agent=\"" << r.agent_id << "\" data-episode=\""
      << r.episode_index << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : r.trajectory) s << num(arena.px(p.pose.px)) << ',' << num(arena.py(p.pose.pz)) << ' ';
    s << "\"/>\n";
    const auto& start = r.trajectory.front().pose;
    s << "<circle cx=\"" << num(arena.px(start.px)) << "\" cy=\"" << num(arena.py(start.pz))
      << "\" r=\"4\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    // velocity panels skip the spawn sample, which carries no command
    s << "<polyline class=\"velocity\" fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t k = 1; k < r.trajectory.size(); ++k) {
      const auto& p = r.trajectory[k];
      s << num(vel.px(static_cast<double>(p.tick - t0))) << ',' << num(vel.py(p.action.v())) << ' ';
    }
    s << "\"/>\n";
    s << "<polyline class=\"angular\" fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t k = 1; k < r.trajectory.size(); ++k) {
      const auto& p = r.trajectory[k];
      s << num(ang.px(static_cast<double>(p.tick - t0))) << ',' << num(ang.py(p.action.omega())) << ' ';
    }
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void export_trajectories(const std::vector<EpisodeRecord>& records, const RecordHeader& header,
                         const std::filesystem::path& out_dir) {
  if (records.empty()) throw std::invalid_argument("export_trajectories: no records");
  std::filesystem::create_directories(out_dir);
  std::map<std::size_t, std::ofstream> files;
  for (const auto& r : records) {
    if (r.trajectory.empty()) continue;
    auto it = files.find(r.agent_id);
    if (it == files.end()) {
      const auto path = out_dir / ("trajectory_agent" + std::to_string(r.agent_id) + ".csv");
      std::ofstream f(path);
      if (!f) throw std::runtime_error("export_trajectories: cannot write " + path.string());
      f << "episode,tick,px,pz,theta,v,omega\n";
      it = files.emplace(r.agent_id, std::move(f)).first;
    }
    std::ofstream& f = it->second;
    char buf[200];
    for (const auto& p : r.trajectory) {
      std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long long>(r.episode_index), static_cast<long long>(p.tick), p.pose.px,
                    p.pose.pz, p.pose.theta, p.action.v(), p.action.omega());
      f << buf;
    }
    if (!f) throw std::runtime_error("export_trajectories: write failed");
  }
  const auto svg_path = out_dir / "trajectories.svg";
  std::ofstream svg(svg_path);
  if (!svg) throw std::runtime_error("export_trajectories: cannot write " + svg_path.string());
  svg << render_svg(header, records);
  if (!svg) throw std::runtime_error("export_trajectories: write failed");
}

LatencyStats measure_latency(const Checkpoint& checkpoint, Experiment experiment,
                             std::size_t n_trials, std::uint64_t seed) {
  if (n_trials < 1000) throw std::invalid_argument("measure_latency: needs at least 1000 trials");
  check_compatible(checkpoint, experiment);
  EvalOptions opts;
  opts.seed = seed;
  World world(world_for(checkpoint, experiment, opts));
  Rng rng = make_stream(seed, "policy");
  const std::size_t n = world.size();
  std::vector<double> micros;
  micros.reserve(n_trials);
  std::vector<Action> actions(n);
  using clock = std::chrono::steady_clock;
  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::size_t agent = t % n;
    const auto start = clock::now();
    const Observation obs = world.build_observation(agent);
    const DistributionSample s = sample_action(checkpoint.policy_for(agent), obs, rng);
    const auto stop = clock::now();
    micros.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
    actions[agent] = s.action;
    if (agent + 1 == n) {
      const auto results = world.step(actions);
      for (std::size_t i = 0; i < n; ++i)
        if (results[i].terminal) world.respawn_if_terminal(i);
    }
  }
  LatencyStats stats;
  stats.trials = n_trials;
  double sum = 0.0;
  for (double m : micros) sum += m;
  stats.mean_us = sum / static_cast<double>(n_trials);
  std::sort(micros.begin(), micros.end());
  stats.median_us = n_trials % 2 ? micros[n_trials / 2]
                                 : 0.5 * (micros[n_trials / 2 - 1] + micros[n_trials / 2]);
  const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n_trials))) - 1;
  stats.p99_us = micros[std::min(idx, n_trials - 1)];
  return stats;
}

}  // namespace marl
