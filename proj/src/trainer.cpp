#include "marl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace marl {

std::string_view to_string(TrainingMode m) {
  return m == TrainingMode::CommonPolicy ? "cp" : "ip";
}

TrainingMode parse_training_mode(std::string_view name) {
  if (name == "cp" || name == "CP" || name == "common") return TrainingMode::CommonPolicy;
  if (name == "ip" || name == "IP" || name == "individual") return TrainingMode::IndividualPolicy;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

namespace {

std::string fmt_double(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct IntervalStats {
  double reward_sum = 0.0;
  double length_sum = 0.0;
  std::int64_t episodes = 0;
  std::int64_t successes = 0;
  std::optional<UpdateStats> last_update;
  std::int64_t next_summary = 0;
};

Checkpoint make_checkpoint(const TrainOptions& opts, const WorldConfig& wc,
                           const std::vector<PolicyLearner>& learners) {
  Checkpoint c;
  c.mode = std::string(to_string(opts.mode));
  c.experiment = std::string(to_string(wc.experiment));
  c.n_agents = wc.n_agents;
  c.observation_scale = wc.observation_scale;
  c.step = learners.front().steps;
  for (const auto& l : learners) c.policies.push_back(l.params);
  return c;
}

}  // namespace

std::string metrics_csv_header() {
  return "wall_time,step,agent_id,cumulative_reward,episode_length,entropy,policy_loss,value_loss,"
         "episodes,success_rate";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string line;
  line += fmt_double(r.sim_time) + ',';
  line += std::to_string(r.step) + ',';
  line += (r.policy ? std::to_string(*r.policy) : std::string("shared")) + ',';
  line += fmt_double(r.cumulative_reward) + ',';
  line += fmt_double(r.episode_length) + ',';
  line += fmt_double(r.entropy) + ',';
  line += (r.policy_loss ? fmt_double(*r.policy_loss) : std::string()) + ',';
  line += (r.value_loss ? fmt_double(*r.value_loss) : std::string()) + ',';
  line += std::to_string(r.episodes) + ',';
  line += fmt_double(r.success_rate);
  return line;
}

TrainResult train(const TrainOptions& opts, const std::function<void(const MetricsRow&)>& on_row) {
  const auto wall_start = std::chrono::steady_clock::now();
  const PPOConfig& ppo = opts.ppo;
  ppo.validate();
  if (opts.summary_interval <= 0) throw std::invalid_argument("train: summary_interval must be > 0");
  if (opts.checkpoint_interval < 0) throw std::invalid_argument("train: checkpoint_interval < 0");

  WorldConfig wc = opts.world;
  wc.seed = opts.seed;
  wc.record_trajectories = false;
  World world(wc);
  const std::size_t n_agents = world.size();

  NetworkShape shape = opts.network;
  shape.input_dim = static_cast<int>(wc.observation_dim());

  Rng init_rng = make_stream(opts.seed, "init");
  Rng policy_rng = make_stream(opts.seed, "policy");
  Rng shuffle_rng = make_stream(opts.seed, "shuffle");

  const bool common = opts.mode == TrainingMode::CommonPolicy;
  const std::size_t n_policies = common ? 1 : n_agents;
  std::vector<PolicyLearner> learners;
  learners.reserve(n_policies);
  for (std::size_t p = 0; p < n_policies; ++p) {
    PolicyParams params = PolicyParams::initialized(shape, init_rng);
    params.log_std().setConstant(opts.log_std_init);
    learners.emplace_back(std::move(params), ppo);
  }
  auto policy_of = [&](std::size_t agent) { return common ? std::size_t{0} : agent; };

  std::ofstream metrics_out;
  std::filesystem::path ckpt_dir;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    ckpt_dir = opts.out_dir / "checkpoints";
    if (opts.checkpoint_interval > 0) std::filesystem::create_directories(ckpt_dir);
    metrics_out.open(opts.out_dir / "metrics.csv", std::ios::trunc);
    if (!metrics_out) throw std::runtime_error("train: cannot open metrics.csv");
    metrics_out << metrics_csv_header() << '\n';
  }

  TrainResult result;
  std::vector<std::vector<Transition>> staging(n_agents);
  std::vector<IntervalStats> interval(n_policies);
  for (auto& s : interval) s.next_summary = opts.summary_interval;
  std::int64_t next_checkpoint = opts.checkpoint_interval;

  auto all_done = [&] {
    for (const auto& l : learners)
      if (l.steps < ppo.max_steps) return false;
    return true;
  };

  auto flush_segment = [&](std::size_t agent, double bootstrap) {
    PolicyLearner& l = learners[policy_of(agent)];
    l.buffer.append_segment(staging[agent], bootstrap, ppo.gamma, ppo.gae_lambda);
    staging[agent].clear();
  };

  std::vector<Observation> obs(n_agents);
  std::vector<DistributionSample> samples(n_agents);
  std::vector<Action> actions(n_agents);

  while (!all_done()) {
    for (std::size_t i = 0; i < n_agents; ++i) {
      obs[i] = world.build_observation(i);
      samples[i] = sample_action(learners[policy_of(i)].params, obs[i], policy_rng);
      actions[i] = samples[i].action;
    }
    std::vector<StepResult> step = world.step(actions);
    ++result.world_steps;

    for (std::size_t i = 0; i < n_agents; ++i) {
      const std::size_t p = policy_of(i);
      Transition t;
      t.observation = std::move(obs[i]);
      t.action_raw = std::move(samples[i].action_raw);
      t.log_prob = samples[i].log_prob;
      t.value = samples[i].value;
      t.reward = step[i].reward;
      t.terminal = step[i].terminal && !step[i].truncated;
      t.agent_id = i;
      staging[i].push_back(std::move(t));
      ++learners[p].steps;

      if (step[i].terminal) {
        // A timeout is a cut, not an environment terminal: bootstrap from v(s_T).
        const double bootstrap =
            step[i].truncated ? forward(learners[p].params, step[i].observation).value : 0.0;
        flush_segment(i, bootstrap);
        const EpisodeRecord rec = world.respawn_if_terminal(i);
        interval[p].reward_sum += rec.cumulative_reward;
        interval[p].length_sum += static_cast<double>(rec.decision_steps);
        interval[p].episodes += 1;
        interval[p].successes += rec.outcome == Outcome::Success ? 1 : 0;
      }
    }

    for (std::size_t p = 0; p < n_policies; ++p) {
      PolicyLearner& l = learners[p];
      std::size_t staged = 0;
      for (std::size_t i = 0; i < n_agents; ++i)
        if (policy_of(i) == p) staged += staging[i].size();
      if (l.buffer.size() + staged < static_cast<std::size_t>(ppo.buffer_size)) continue;
      for (std::size_t i = 0; i < n_agents; ++i) {
        if (policy_of(i) != p || staging[i].empty()) continue;
        flush_segment(i, forward(l.params, world.build_observation(i)).value);
      }
      if (opts.on_update) opts.on_update(p, l.buffer);
      interval[p].last_update = update(l, ppo, shuffle_rng);
      ++result.updates;
    }

    for (std::size_t p = 0; p < n_policies; ++p) {
      IntervalStats& s = interval[p];
      if (learners[p].steps < s.next_summary) continue;
      MetricsRow row;
      row.sim_time = static_cast<double>(world.tick()) * wc.tick_seconds;
      row.step = learners[p].steps;
      if (!common) row.policy = p;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.episodes = s.episodes;
      row.cumulative_reward = s.episodes ? s.reward_sum / s.episodes : nan;
      row.episode_length = s.episodes ? s.length_sum / s.episodes : nan;
      row.success_rate = s.episodes ? static_cast<double>(s.successes) / s.episodes : nan;
      row.entropy = gaussian_entropy(learners[p].params.effective_log_std());
      if (s.last_update) {
        row.policy_loss = s.last_update->policy_loss;
        row.value_loss = s.last_update->value_loss;
      }
      while (s.next_summary <= learners[p].steps) s.next_summary += opts.summary_interval;
      s.reward_sum = s.length_sum = 0.0;
      s.episodes = s.successes = 0;
      result.metrics.push_back(row);
      if (metrics_out.is_open()) {
        metrics_out << metrics_csv_line(row) << '\n';
        metrics_out.flush();
      }
      if (on_row) on_row(row);
    }

    if (opts.checkpoint_interval > 0 && !ckpt_dir.empty() && learners.front().steps >= next_checkpoint) {
      save_checkpoint(ckpt_dir / ("step-" + std::to_string(learners.front().steps) + ".json"),
                      make_checkpoint(opts, wc, learners));
      while (next_checkpoint <= learners.front().steps) next_checkpoint += opts.checkpoint_interval;
    }
  }

  result.checkpoint = make_checkpoint(opts, wc, learners);
  for (const auto& l : learners) result.policy_steps.push_back(l.steps);
  if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "policy.json", result.checkpoint);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

}  // namespace marl
