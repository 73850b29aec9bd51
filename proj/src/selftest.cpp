#include "marl/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "marl/neural.hpp"
#include "marl/ppo.hpp"
#include "marl/rng.hpp"
#include "marl/scenario.hpp"

namespace marl::selftest {

std::vector<double> gae_bruteforce(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const std::uint8_t> terminals, double gamma,
                                   double lambda) {
  const std::size_t T = rewards.size();
  std::vector<double> adv(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t H = T - t;
    std::vector<double> nstep(H + 1, 0.0);  // nstep[n] = A_t^(n)
    for (std::size_t n = 1; n <= H; ++n) {
      double g = 0.0;
      bool alive = true;
      for (std::size_t k = 0; k < n && alive; ++k) {
        g += std::pow(gamma, static_cast<double>(k)) * rewards[t + k];
        if (terminals[t + k]) alive = false;
      }
      if (alive) g += std::pow(gamma, static_cast<double>(n)) * values[t + n];
      nstep[n] = g - values[t];
    }
    double a = 0.0;
    for (std::size_t n = 1; n < H; ++n) {
      a += (1.0 - lambda) * std::pow(lambda, static_cast<double>(n - 1)) * nstep[n];
    }
    a += std::pow(lambda, static_cast<double>(H - 1)) * nstep[H];
    adv[t] = a;
  }
  return adv;
}

double reward_oracle(Vec2 ego, Vec2 goal, std::span<const Vec2> active_peers, double half_extent,
                     double robot_radius, double wall_width, double goal_radius, double r_goal,
                     double r_collision, double k_t) {
  const double gx = goal.x - ego.x;
  const double gz = goal.z - ego.z;
  if (std::sqrt(gx * gx + gz * gz) <= goal_radius) return r_goal;
  for (const Vec2& q : active_peers) {
    const double dx = q.x - ego.x;
    const double dz = q.z - ego.z;
    if (std::sqrt(dx * dx + dz * dz) <= 2.0 * robot_radius) return r_collision;
  }
  // Wall x = +-h spans z in [-h, h]; the distance to it is the Euclidean distance
  // to the nearest point of that closed interval.
  const double h = half_extent;
  const double over_x = std::max(0.0, std::abs(ego.x) - h);
  const double over_z = std::max(0.0, std::abs(ego.z) - h);
  const double wall_d[4] = {
      std::sqrt((ego.x - h) * (ego.x - h) + over_z * over_z),
      std::sqrt((ego.x + h) * (ego.x + h) + over_z * over_z),
      std::sqrt((ego.z - h) * (ego.z - h) + over_x * over_x),
      std::sqrt((ego.z + h) * (ego.z + h) + over_x * over_x),
  };
  for (double d : wall_d) {
    if (d <= robot_radius + wall_width / 2.0) return r_collision;
  }
  return k_t * (gx * gx + gz * gz);
}

double sampled_wall_distance(Vec2 p, std::span<const Segment> walls, int samples) {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& s : walls) {
    for (int k = 0; k < samples; ++k) {
      const double t = static_cast<double>(k) / (samples - 1);
      const double x = s.a.x + t * (s.b.x - s.a.x);
      const double z = s.a.z + t * (s.b.z - s.a.z);
      best = std::min(best, std::sqrt((p.x - x) * (p.x - x) + (p.z - z) * (p.z - z)));
    }
  }
  return best;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* fmt, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, fmt, a, b, c, d);
  return buf;
}

}  // namespace

CheckResult check_loss_gradient(int hidden_layers, std::uint64_t seed, int coords,
                                bool separate_value) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "ppo loss gradient vs finite differences (" + std::to_string(hidden_layers) + "x128" +
             (separate_value ? ", separate value)" : ")");
  Rng rng = make_stream(seed, "gradcheck");
  std::normal_distribution<double> normal(0.0, 1.0);

  NetworkShape shape;
  shape.input_dim = 10;
  shape.hidden_layers = hidden_layers;
  shape.separate_value = separate_value;
  PolicyParams params = PolicyParams::initialized(shape, rng);
  // Move away from the init so the heads are not near zero.
  for (Eigen::Index k = 0; k < params.data().size(); ++k) params.data()(k) += 0.05 * normal(rng);
  params.log_std()(0) = -0.4;
  params.log_std()(1) = 0.3;

  const int batch = 64;
  Minibatch mb;
  mb.observations.resize(shape.input_dim, batch);
  for (int c = 0; c < batch; ++c)
    for (int r = 0; r < shape.input_dim; ++r) mb.observations(r, c) = 0.5 * normal(rng);
  const ForwardCache cache = forward_batch(params, mb.observations);
  const Eigen::VectorXd ls = params.effective_log_std();
  mb.actions_raw.resize(2, batch);
  mb.log_probs_old.resize(batch);
  mb.advantages.resize(batch);
  mb.returns.resize(batch);
  for (int c = 0; c < batch; ++c) {
    for (int k = 0; k < 2; ++k) mb.actions_raw(k, c) = cache.mean(k, c) + std::exp(ls(k)) * normal(rng);
    const double lp = gaussian_log_prob(mb.actions_raw.col(c), cache.mean.col(c), ls);
    // Spread ratios across the clip range but keep them off the kinks at
    // 1 +- eps, where a central difference straddles two branches.
    double ratio = 1.0;
    do {
      mb.log_probs_old(c) = lp + 0.3 * normal(rng);
      ratio = std::exp(lp - mb.log_probs_old(c));
    } while (std::abs(std::abs(ratio - 1.0) - PPOConfig{}.clip_epsilon) < 1e-3);
    mb.advantages(c) = normal(rng);
    mb.returns(c) = 2.0 * normal(rng);
  }

  PPOConfig cfg;
  Eigen::VectorXd grad;
  ppo_loss_and_gradient(mb, params, cfg, grad);

  std::vector<std::size_t> idx;
  const std::size_t n = params.size();
  for (std::size_t k = n - 2; k < n; ++k) idx.push_back(k);  // log_std
  std::uniform_int_distribution<std::size_t> pick(0, n - 3);
  std::set<std::size_t> seen(idx.begin(), idx.end());
  while (static_cast<int>(idx.size()) < coords) {
    const std::size_t k = pick(rng);
    if (seen.insert(k).second) idx.push_back(k);
  }

  // Central differences at h = 1e-5 carry ~1e-11 of roundoff, so relative
  // errors are taken against a floor of 1e-6.
  const double h = 1e-5;
  double worst = 0.0, worst_g = 0.0, worst_fd = 0.0;
  for (std::size_t k : idx) {
    PolicyParams plus = params, minus = params;
    plus.data()(static_cast<Eigen::Index>(k)) += h;
    minus.data()(static_cast<Eigen::Index>(k)) -= h;
    const double fd = (ppo_loss(mb, plus, cfg).total - ppo_loss(mb, minus, cfg).total) / (2.0 * h);
    const double g = grad(static_cast<Eigen::Index>(k));
    const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
    if (rel > worst) {
      worst = rel;
      worst_g = g;
      worst_fd = fd;
    }
  }
  res.passed = worst <= 1e-4;
  res.detail = format("max relative error %.3e over %.0f coordinates (analytic %.3e, numeric %.3e)", worst,
                      static_cast<double>(idx.size()), worst_g, worst_fd);
  res.seconds = since(t0);
  return res;
}

CheckResult check_gae_oracle(std::uint64_t seed, int episodes) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "GAE vs brute-force lambda-return expansion";
  Rng rng = make_stream(seed, "gae");
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_real_distribution<double> u(-20.0, 20.0), uv(-5.0, 5.0), unit(0.0, 1.0);
  double worst = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const int n = len(rng);
    std::vector<double> r(n), v(n + 1);
    std::vector<std::uint8_t> d(n);
    for (int k = 0; k < n; ++k) {
      r[k] = u(rng);
      v[k] = uv(rng);
      d[k] = unit(rng) < 0.25 ? 1 : 0;
    }
    v[n] = uv(rng);
    if (unit(rng) < 0.5) d[n - 1] = 1;
    const bool table = e % 2 == 0;  // half the episodes use the training gamma and lambda
    const double gamma = table ? 0.99 : unit(rng);
    const double lambda = table ? 0.97 : unit(rng);
    const GaeResult fast = compute_gae(r, v, d, gamma, lambda);
    const std::vector<double> slow = gae_bruteforce(r, v, d, gamma, lambda);
    for (int k = 0; k < n; ++k) {
      worst = std::max(worst, std::abs(fast.advantages[k] - slow[k]));
      worst = std::max(worst, std::abs(fast.returns[k] - (slow[k] + v[k])));
    }
  }
  res.passed = worst <= 1e-10;
  res.detail = format("max abs error %.3e over %.0f episodes", worst, episodes);
  res.seconds = since(t0);
  return res;
}

CheckResult check_reward_oracle(std::uint64_t seed, int states) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "reward function vs direct transcription";
  Rng rng = make_stream(seed, "reward");
  std::uniform_real_distribution<double> pos(-5.6, 5.6), unit(0.0, 1.0), near(-1.5, 1.5),
      close(-0.7, 0.7);
  const Arena arena = Arena::square(4);
  const RewardConfig cfg;
  int mismatches = 0;
  int hits[4] = {0, 0, 0, 0};
  for (int s = 0; s < states; ++s) {
    const std::size_t me = s % 4;
    std::vector<AgentState> agents(4);
    for (std::size_t i = 0; i < 4; ++i) {
      agents[i].goal = arena.goals[i];
      agents[i].pose = {pos(rng), pos(rng), 0.0};
      agents[i].status = (i == me || unit(rng) < 0.85) ? AgentStatus::Active : AgentStatus::Collided;
    }
    const double mode = unit(rng);
    if (mode < 0.3) {
      agents[me].pose.px = agents[me].goal.x + near(rng);
      agents[me].pose.pz = agents[me].goal.z + near(rng);
    } else if (mode < 0.6) {
      const std::size_t other = (me + 1 + s % 3) % 4;
      agents[other].pose.px = agents[me].pose.px + close(rng);
      agents[other].pose.pz = agents[me].pose.pz + close(rng);
    }
    std::vector<AgentState> peers;
    std::vector<Vec2> active;
    for (std::size_t i = 0; i < 4; ++i) {
      if (i == me) continue;
      peers.push_back(agents[i]);
      if (agents[i].active()) active.push_back(agents[i].pose.position());
    }
    const RewardResult got = compute_reward(agents[me], peers, arena, cfg);
    const double want = reward_oracle(agents[me].pose.position(), agents[me].goal, active,
                                      arena.half_extent, arena.robot_radius, arena.wall_width,
                                      arena.goal_radius, cfg.goal_reward, cfg.collision_reward,
                                      cfg.distance_coeff);
    const bool want_terminal = want == cfg.goal_reward || want == cfg.collision_reward;
    if (got.reward != want || got.terminal != want_terminal) ++mismatches;
    hits[static_cast<int>(got.kind)]++;
  }
  res.passed = mismatches == 0 && hits[0] > 0 && (hits[1] + hits[2]) > 0 && hits[3] > 0;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%d mismatches in %d states (goal %d, peer %d, wall %d, shaping %d)",
                mismatches, states, hits[0], hits[1], hits[2], hits[3]);
  res.detail = buf;
  res.seconds = since(t0);
  return res;
}

CheckResult check_observation_layout(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "observation length and peer ordering, N = 2..8";
  Rng rng = make_stream(seed, "layout");
  std::uniform_real_distribution<double> uv(0.0, 0.05), uw(-kPi, kPi);
  int failures = 0;
  std::size_t checked = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    WorldConfig wc;
    wc.n_agents = n;
    wc.arena = Arena::square(n);
    wc.experiment = Experiment::G2GCARI;
    wc.seed = seed + n;
    World world(wc);
    const double s = wc.observation_scale;
    for (int step = 0; step < 25; ++step) {
      for (std::size_t i = 0; i < n; ++i) {
        const Observation obs = world.build_observation(i);
        ++checked;
        if (obs.size() != 4 + 2 * (n - 1)) {
          ++failures;
          continue;
        }
        const AgentState& me = world.agent(i);
        bool ok = obs[0] == me.pose.px / s && obs[1] == me.pose.pz / s &&
                  std::abs(obs[2] - (me.goal.x - me.pose.px) / s) <= 1e-15 &&
                  std::abs(obs[3] - (me.goal.z - me.pose.pz) / s) <= 1e-15;
        std::size_t slot = 4;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const AgentState& peer = world.agent(j);
          ok = ok && std::abs(obs[slot] - (peer.pose.px - me.pose.px) / s) <= 1e-15 &&
               std::abs(obs[slot + 1] - (peer.pose.pz - me.pose.pz) / s) <= 1e-15;
          slot += 2;
        }
        if (!ok) ++failures;
      }
      std::vector<Action> actions;
      for (std::size_t i = 0; i < n; ++i) actions.emplace_back(uv(rng), uw(rng));
      const auto results = world.step(actions);
      for (std::size_t i = 0; i < n; ++i)
        if (results[i].terminal) world.respawn_if_terminal(i);
    }
  }
  res.passed = failures == 0;
  res.detail = std::to_string(failures) + " layout failures in " + std::to_string(checked) + " observations";
  res.seconds = since(t0);
  return res;
}

CheckResult check_wall_distance(std::uint64_t seed, int poses) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "wall distance vs point-sampling oracle";
  Rng rng = make_stream(seed, "walls");
  const Arena arena = Arena::square(4);
  // Legal (non-colliding) positions only.
  const double lim = arena.half_extent - arena.robot_radius - 0.5 * arena.wall_width - 1e-9;
  std::uniform_real_distribution<double> pos(-lim, lim);
  double worst = 0.0;
  for (int k = 0; k < poses; ++k) {
    const Vec2 p{pos(rng), pos(rng)};
    const double exact = min_wall_distance(p, arena);
    const double sampled = sampled_wall_distance(p, arena.walls, 10000);
    worst = std::max(worst, std::abs(exact - sampled));
  }
  res.passed = worst <= 1e-6;
  res.detail = format("max disagreement %.3e m over %.0f poses", worst, poses);
  res.seconds = since(t0);
  return res;
}

std::vector<CheckResult> run_property_suite(std::uint64_t seed) {
  return {check_loss_gradient(2, seed),       check_loss_gradient(3, seed),
          check_loss_gradient(2, seed, 100, true), check_loss_gradient(3, seed, 100, true),
          check_gae_oracle(seed),             check_reward_oracle(seed),
          check_observation_layout(seed),     check_wall_distance(seed)};
}

}  // namespace marl::selftest
