#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "marl/trainer.hpp"

using namespace marl;
namespace fs = std::filesystem;

namespace {

TrainOptions small_options(TrainingMode mode, std::int64_t max_steps = 10'000) {
  TrainOptions o;
  o.mode = mode;
  o.seed = 7;
  o.ppo.batch_size = 256;
  o.ppo.buffer_size = 1024;
  o.ppo.max_steps = max_steps;
  o.summary_interval = 1000;
  o.checkpoint_interval = 0;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tmp_dir(const std::string& name) {
  const fs::path d = fs::path(MARL_TEST_TMP) / "trainer" / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Train, CommonPolicyPoolsEveryAgent) {
  TrainOptions o = small_options(TrainingMode::CommonPolicy);
  std::set<std::size_t> policies, agents;
  o.on_update = [&](std::size_t p, const RolloutBuffer& buf) {
    policies.insert(p);
    agents.insert(buf.agent_ids().begin(), buf.agent_ids().end());
  };
  const TrainResult r = train(o);
  EXPECT_EQ(r.checkpoint.policies.size(), 1u);
  EXPECT_EQ(r.checkpoint.mode, "cp");
  EXPECT_EQ(policies, (std::set<std::size_t>{0}));
  EXPECT_EQ(agents, (std::set<std::size_t>{0, 1, 2, 3}));
  ASSERT_EQ(r.policy_steps.size(), 1u);
  // Pooled step count: four decision steps per world step.
  EXPECT_EQ(r.policy_steps[0], 4 * r.world_steps);
  EXPECT_GE(r.policy_steps[0], 10'000);
  EXPECT_LT(r.policy_steps[0], 10'004);
  for (const auto& row : r.metrics) EXPECT_FALSE(row.policy.has_value());
}

TEST(Train, IndividualPoliciesHaveDisjointBuffers) {
  TrainOptions o = small_options(TrainingMode::IndividualPolicy, 3000);
  std::vector<int> updates(4, 0);
  bool leaked = false;
  o.on_update = [&](std::size_t p, const RolloutBuffer& buf) {
    ++updates.at(p);
    for (std::size_t a : buf.agent_ids()) leaked = leaked || a != p;
  };
  const TrainResult r = train(o);
  EXPECT_FALSE(leaked);
  for (int u : updates) EXPECT_GE(u, 2);
  EXPECT_EQ(r.checkpoint.policies.size(), 4u);
  EXPECT_EQ(r.checkpoint.mode, "ip");
  for (std::int64_t s : r.policy_steps) EXPECT_EQ(s, r.world_steps);
  // Policies start from different initializations and never share updates.
  EXPECT_FALSE(r.checkpoint.policies[0] == r.checkpoint.policies[1]);
  std::set<std::size_t> row_policies;
  for (const auto& row : r.metrics) row_policies.insert(row.policy.value());
  EXPECT_EQ(row_policies.size(), 4u);
}

TEST(Train, TerminalFlagsOnlyOnGoalOrCollision) {
  TrainOptions o = small_options(TrainingMode::CommonPolicy, 5000);
  // Random spawns and headings give early collisions; the short cap adds
  // many timeouts, which must not carry a terminal flag.
  o.world.experiment = Experiment::G2GCARI;
  o.world.max_decision_steps = 8;
  std::int64_t terminals = 0;
  bool ok = true;
  o.on_update = [&](std::size_t, const RolloutBuffer& buf) {
    for (std::size_t k = 0; k < buf.size(); ++k) {
      if (!buf.terminals()[k]) continue;
      ++terminals;
      const double r = buf.rewards()[k];
      ok = ok && (r == 20.0 || r == -20.0);
    }
  };
  train(o);
  EXPECT_TRUE(ok);
  EXPECT_GT(terminals, 0);
}

TEST(Train, LogStdInitSetsStartingEntropy) {
  TrainOptions o = small_options(TrainingMode::IndividualPolicy);
  o.log_std_init = -1.0;
  o.ppo.max_steps = o.summary_interval;
  const TrainResult r = train(o);
  ASSERT_FALSE(r.metrics.empty());
  // Summed over two dimensions: 2 * (0.5 ln(2 pi e) + log_std).
  EXPECT_NEAR(r.metrics.front().entropy, std::log(2 * kPi * std::exp(1.0)) - 2.0, 1e-12);
  for (const auto& p : r.checkpoint.policies) EXPECT_EQ(p.log_std()(0), -1.0);
}

TEST(Train, SmokeRunWritesArtifacts) {
  TrainOptions o = small_options(TrainingMode::CommonPolicy);
  o.checkpoint_interval = 4000;
  o.out_dir = tmp_dir("smoke");
  std::vector<MetricsRow> seen;
  const TrainResult r = train(o, [&](const MetricsRow& row) { seen.push_back(row); });
  ASSERT_FALSE(r.metrics.empty());
  EXPECT_EQ(seen.size(), r.metrics.size());
  for (const auto& row : r.metrics) {
    EXPECT_TRUE(std::isfinite(row.entropy));
    EXPECT_GT(row.sim_time, 0.0);
  }
  EXPECT_NEAR(r.metrics.front().entropy, std::log(2 * kPi * std::exp(1.0)), 1e-12);
  EXPECT_TRUE(fs::exists(o.out_dir / "policy.json"));
  EXPECT_TRUE(fs::exists(o.out_dir / "checkpoints" / "step-4000.json"));
  EXPECT_TRUE(fs::exists(o.out_dir / "checkpoints" / "step-8000.json"));
  const std::string csv = slurp(o.out_dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), metrics_csv_header());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(r.metrics.size() + 1));
  const Checkpoint ck = load_checkpoint(o.out_dir / "policy.json");
  EXPECT_TRUE(ck.policies[0] == r.checkpoint.policies[0]);
}

TEST(Train, SameSeedGivesIdenticalMetrics) {
  TrainOptions a = small_options(TrainingMode::CommonPolicy);
  a.out_dir = tmp_dir("det_a");
  TrainOptions b = a;
  b.out_dir = tmp_dir("det_b");
  const TrainResult ra = train(a);
  const TrainResult rb = train(b);
  EXPECT_EQ(slurp(a.out_dir / "metrics.csv"), slurp(b.out_dir / "metrics.csv"));
  EXPECT_TRUE(ra.checkpoint.policies[0] == rb.checkpoint.policies[0]);
  TrainOptions c = a;
  c.seed = 8;
  c.out_dir = tmp_dir("det_c");
  train(c);
  EXPECT_NE(slurp(a.out_dir / "metrics.csv"), slurp(c.out_dir / "metrics.csv"));
}

TEST(Train, RejectsBadOptions) {
  TrainOptions o = small_options(TrainingMode::CommonPolicy);
  o.ppo.buffer_size = 1000;
  EXPECT_THROW(train(o), std::invalid_argument);
  TrainOptions p = small_options(TrainingMode::CommonPolicy);
  p.summary_interval = 0;
  EXPECT_THROW(train(p), std::invalid_argument);
}

TEST(Metrics, CsvLineFormatting) {
  MetricsRow row;
  row.sim_time = 1.5;
  row.step = 10;
  row.policy = 2;
  row.cumulative_reward = std::nan("");
  row.episode_length = 3;
  row.entropy = 2.5;
  row.episodes = 0;
  row.success_rate = 0.25;
  EXPECT_EQ(metrics_csv_line(row), "1.5,10,2,,3,2.5,,,0,0.25");
  EXPECT_EQ(parse_training_mode("IP"), TrainingMode::IndividualPolicy);
  EXPECT_EQ(to_string(TrainingMode::CommonPolicy), "cp");
  EXPECT_THROW(parse_training_mode("xx"), std::invalid_argument);
}
