#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "marl/config.hpp"

using namespace marl;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(Presets, TableOneColumns) {
  for (const std::string& name : preset_names()) {
    const RunConfig c = run_config_from_json(json{{"preset", name}});
    EXPECT_EQ(c.name, name);
    EXPECT_EQ(c.ppo.batch_size, 1024);
    EXPECT_EQ(c.ppo.buffer_size, 10240);
    EXPECT_EQ(c.ppo.epochs, 3);
    EXPECT_DOUBLE_EQ(c.ppo.learning_rate, 3e-4);
    EXPECT_TRUE(c.ppo.linear_lr_schedule);
    EXPECT_DOUBLE_EQ(c.ppo.entropy_beta, 0.05);
    EXPECT_DOUBLE_EQ(c.ppo.clip_epsilon, 0.2);
    EXPECT_DOUBLE_EQ(c.ppo.gae_lambda, 0.97);
    EXPECT_DOUBLE_EQ(c.ppo.gamma, 0.99);
    EXPECT_EQ(c.hidden_units, 128);
    EXPECT_EQ(c.n_agents, 4u);
    // Shared training settings beyond the table.
    EXPECT_DOUBLE_EQ(c.action_clip, 3.0);
    EXPECT_TRUE(c.separate_value);
    EXPECT_DOUBLE_EQ(c.log_std_init, -1.0);
    EXPECT_TRUE(c.ppo.linear_beta_schedule);
    EXPECT_TRUE(c.ppo.entropy_mean_over_dims);
  }
  const RunConfig g = run_config_from_json(json{{"preset", "g2gca_cp"}});
  EXPECT_EQ(g.hidden_layers, 2);
  EXPECT_EQ(g.ppo.max_steps, 2'500'000);
  EXPECT_EQ(g.mode, TrainingMode::CommonPolicy);
  EXPECT_EQ(g.experiment, Experiment::G2GCA);
  const RunConfig ri = run_config_from_json(json{{"preset", "g2gcari_cp"}});
  EXPECT_EQ(ri.hidden_layers, 3);
  EXPECT_EQ(ri.ppo.max_steps, 5'000'000);
  EXPECT_EQ(ri.experiment, Experiment::G2GCARI);
  const RunConfig ip = run_config_from_json(json{{"preset", "g2gca_ip"}});
  EXPECT_EQ(ip.mode, TrainingMode::IndividualPolicy);
  EXPECT_EQ(run_config_from_json(json{{"preset", "ape_cp"}}).experiment, Experiment::APE);
  for (const std::string& name : preset_names())
    EXPECT_EQ(hidden_layers_for(run_config_from_json(json{{"preset", name}}).experiment),
              run_config_from_json(json{{"preset", name}}).hidden_layers);
}

TEST(Presets, OverridesMergeDeeply) {
  const RunConfig c = run_config_from_json(
      json{{"preset", "g2gcari_cp"}, {"seed", 5}, {"ppo", {{"epochs", 4}}}, {"world", {{"reward", {{"goal", 10.0}}}}}});
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.ppo.epochs, 4);
  EXPECT_EQ(c.ppo.max_steps, 5'000'000);  // preset value kept
  EXPECT_EQ(c.hidden_layers, 3);
  EXPECT_DOUBLE_EQ(c.reward.goal_reward, 10.0);
  EXPECT_DOUBLE_EQ(c.reward.collision_reward, -20.0);
}

TEST(Config, EchoRoundTrip) {
  const RunConfig a = run_config_from_json(json{{"preset", "ape_cp"}, {"seed", 11}});
  const RunConfig b = run_config_from_json(to_json(a));
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(b.seed, 11u);
  EXPECT_EQ(b.experiment, Experiment::APE);
}

TEST(Config, RejectsInvalidDocuments) {
  EXPECT_THROW(run_config_from_json(json::array()), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"ppo", {{"bogus", 1}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"preset", "nope"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"experiment", "maze"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"mode", "xx"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"seed", "one"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"ppo", {{"buffer_size", 1000}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"ppo", {{"gamma", 1.5}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"network", {{"log_std_init", 3.0}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"ppo", {{"lr_schedule", "cosine"}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"world", {{"n_agents", 1}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"world", {{"reward", {{"goal", -1.0}}}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"network", {{"action_clip", 0.0}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"network", {{"activation", "gelu"}}}}), ConfigError);
}

TEST(Config, LoadFromFile) {
  const fs::path dir = fs::path(MARL_TEST_TMP) / "config";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "c.json");
    f << "{\n  // comments are allowed\n  \"preset\": \"g2gca_ip\", \"seed\": 3\n}\n";
  }
  const RunConfig c = load_run_config(dir / "c.json");
  EXPECT_EQ(c.mode, TrainingMode::IndividualPolicy);
  EXPECT_EQ(c.seed, 3u);
  {
    std::ofstream f(dir / "bad.json");
    f << "{ \"preset\": ";
  }
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"g2gca_cp", "g2gca_ip", "ape_cp", "g2gcari_cp"}) {
    const fs::path p = fs::path(MARL_SOURCE_DIR) / "configs" / (std::string(name) + ".json");
    const RunConfig c = load_run_config(p);
    EXPECT_EQ(c.name, name);
  }
}

TEST(Config, OutputRootFromEnvironment) {
  ::setenv("MARL_OUTPUT_ROOT", "/tmp/somewhere", 1);
  EXPECT_EQ(resolve_output_dir("run1"), fs::path("/tmp/somewhere/run1"));
  EXPECT_EQ(resolve_output_dir("/abs/run"), fs::path("/abs/run"));
  ::unsetenv("MARL_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir("run1"), fs::path("runs/run1"));
}

TEST(Config, TrainOptionsMirrorConfig) {
  RunConfig c = run_config_from_json(json{{"preset", "g2gcari_cp"}, {"world", {{"min_spawn_separation", 0.6}}}});
  const TrainOptions o = c.to_train_options();
  EXPECT_EQ(o.network.hidden_layers, 3);
  EXPECT_EQ(o.network.input_dim, 10);
  EXPECT_EQ(o.world.experiment, Experiment::G2GCARI);
  EXPECT_DOUBLE_EQ(o.world.min_spawn_separation, 0.6);
  EXPECT_EQ(o.ppo.max_steps, 5'000'000);
  EXPECT_EQ(o.world.arena.goals.size(), 4u);
  EXPECT_DOUBLE_EQ(o.log_std_init, -1.0);
  c = run_config_from_json(json{{"preset", "ape_cp"}, {"network", {{"log_std_init", 0.0}}}});
  EXPECT_DOUBLE_EQ(c.to_train_options().log_std_init, 0.0);
}
