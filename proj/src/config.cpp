#include "marl/config.hpp"

#include <cstdlib>
#include <fstream>

namespace marl {

using nlohmann::json;

int hidden_layers_for(Experiment e) { return e == Experiment::G2GCARI ? 3 : 2; }

namespace {

json base_config() {
  return {
      {"name", "base"},
      {"experiment", "g2gca"},
      {"mode", "cp"},
      {"seed", 1},
      {"output_dir", ""},
      {"summary_interval", 10000},
      {"checkpoint_interval", 500000},
      {"world",
       {{"n_agents", 4},
        {"max_decision_steps", 1000},
        {"observation_scale", 5.0},
        {"min_spawn_separation", 0.0},
        {"reward", {{"goal", 20.0}, {"collision", -20.0}, {"distance_coeff", -0.01}}}}},
      {"network", {{"hidden_layers", 2}, {"hidden_units", 128}, {"activation", "tanh"}, {"action_clip", 1.0}, {"separate_value", false}, {"log_std_init", 0.0}}},
      {"ppo",
       {{"batch_size", 1024},
        {"buffer_size", 10240},
        {"epochs", 3},
        {"learning_rate", 3e-4},
        {"lr_schedule", "linear"},
        {"entropy_beta", 0.05},
        {"beta_schedule", "constant"},
        {"entropy_reduction", "sum"},
        {"clip_epsilon", 0.2},
        {"gae_lambda", 0.97},
        {"gamma", 0.99},
        {"max_steps", 2500000},
        {"value_coef", 0.5},
        {"max_grad_norm", 0.5},
        {"normalize_advantages", true}}},
  };
}

// Each preset is a patch over its parent. The experiment presets inherit from
// "toolkit", which carries the training-stack settings the experiments need on
// top of the plain defaults: raw actions clipped at 3, a separate value stack,
// and an entropy bonus on the per-dimension mean that decays with the lr.
json preset_patch(const std::string& name, std::string& parent) {
  parent.clear();
  if (name == "base") return json::object();
  if (name == "toolkit") {
    parent = "base";
    return {{"network", {{"action_clip", 3.0}, {"separate_value", true}, {"log_std_init", -1.0}}},
            {"ppo", {{"beta_schedule", "linear"}, {"entropy_reduction", "mean"}}}};
  }
  parent = "toolkit";
  if (name == "g2gca_cp") return {{"name", "g2gca_cp"}, {"experiment", "g2gca"}, {"mode", "cp"}};
  if (name == "g2gca_ip") return {{"name", "g2gca_ip"}, {"experiment", "g2gca"}, {"mode", "ip"}};
  if (name == "ape_cp") return {{"name", "ape_cp"}, {"experiment", "ape"}, {"mode", "cp"}};
  if (name == "g2gcari_cp") {
    return {{"name", "g2gcari_cp"},
            {"experiment", "g2gcari"},
            {"mode", "cp"},
            {"network", {{"hidden_layers", 3}}},
            {"ppo", {{"max_steps", 5000000}}}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

void check_keys(const json& doc, const json& schema, const std::string& where) {
  if (!doc.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == "preset" && where.empty()) continue;
    if (!schema.contains(it.key())) {
      throw ConfigError("config: unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
    if (schema[it.key()].is_object()) check_keys(it.value(), schema[it.key()], where.empty() ? it.key() : where + "." + it.key());
  }
}

json resolve(const json& doc, int depth = 0) {
  if (depth > 8) throw ConfigError("config: preset chain too deep");
  json resolved = base_config();
  if (doc.contains("preset")) {
    const std::string name = doc["preset"].get<std::string>();
    std::vector<json> chain;
    std::string cur = name, parent;
    while (!cur.empty()) {
      chain.push_back(preset_patch(cur, parent));
      cur = parent;
      if (chain.size() > 8) throw ConfigError("config: preset chain too deep");
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) resolved.merge_patch(*it);
  }
  json own = doc;
  own.erase("preset");
  resolved.merge_patch(own);
  return resolved;
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + key + "' has the wrong type");
  }
}

}  // namespace

std::vector<std::string> preset_names() { return {"g2gca_ip", "g2gca_cp", "ape_cp", "g2gcari_cp"}; }

json preset_json(const std::string& name) { return resolve(json{{"preset", name}}); }

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(doc, base_config(), "");
  const json j = resolve(doc);
  RunConfig c;
  try {
    c.name = get<std::string>(j, "name", "");
    c.experiment = parse_experiment(get<std::string>(j, "experiment", ""));
    c.mode = parse_training_mode(get<std::string>(j, "mode", ""));
    c.seed = get<std::uint64_t>(j, "seed", "");
    c.output_dir = get<std::string>(j, "output_dir", "");
    c.summary_interval = get<std::int64_t>(j, "summary_interval", "");
    c.checkpoint_interval = get<std::int64_t>(j, "checkpoint_interval", "");

    const json& w = j.at("world");
    c.n_agents = get<std::size_t>(w, "n_agents", "world.");
    c.max_decision_steps = get<std::int64_t>(w, "max_decision_steps", "world.");
    c.observation_scale = get<double>(w, "observation_scale", "world.");
    c.min_spawn_separation = get<double>(w, "min_spawn_separation", "world.");
    const json& r = w.at("reward");
    c.reward.goal_reward = get<double>(r, "goal", "world.reward.");
    c.reward.collision_reward = get<double>(r, "collision", "world.reward.");
    c.reward.distance_coeff = get<double>(r, "distance_coeff", "world.reward.");

    const json& n = j.at("network");
    c.hidden_layers = get<int>(n, "hidden_layers", "network.");
    c.hidden_units = get<int>(n, "hidden_units", "network.");
    c.activation = parse_activation(get<std::string>(n, "activation", "network."));
    c.action_clip = get<double>(n, "action_clip", "network.");
    c.separate_value = get<bool>(n, "separate_value", "network.");
    c.log_std_init = get<double>(n, "log_std_init", "network.");

    const json& p = j.at("ppo");
    c.ppo.batch_size = get<int>(p, "batch_size", "ppo.");
    c.ppo.buffer_size = get<int>(p, "buffer_size", "ppo.");
    c.ppo.epochs = get<int>(p, "epochs", "ppo.");
    c.ppo.learning_rate = get<double>(p, "learning_rate", "ppo.");
    const auto schedule = get<std::string>(p, "lr_schedule", "ppo.");
    if (schedule != "linear" && schedule != "constant") {
      throw ConfigError("config: ppo.lr_schedule must be 'linear' or 'constant'");
    }
    c.ppo.linear_lr_schedule = schedule == "linear";
    c.ppo.entropy_beta = get<double>(p, "entropy_beta", "ppo.");
    const auto beta_schedule = get<std::string>(p, "beta_schedule", "ppo.");
    if (beta_schedule != "linear" && beta_schedule != "constant") {
      throw ConfigError("config: ppo.beta_schedule must be 'linear' or 'constant'");
    }
    c.ppo.linear_beta_schedule = beta_schedule == "linear";
    const auto reduction = get<std::string>(p, "entropy_reduction", "ppo.");
    if (reduction != "sum" && reduction != "mean") {
      throw ConfigError("config: ppo.entropy_reduction must be 'sum' or 'mean'");
    }
    c.ppo.entropy_mean_over_dims = reduction == "mean";
    c.ppo.clip_epsilon = get<double>(p, "clip_epsilon", "ppo.");
    c.ppo.gae_lambda = get<double>(p, "gae_lambda", "ppo.");
    c.ppo.gamma = get<double>(p, "gamma", "ppo.");
    c.ppo.max_steps = get<std::int64_t>(p, "max_steps", "ppo.");
    c.ppo.value_coef = get<double>(p, "value_coef", "ppo.");
    c.ppo.max_grad_norm = get<double>(p, "max_grad_norm", "ppo.");
    c.ppo.normalize_advantages = get<bool>(p, "normalize_advantages", "ppo.");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  try {
    to_train_options().world.validate();
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (hidden_layers < 0 || hidden_units <= 0) throw ConfigError("config: invalid network shape");
  if (!(action_clip > 0.0)) throw ConfigError("config: network.action_clip must be > 0");
  if (!(log_std_init >= kLogStdMin && log_std_init <= kLogStdMax)) {
    throw ConfigError("config: network.log_std_init outside the log_std clamp range");
  }
  if (summary_interval <= 0) throw ConfigError("config: summary_interval must be > 0");
  if (checkpoint_interval < 0) throw ConfigError("config: checkpoint_interval must be >= 0");
}

TrainOptions RunConfig::to_train_options() const {
  TrainOptions o;
  o.world.n_agents = n_agents;
  o.world.arena = Arena::square(n_agents);
  o.world.experiment = experiment;
  o.world.max_decision_steps = max_decision_steps;
  o.world.observation_scale = observation_scale;
  o.world.min_spawn_separation = min_spawn_separation;
  o.world.reward = reward;
  o.world.seed = seed;
  o.ppo = ppo;
  o.network.hidden_layers = hidden_layers;
  o.network.hidden_units = hidden_units;
  o.network.activation = activation;
  o.network.action_clip = action_clip;
  o.network.separate_value = separate_value;
  o.network.input_dim = static_cast<int>(o.world.observation_dim());
  o.log_std_init = log_std_init;
  o.mode = mode;
  o.seed = seed;
  o.summary_interval = summary_interval;
  o.checkpoint_interval = checkpoint_interval;
  return o;
}

json to_json(const RunConfig& c) {
  return {
      {"name", c.name},
      {"experiment", std::string(to_string(c.experiment))},
      {"mode", std::string(to_string(c.mode))},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"summary_interval", c.summary_interval},
      {"checkpoint_interval", c.checkpoint_interval},
      {"world",
       {{"n_agents", c.n_agents},
        {"max_decision_steps", c.max_decision_steps},
        {"observation_scale", c.observation_scale},
        {"min_spawn_separation", c.min_spawn_separation},
        {"reward",
         {{"goal", c.reward.goal_reward},
          {"collision", c.reward.collision_reward},
          {"distance_coeff", c.reward.distance_coeff}}}}},
      {"network",
       {{"hidden_layers", c.hidden_layers},
        {"hidden_units", c.hidden_units},
        {"activation", std::string(to_string(c.activation))},
        {"action_clip", c.action_clip},
        {"separate_value", c.separate_value},
        {"log_std_init", c.log_std_init}}},
      {"ppo",
       {{"batch_size", c.ppo.batch_size},
        {"buffer_size", c.ppo.buffer_size},
        {"epochs", c.ppo.epochs},
        {"learning_rate", c.ppo.learning_rate},
        {"lr_schedule", c.ppo.linear_lr_schedule ? "linear" : "constant"},
        {"entropy_beta", c.ppo.entropy_beta},
        {"beta_schedule", c.ppo.linear_beta_schedule ? "linear" : "constant"},
        {"entropy_reduction", c.ppo.entropy_mean_over_dims ? "mean" : "sum"},
        {"clip_epsilon", c.ppo.clip_epsilon},
        {"gae_lambda", c.ppo.gae_lambda},
        {"gamma", c.ppo.gamma},
        {"max_steps", c.ppo.max_steps},
        {"value_coef", c.ppo.value_coef},
        {"max_grad_norm", c.ppo.max_grad_norm},
        {"normalize_advantages", c.ppo.normalize_advantages}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  const char* root = std::getenv("MARL_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / p;
}

}  // namespace marl
