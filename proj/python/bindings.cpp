#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "marl/cli.hpp"
#include "marl/config.hpp"
#include "marl/eval.hpp"
#include "marl/selftest.hpp"

namespace py = pybind11;
using namespace marl;

namespace {

py::dict step_to_dict(const StepResult& r) {
  py::dict d;
  d["observation"] = r.observation;
  d["reward"] = r.reward;
  d["terminal"] = r.terminal;
  d["truncated"] = r.truncated;
  d["outcome"] = r.outcome ? py::cast(std::string(to_string(*r.outcome))) : py::none();
  return d;
}

py::dict record_to_dict(const EpisodeRecord& r) {
  py::dict d;
  d["agent_id"] = r.agent_id;
  d["episode_index"] = r.episode_index;
  d["outcome"] = std::string(to_string(r.outcome));
  d["decision_steps"] = r.decision_steps;
  d["cumulative_reward"] = r.cumulative_reward;
  return d;
}

WorldConfig make_world_config(std::size_t n_agents, const std::string& experiment,
                              std::uint64_t seed, std::int64_t max_decision_steps) {
  WorldConfig wc;
  wc.n_agents = n_agents;
  wc.arena = Arena::square(n_agents);
  wc.experiment = parse_experiment(experiment);
  wc.seed = seed;
  wc.max_decision_steps = max_decision_steps;
  return wc;
}

}  // namespace

PYBIND11_MODULE(_marl_nav, m) {
  m.doc() = "Multi-robot navigation simulator, PPO trainer and evaluator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<World>(m, "World")
      .def(py::init([](std::size_t n_agents, const std::string& experiment, std::uint64_t seed,
                       std::int64_t max_decision_steps) {
             return World(make_world_config(n_agents, experiment, seed, max_decision_steps));
           }),
           py::arg("n_agents") = 4, py::arg("experiment") = "g2gca", py::arg("seed") = 0,
           py::arg("max_decision_steps") = 1000)
      .def_property_readonly("size", &World::size)
      .def_property_readonly("tick", &World::tick)
      .def("observation", &World::build_observation, py::arg("agent"))
      .def("pose",
           [](const World& w, std::size_t i) {
             const Pose& p = w.agent(i).pose;
             return py::make_tuple(p.px, p.pz, p.theta);
           })
      .def("goal",
           [](const World& w, std::size_t i) {
             const Vec2 g = w.agent(i).goal;
             return py::make_tuple(g.x, g.z);
           })
      .def("active", [](const World& w, std::size_t i) { return w.agent(i).active(); })
      .def(
          "step",
          [](World& w, const std::vector<std::optional<std::pair<double, double>>>& actions) {
            std::vector<std::optional<Action>> acts;
            for (const auto& a : actions) {
              acts.push_back(a ? std::optional<Action>(Action(a->first, a->second)) : std::nullopt);
            }
            py::list out;
            for (const StepResult& r : w.step(acts)) out.append(step_to_dict(r));
            return out;
          },
          py::arg("actions"), "One (v, omega) pair per active agent, None for inactive ones.")
      .def("respawn", [](World& w, std::size_t i) { return record_to_dict(w.respawn_if_terminal(i)); });

  m.def("step_kinematics",
        [](double px, double pz, double theta, double v, double omega, double dt) {
          const Pose p = step_kinematics(Pose{px, pz, theta}, Action(v, omega), dt);
          return py::make_tuple(p.px, p.pz, p.theta);
        },
        py::arg("px"), py::arg("pz"), py::arg("theta"), py::arg("v"), py::arg("omega"),
        py::arg("dt") = 0.02);

  m.def("preset_json", [](const std::string& name) { return preset_json(name).dump(); });
  m.def("preset_names", &preset_names);

  m.def(
      "train_json",
      [](const std::string& config_json, const std::string& out_dir) {
        RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        TrainOptions opts = cfg.to_train_options();
        if (!out_dir.empty()) opts.out_dir = out_dir;
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(opts);
        }
        py::dict d;
        d["policy_steps"] = res.policy_steps;
        d["updates"] = res.updates;
        d["world_steps"] = res.world_steps;
        d["wall_seconds"] = res.wall_seconds;
        d["checkpoint"] = checkpoint_to_string(res.checkpoint);
        return d;
      },
      py::arg("config_json"), py::arg("out_dir") = "");

  m.def(
      "evaluate_json",
      [](const std::string& checkpoint_path, const std::optional<std::string>& experiment,
         std::size_t episodes, std::uint64_t seed, bool deterministic) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        EvalOptions opts;
        opts.n_episodes = episodes;
        opts.seed = seed;
        opts.deterministic = deterministic;
        py::gil_scoped_release release;
        return report_to_json(evaluate(ckpt, parse_experiment(experiment.value_or(ckpt.experiment)), opts));
      },
      py::arg("checkpoint"), py::arg("experiment") = py::none(), py::arg("episodes") = 500,
      py::arg("seed") = 0, py::arg("deterministic") = false);

  m.def("selftest", [](std::uint64_t seed) {
    py::list out;
    for (const auto& r : selftest::run_property_suite(seed)) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  }, py::arg("seed") = 1);

  m.def("cli", [](const std::vector<std::string>& args) { return cli::run(args); }, py::arg("args"));
}
