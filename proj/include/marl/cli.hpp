#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace marl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::optional<std::string> experiment;  // defaults to the checkpoint's
  std::size_t episodes = 500;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::optional<std::string> out;
  std::size_t trajectory_episodes = 1;
  std::size_t latency_trials = 0;  // 0 skips the latency measurement
};

struct ReplayArgs {
  std::filesystem::path records;
  std::filesystem::path out;
};

int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_replay(const ReplayArgs& args);
int cmd_selftest();

// Full command line: marl <train|eval|replay|selftest> [flags]
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace marl::cli
