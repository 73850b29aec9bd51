#include "marl/records.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace marl {

using nlohmann::json;

namespace {

constexpr const char* kSchemaName = "marl.episodes";

json header_to_json(const RecordHeader& h) {
  json goals = json::array();
  for (const Vec2& g : h.goals) goals.push_back({g.x, g.z});
  return {{"schema", kSchemaName},
          {"version", kRecordSchemaVersion},
          {"experiment", std::string(to_string(h.experiment))},
          {"n_agents", h.n_agents},
          {"tick_seconds", h.tick_seconds},
          {"ticks_per_decision", h.ticks_per_decision},
          {"half_extent", h.half_extent},
          {"goal_radius", h.goal_radius},
          {"goals", goals}};
}

RecordHeader header_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != kSchemaName) {
    throw RecordFormatError("records: missing 'marl.episodes' header line");
  }
  const int version = j.at("version").get<int>();
  if (version != kRecordSchemaVersion) {
    throw RecordFormatError("records: schema version mismatch (file has " +
                            std::to_string(version) + ", expected " +
                            std::to_string(kRecordSchemaVersion) + ")");
  }
  RecordHeader h;
  h.experiment = parse_experiment(j.at("experiment").get<std::string>());
  h.n_agents = j.at("n_agents").get<std::size_t>();
  h.tick_seconds = j.at("tick_seconds").get<double>();
  h.ticks_per_decision = j.at("ticks_per_decision").get<int>();
  h.half_extent = j.at("half_extent").get<double>();
  h.goal_radius = j.at("goal_radius").get<double>();
  for (const auto& g : j.at("goals")) h.goals.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
  return h;
}

}  // namespace

RecordHeader make_record_header(const WorldConfig& cfg) {
  RecordHeader h;
  h.experiment = cfg.experiment;
  h.n_agents = cfg.n_agents;
  h.tick_seconds = cfg.tick_seconds;
  h.ticks_per_decision = cfg.ticks_per_decision;
  h.half_extent = cfg.arena.half_extent;
  h.goal_radius = cfg.arena.goal_radius;
  h.goals = cfg.arena.goals;
  return h;
}

std::string record_to_json_line(const EpisodeRecord& rec) {
  json tick = json::array(), px = json::array(), pz = json::array(), theta = json::array(),
       v = json::array(), omega = json::array();
  for (const auto& p : rec.trajectory) {
    tick.push_back(p.tick);
    px.push_back(p.pose.px);
    pz.push_back(p.pose.pz);
    theta.push_back(p.pose.theta);
    v.push_back(p.action.v());
    omega.push_back(p.action.omega());
  }
  json j = {{"agent_id", rec.agent_id},
            {"episode", rec.episode_index},
            {"outcome", std::string(to_string(rec.outcome))},
            {"decision_steps", rec.decision_steps},
            {"cumulative_reward", rec.cumulative_reward},
            {"goal", {rec.goal.x, rec.goal.z}},
            {"trajectory",
             {{"tick", tick}, {"px", px}, {"pz", pz}, {"theta", theta}, {"v", v}, {"omega", omega}}}};
  return j.dump();
}

EpisodeRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RecordFormatError(std::string("records: malformed line: ") + e.what());
  }
  try {
    EpisodeRecord rec;
    rec.agent_id = j.at("agent_id").get<std::size_t>();
    rec.episode_index = j.at("episode").get<std::int64_t>();
    rec.outcome = parse_outcome(j.at("outcome").get<std::string>());
    rec.decision_steps = j.at("decision_steps").get<std::int64_t>();
    rec.cumulative_reward = j.at("cumulative_reward").get<double>();
    rec.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
    const json& t = j.at("trajectory");
    const auto& ticks = t.at("tick");
    const std::size_t n = ticks.size();
    for (const char* key : {"px", "pz", "theta", "v", "omega"}) {
      if (t.at(key).size() != n) throw RecordFormatError("records: ragged trajectory columns");
    }
    rec.trajectory.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      TrajectoryPoint p;
      p.tick = ticks[k].get<std::int64_t>();
      p.pose = {t["px"][k].get<double>(), t["pz"][k].get<double>(), t["theta"][k].get<double>()};
      p.action = Action(t["v"][k].get<double>(), t["omega"][k].get<double>());
      rec.trajectory.push_back(p);
    }
    return rec;
  } catch (const json::exception& e) {
    throw RecordFormatError(std::string("records: invalid record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw RecordFormatError(std::string("records: invalid record: ") + e.what());
  }
}

void write_records(std::ostream& out, const RecordHeader& header,
                   const std::vector<EpisodeRecord>& records) {
  out << header_to_json(header).dump() << '\n';
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
  // Trailer lets readers detect a file cut at a line boundary.
  out << json{{"end", kSchemaName}, {"episodes", records.size()}}.dump() << '\n';
}

void write_records(const std::filesystem::path& path, const RecordHeader& header,
                   const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("records: cannot open " + path.string() + " for writing");
  write_records(out, header, records);
  if (!out) throw std::runtime_error("records: write failed for " + path.string());
}

RecordFile read_records(std::istream& in) {
  RecordFile file;
  std::string line;
  if (!std::getline(in, line)) throw RecordFormatError("records: empty file");
  try {
    file.header = header_from_json(json::parse(line));
  } catch (const json::exception& e) {
    throw RecordFormatError(std::string("records: bad header: ") + e.what());
  }
  bool saw_trailer = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (saw_trailer) throw RecordFormatError("records: data after end marker");
    if (line.rfind("{\"end\"", 0) == 0) {
      json t;
      try {
        t = json::parse(line);
      } catch (const json::parse_error& e) {
        throw RecordFormatError(std::string("records: malformed end marker: ") + e.what());
      }
      if (t.value("episodes", std::size_t{0}) != file.records.size()) {
        throw RecordFormatError("records: episode count does not match end marker");
      }
      saw_trailer = true;
      continue;
    }
    file.records.push_back(record_from_json_line(line));
  }
  if (!saw_trailer) throw RecordFormatError("records: truncated file (no end marker)");
  return file;
}

RecordFile read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("records: cannot open " + path.string());
  return read_records(in);
}

}  // namespace marl
