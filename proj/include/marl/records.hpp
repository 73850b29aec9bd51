#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "marl/scenario.hpp"

namespace marl {

// Newline-delimited JSON episode log. Line 1 is a header object
//   {"schema": "marl.episodes", "version": 1, "experiment": ..., ...}
// and every following line is one EpisodeRecord. See docs/formats.md.
inline constexpr int kRecordSchemaVersion = 1;

struct RecordHeader {
  Experiment experiment = Experiment::G2GCA;
  std::size_t n_agents = 4;
  double tick_seconds = 0.02;
  int ticks_per_decision = 5;
  double half_extent = 5.0;
  double goal_radius = 1.0;
  std::vector<Vec2> goals;
};

struct RecordFile {
  RecordHeader header;
  std::vector<EpisodeRecord> records;
};

class RecordFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RecordHeader make_record_header(const WorldConfig& cfg);

std::string record_to_json_line(const EpisodeRecord& rec);
EpisodeRecord record_from_json_line(const std::string& line);

void write_records(std::ostream& out, const RecordHeader& header,
                   const std::vector<EpisodeRecord>& records);
void write_records(const std::filesystem::path& path, const RecordHeader& header,
                   const std::vector<EpisodeRecord>& records);

// Reads and validates the whole file before returning. Throws RecordFormatError on
// a schema/version mismatch, malformed or truncated lines.
RecordFile read_records(std::istream& in);
RecordFile read_records(const std::filesystem::path& path);

}  // namespace marl
