#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "coag/micro_sim.hpp"

namespace coag {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string tool_version();

/// Identity line carried by every artifact.
struct ArtifactHeader {
  std::string kind;
  std::string version;
  std::uint64_t config_hash = 0;
  std::uint64_t model_hash = 0;
};

/// 17 significant digits, '.' decimal point, independent of the locale.
std::string format_double(double v);
std::string format_int(std::int64_t v);

/// "# coaglab <version> kind=<kind> config=<hex> model=<hex>"
std::string header_line(const ArtifactHeader& h);
ArtifactHeader parse_header_line(const std::string& line);

/// CSV document builder: header comment, column row, LF line endings.
class CsvBuilder {
 public:
  CsvBuilder(ArtifactHeader header, std::vector<std::string> columns);
  void row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

struct CsvTable {
  ArtifactHeader header;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws IoError if missing.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source = "<string>");
CsvTable read_csv(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

/// JSONL: one header object, then one event per line.
std::string jsonl_header(const ArtifactHeader& h);
/// `replica` >= 0 adds a "replica" field.
std::string event_line(const CollisionEvent& e, int dim, int replica = -1);
struct EventLog {
  ArtifactHeader header;
  std::vector<CollisionEvent> events;
  std::vector<int> replicas;  ///< per event, -1 when absent
};
EventLog parse_events(const std::string& text, int dim);

/// Double from text with strict full-string parsing.
double parse_double(const std::string& s);

}  // namespace coag
