#include "coag/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#ifndef COAGLAB_VERSION
#define COAGLAB_VERSION "0.0.0"
#endif

namespace coag {

std::string tool_version() { return COAGLAB_VERSION; }

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, p);
}

std::string format_int(std::int64_t v) { return std::to_string(v); }

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw IoError("not a number: '" + s + "'");
  return v;
}

namespace {

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t unhex(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || p != s.data() + s.size()) throw IoError("bad hash '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string header_line(const ArtifactHeader& h) {
  return "# coaglab " + (h.version.empty() ? tool_version() : h.version) + " kind=" + h.kind +
         " config=" + hex(h.config_hash) + " model=" + hex(h.model_hash);
}

ArtifactHeader parse_header_line(const std::string& line) {
  std::istringstream in(line);
  std::string hash_mark, tool;
  ArtifactHeader h;
  in >> hash_mark >> tool >> h.version;
  if (hash_mark != "#" || tool != "coaglab") throw IoError("missing coaglab header line");
  std::string field;
  bool have_config = false;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "kind") h.kind = value;
    else if (key == "config") {
      h.config_hash = unhex(value);
      have_config = true;
    } else if (key == "model") h.model_hash = unhex(value);
  }
  if (!have_config) throw IoError("header line lacks the config hash");
  return h;
}

CsvBuilder::CsvBuilder(ArtifactHeader header, std::vector<std::string> columns)
    : width_(columns.size()) {
  text_ = header_line(header) + "\n";
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (k) text_ += ',';
    text_ += columns[k];
  }
  text_ += '\n';
}

void CsvBuilder::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw IoError("csv row width does not match the header");
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) text_ += ',';
    text_ += cells[k];
  }
  text_ += '\n';
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] == name) return k;
  }
  throw IoError("missing csv column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  return parse_double(rows.at(row).at(column(name)));
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty file");
  t.header = parse_header_line(line);
  if (!std::getline(in, line)) throw IoError(source + ": missing column row");
  t.columns = split(line, ',');
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != t.columns.size()) {
      throw IoError(source + ":" + std::to_string(lineno) + ": wrong number of fields");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string jsonl_header(const ArtifactHeader& h) {
  return "{\"coaglab\":\"" + (h.version.empty() ? tool_version() : h.version) + "\",\"kind\":\"" +
         h.kind + "\",\"config\":\"" + hex(h.config_hash) + "\",\"model\":\"" +
         hex(h.model_hash) + "\"}\n";
}

std::string event_line(const CollisionEvent& e, int dim, int replica) {
  std::string s = "{";
  if (replica >= 0) s += "\"replica\":" + std::to_string(replica) + ",";
  s += "\"t\":" + format_double(e.t) + ",\"id_a\":" + std::to_string(e.id_a) +
                  ",\"id_b\":" + std::to_string(e.id_b) +
                  ",\"mass_a\":" + std::to_string(e.mass_a) +
                  ",\"mass_b\":" + std::to_string(e.mass_b) +
                  ",\"new_id\":" + std::to_string(e.new_id) + ",\"pos\":[";
  for (int a = 0; a < dim; ++a) {
    if (a) s += ',';
    s += format_double(e.new_pos[a]);
  }
  s += "],\"chose_first\":";
  s += e.chose_first ? "true" : "false";
  s += "}\n";
  return s;
}

EventLog parse_events(const std::string& text, int dim) {
  EventLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (lineno == 1) {
        if (!j.contains("coaglab")) throw IoError("events: missing header object");
        log.header.version = j.at("coaglab").get<std::string>();
        log.header.kind = j.value("kind", "");
        log.header.config_hash = unhex(j.at("config").get<std::string>());
        log.header.model_hash = unhex(j.value("model", std::string(16, '0')));
        continue;
      }
      CollisionEvent e;
      e.t = j.at("t").get<double>();
      e.id_a = j.at("id_a").get<std::uint64_t>();
      e.id_b = j.at("id_b").get<std::uint64_t>();
      e.mass_a = j.at("mass_a").get<std::uint32_t>();
      e.mass_b = j.at("mass_b").get<std::uint32_t>();
      e.new_id = j.at("new_id").get<std::uint64_t>();
      const auto& pos = j.at("pos");
      if (static_cast<int>(pos.size()) != dim) throw IoError("event position has wrong dimension");
      for (int a = 0; a < dim; ++a) e.new_pos[a] = pos[a].get<double>();
      e.chose_first = j.at("chose_first").get<bool>();
      log.events.push_back(e);
      log.replicas.push_back(j.value("replica", -1));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("events line " + std::to_string(lineno) + ": " + ex.what());
  }
  return log;
}

}  // namespace coag
