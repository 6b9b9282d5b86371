#include "logfid/records.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"

namespace logfid {

void write_records_jsonl(std::ostream& out, const std::vector<RawLogRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    // shortest round-trip text keeps re-read timestamps bit-identical
    j["timestamp"] = nlohmann::ordered_json::parse(csv::format_double(r.timestamp));
    j["task_id"] = r.task_id;
    if (r.level) j["level"] = *r.level;
    j["content"] = r.content;
    out << j.dump() << '\n';
  }
}

namespace {

RawLogRecord parse_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  RawLogRecord r;
  const auto& ts = j.at("timestamp");
  if (ts.is_string()) {
    r.timestamp = std::stod(ts.get<std::string>());
  } else {
    r.timestamp = ts.get<double>();
  }
  const auto& task = j.at("task_id");
  r.task_id = task.is_string() ? task.get<std::string>() : task.dump();
  if (j.contains("level") && !j["level"].is_null()) r.level = j["level"].get<std::string>();
  r.content = j.at("content").get<std::string>();
  return r;
}

RawLogRecord parse_text_line(const std::string& line) {
  std::istringstream in(line);
  RawLogRecord r;
  std::string ts, level;
  if (!(in >> ts >> r.task_id >> level)) throw FormatError("expected timestamp, task id and level");
  std::size_t used = 0;
  r.timestamp = std::stod(ts, &used);
  if (used != ts.size()) throw FormatError("bad timestamp '" + ts + "'");
  r.level = level;
  std::getline(in >> std::ws, r.content);
  return r;
}

}  // namespace

std::vector<RawLogRecord> read_records(std::istream& in) {
  std::vector<RawLogRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      RawLogRecord r = line[first] == '{' ? parse_json_line(line) : parse_text_line(line);
      validate_record(r);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(number) + ": " + e.what());
    } catch (const std::invalid_argument&) {
      throw FormatError("line " + std::to_string(number) + ": bad number");
    } catch (const std::out_of_range&) {
      throw FormatError("line " + std::to_string(number) + ": number out of range");
    } catch (const Error& e) {
      throw FormatError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawLogRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_records(in);
}

void write_records_file(const std::string& path, const std::vector<RawLogRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_records_jsonl(out, records);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace logfid
