#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "logfid/parser.hpp"

namespace logfid {

/// One JSON object per line: {"timestamp", "task_id", "level", "content"}.
void write_records_jsonl(std::ostream& out, const std::vector<RawLogRecord>& records);

/// Reads JSON lines or plain "timestamp task_id level content..." lines
/// (chosen per line by its first character). Blank lines are skipped.
/// Throws FormatError with the line number on malformed input.
std::vector<RawLogRecord> read_records(std::istream& in);

std::vector<RawLogRecord> read_records_file(const std::string& path);
void write_records_file(const std::string& path, const std::vector<RawLogRecord>& records);

}  // namespace logfid
