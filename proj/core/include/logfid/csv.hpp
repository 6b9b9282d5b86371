#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace logfid::csv {

/// RFC 4180 style: fields containing comma, quote or newline are quoted.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Splits one physical line. Embedded newlines are not supported.
std::vector<std::string> split_row(std::string_view line);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace logfid::csv
