#pragma once

#include <map>
#include <string>
#include <vector>

namespace delaycast::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Leading '#key=value' comment lines, if any.
  std::map<std::string, std::string> meta;

  int column(const std::string& name) const;       // -1 when absent
  int require_column(const std::string& name) const;
};

// Reads a comma-separated file with a header row. Handles double-quoted
// fields with embedded commas/quotes, CRLF line ends, and '#'-prefixed
// leading comment lines (parsed into meta when they look like key=value).
Table read_file(const std::string& path);
Table parse(const std::string& text, const std::string& origin);

std::string escape(const std::string& field);
void write_row(std::string& out, const std::vector<std::string>& fields);

}  // namespace delaycast::csv
