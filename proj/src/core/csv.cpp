#include "core/csv.hpp"

#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace delaycast::csv {

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Table::require_column(const std::string& name) const {
  int c = column(name);
  if (c < 0) throw Error(Errc::data, "MissingColumn", "required CSV column '" + name + "'");
  return c;
}

namespace {

std::vector<std::string> split_line(const std::string& line, const std::string& origin) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(Errc::data, "BadCsv", "unterminated quote in " + origin);
  out.push_back(field);
  return out;
}

}  // namespace

Table parse(const std::string& text, const std::string& origin) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header && line[0] == '#') {
      std::string body = line.substr(1);
      auto eq = body.find('=');
      if (eq != std::string::npos) t.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    auto fields = split_line(line, origin);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw Error(Errc::data, "BadCsv", "no header row in " + origin);
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::data, "FileNotFound", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

void write_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  out += '\n';
}

}  // namespace delaycast::csv
