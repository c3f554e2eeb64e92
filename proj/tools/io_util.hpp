// Small deterministic-output helpers shared by the experiment runner and the
// report generator: %.17g float formatting, whole-file IO, and a minimal
// numeric CSV reader for our own artifacts.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "experiments.hpp"

namespace bidlab::cli {

// Shortest exact-ish decimal; 17 significant digits round-trip doubles.
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json_file(const std::string& path) {
  return nlohmann::json::parse(read_text_file(path));
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// All-numeric table with a header row. Fields are parsed with strtod, so
// "inf"/"nan" round-trip.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv column missing: " + name);
  }
};

inline CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable t;
  std::size_t pos = 0;
  const std::size_t n = text.size();
  bool header = true;
  while (pos < n) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = n;
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t f = 0;
    while (true) {
      std::size_t c = line.find(',', f);
      fields.push_back(line.substr(f, c == std::string::npos ? c : c - f));
      if (c == std::string::npos) break;
      f = c + 1;
    }
    if (header) {
      t.columns = std::move(fields);
      header = false;
      continue;
    }
    if (fields.size() != t.columns.size())
      throw std::runtime_error(origin + ": ragged csv row");
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      char* end = nullptr;
      row[i] = std::strtod(fields[i].c_str(), &end);
      if (end == fields[i].c_str())
        throw std::runtime_error(origin + ": non-numeric csv field '" + fields[i] + "'");
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw std::runtime_error(origin + ": empty csv");
  return t;
}

}  // namespace bidlab::cli
