#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vmm/cli.hpp"

namespace vmm::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name, const std::string& role) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  throw UsageError("missing column '" + name + "' (declared as " + role + ")");
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line);
    if (!have_header) {
      table.header = std::move(cells);
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c].empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty column name");
        for (std::size_t d = 0; d < c; ++d) {
          if (table.header[d] == table.header[c]) {
            throw UsageError(source + ":" + std::to_string(line_no) + ": duplicate column '" + table.header[c] + "'");
          }
        }
      }
      have_header = true;
      continue;
    }
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != table.header.size()) {
      throw UsageError(where + ": expected " + std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      char* end = nullptr;
      errno = 0;
      const double v = cell.empty() ? 0.0 : std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw UsageError(where + ": column '" + table.header[c] + "': '" + cell + "' is not a number");
      }
      if (!std::isfinite(v)) {
        throw UsageError(where + ": column '" + table.header[c] + "': non-finite value '" + cell + "'");
      }
      row[c] = v;
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw UsageError(source + ": empty file");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open data file " + path.string());
  return parse_csv(f, path.string());
}

}  // namespace vmm::cli
