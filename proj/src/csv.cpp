#include "dmval/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dmval/errors.hpp"

namespace dmval::csv {

namespace {

std::vector<std::string> parse_line(const std::string& line, const std::string& context) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {  // escaped quote
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  if (quoted) throw SchemaError(context + ": unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw SchemaError(path.string() + ": missing required column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path.string() + ": cannot open file");
  Table t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = parse_line(line, path.string() + ":" + std::to_string(lineno));
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(t.header.size()) + " cells, got " +
                          std::to_string(cells.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw SchemaError(path.string() + ": empty file");
  return t;
}

namespace {

[[noreturn]] void cell_error(const Table& t, std::size_t row, std::size_t col,
                             const char* what) {
  throw SchemaError(t.path.string() + ":" + std::to_string(row + 2) + ": column '" +
                    t.header[col] + "': " + what + " ('" + t.rows[row][col] + "')");
}

}  // namespace

double to_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  // std::from_chars for doubles is incomplete in some libstdc++ versions;
  // strtod with a full-consumption check is equivalent here.
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) cell_error(t, row, col, "not a number");
  return v;
}

std::int64_t to_int(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    // tolerate integral values written as decimals ("2.0")
    double d = to_double(t, row, col);
    std::int64_t r = static_cast<std::int64_t>(d);
    if (static_cast<double>(r) != d) cell_error(t, row, col, "not an integer");
    return r;
  }
  return v;
}

std::vector<double> split_double_list(const std::string& field, const std::string& context) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(field);
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) {
      throw SchemaError(context + ": bad numeric list element '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

Writer::Writer(std::vector<std::string> header) : header_(std::move(header)) {}

void Writer::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) {
    throw ContractError("csv row width " + std::to_string(cells.size()) + " != header width " +
                        std::to_string(header_.size()));
  }
  rows_.push_back(cells);
}

std::string Writer::format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

namespace {

void append_cell(std::string& out, const std::string& cell) {
  if (cell.find_first_of(",\"\n") != std::string::npos) {
    out.push_back('"');
    for (char ch : cell) {
      if (ch == '"') out.push_back('"');
      out.push_back(ch);
    }
    out.push_back('"');
  } else {
    out += cell;
  }
}

}  // namespace

std::string Writer::str() const {
  std::string out;
  auto row_out = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      append_cell(out, row[i]);
    }
    out.push_back('\n');
  };
  row_out(header_);
  for (const auto& r : rows_) row_out(r);
  return out;
}

void Writer::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << str();
}

}  // namespace dmval::csv
