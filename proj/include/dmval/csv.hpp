#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dmval::csv {

// One parsed CSV file: header row plus string cells. Quoted fields with
// embedded commas/quotes are handled; semicolon-separated lists inside a
// single field pass through untouched.
struct Table {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // rows[i].size() == header.size()

  // Column index for `name`; throws SchemaError naming file and column.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

Table read_file(const std::filesystem::path& path);

// Cell accessors with file:line context on parse failure (line is 1-based
// physical line in the file, header included).
double to_double(const Table& t, std::size_t row, std::size_t col);
std::int64_t to_int(const Table& t, std::size_t row, std::size_t col);

// Splits a semicolon-separated numeric list ("8.51;12.59;16.43").
std::vector<double> split_double_list(const std::string& field, const std::string& context);

// Deterministic CSV writer: fixed "%.10g" float formatting so identical data
// always serializes to identical bytes.
class Writer {
 public:
  explicit Writer(std::vector<std::string> header);

  void add_row(const std::vector<std::string>& cells);
  static std::string format(double v);

  // Serializes header plus rows with '\n' line endings.
  std::string str() const;
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace dmval::csv
