#pragma once
// Minimal CSV and text helpers shared by the file-facing modules. Fields never
// contain commas or quotes in the formats this project writes; quoted fields are
// still accepted on input.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nnf::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or throws a data error.
  std::size_t column(std::string_view name) const;
};

Table parse(std::string_view text);
std::string format(const Table& table);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
// Empty or "nan" cells are missing.
std::optional<double> parse_optional(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace nnf::csv
