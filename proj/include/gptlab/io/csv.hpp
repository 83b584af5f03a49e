#pragma once

// RFC 4180 style CSV: comma separated, header row, fields quoted when they
// contain a comma, quote or line break. Lines end with "\n".

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gptlab::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; ParseError if absent.
  std::size_t column(std::string_view name) const;
  const std::string& cell(std::size_t row, std::string_view name) const;
  void add_row(std::vector<std::string> row);  // width must match header
  bool operator==(const CsvTable&) const = default;
};

std::string to_csv(const CsvTable& table);
// Throws ParseError (with line number) on unterminated quotes or ragged rows.
CsvTable parse_csv(std::string_view text);

// Writes via a temporary file and rename so readers never see partial files.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv_file(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace gptlab::io
