#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace morphwing::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a column by name; throws if absent.
  std::size_t column(const std::string& name) const;
};

/// Numbers are written with 17 significant digits so doubles round-trip.
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Cells kept as text, for files with label columns (bench.csv). No quoting:
/// cells must not contain commas or newlines.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

std::string format_text_csv(const TextTable& table);
void write_text_csv(const std::filesystem::path& path, const TextTable& table);
TextTable parse_text_csv(const std::string& text);
TextTable read_text_csv(const std::filesystem::path& path);

}  // namespace morphwing::io
