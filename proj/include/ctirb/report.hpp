#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctirb {

/// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

/// Fixed-point rendering rounded to nearest; exact binary ties go to even.
std::string format_rate(double value, int decimals);
/// Fixed-point rendering truncated toward zero; F1 scores use this (0.93497
/// is printed as 0.9349).
std::string format_truncated(double value, int decimals);
std::string format_f1(double value);

/// Absent ratios (zero denominators) render as an empty CSV cell.
std::string format_optional(const std::optional<double>& value, int decimals);

/// Shortest round-trip text for a double, for grids and raw samples.
std::string format_exact(double value);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(std::vector<std::string> cells);
  std::string str() const;

  static std::string escape(std::string_view cell);

 private:
  std::size_t columns_;
  std::string out_;
};

}  // namespace ctirb
