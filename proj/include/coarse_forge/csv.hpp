#pragma once

#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace cforge {

/// 17 significant digits, "%.17g".
std::string format_double(double v);

/// Comma-separated writer: header row, LF line endings. Fields containing a
/// comma, quote or newline are quoted.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& fields);
  void close();

  static std::string num(double v) { return format_double(v); }
  static std::string num(std::size_t v) { return std::to_string(v); }

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::string path_;
};

/// Whole file as rows of fields (no quoting support beyond plain fields).
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace cforge
