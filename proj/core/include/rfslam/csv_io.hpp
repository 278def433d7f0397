#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace rfslam {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file,
            std::initializer_list<std::string_view> header);

  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(std::string_view v);
  void end_row();
  void close();

 private:
  void sep();

  std::filesystem::path path_;
  std::ofstream out_;
  bool first_ = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws ConfigError if missing.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& file);

}  // namespace rfslam
