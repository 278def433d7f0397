#include "rfslam/csv_io.hpp"

#include <charconv>
#include <sstream>

#include "rfslam/errors.hpp"

namespace rfslam {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not a number: '" + std::string(s) + "'");
  return v;
}

long long parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not an integer: '" + std::string(s) + "'");
  return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& file,
                     std::initializer_list<std::string_view> header)
    : path_(file), out_(file, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open for writing: " + file.string());
  for (auto h : header) field(h);
  end_row();
}

void CsvWriter::sep() {
  if (!first_) out_.put(',');
  first_ = false;
}

CsvWriter& CsvWriter::field(double v) {
  sep();
  out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::field(long long v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::field(std::string_view v) {
  sep();
  out_ << v;
  return *this;
}

void CsvWriter::end_row() {
  out_.put('\n');
  first_ = true;
}

void CsvWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ConfigError("missing CSV column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + file.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) fields.emplace_back(trim(cell));
    if (line.back() == ',') fields.emplace_back();
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != table.header.size())
        throw ConfigError(file.string() + ": row has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(table.header.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  if (in.bad()) throw IoError("read failed: " + file.string());
  if (!have_header) throw ConfigError("empty CSV file: " + file.string());
  return table;
}

}  // namespace rfslam
