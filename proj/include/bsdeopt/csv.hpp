#pragma once

#include <string>
#include <vector>

namespace bsdeopt {

// Shortest representation that round-trips the exact double value.
std::string format_double(double x);

// Minimal RFC-4180-style writer: header row first, comma separator, '\n' line
// endings, cells quoted only when they contain a comma, quote or newline.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();
  void row(const std::vector<std::string>& cells);
  void numeric_row(const std::vector<double>& cells);

 private:
  struct Impl;
  Impl* impl_;
};

void write_text_file(const std::string& path, const std::string& content);

}  // namespace bsdeopt
