#include "bsdeopt/csv.hpp"

#include <fmt/format.h>

#include <fstream>

#include "bsdeopt/errors.hpp"

namespace bsdeopt {

std::string format_double(double x) { return fmt::format("{}", x); }

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);  // binary: keep '\n' on any platform
  if (!impl_->out) throw ConfigError(fmt::format("cannot open '{}' for writing", path));
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  std::string line;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      line += '"';
      for (char ch : c) {
        if (ch == '"') line += '"';
        line += ch;
      }
      line += '"';
    } else {
      line += c;
    }
  }
  line += '\n';
  impl_->out << line;
}

void CsvWriter::numeric_row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double x : cells) s.push_back(format_double(x));
  row(s);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot open '{}' for writing", path));
  out << content;
}

}  // namespace bsdeopt
