#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace causalma::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;
};

// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
// LF or CRLF line endings. Blank lines and lines starting with '#' outside a
// quoted field are skipped.
Table read(std::istream& in);

// Quotes a field only when it contains a separator, quote or line break.
std::string escape(const std::string& field);

}  // namespace causalma::csv
