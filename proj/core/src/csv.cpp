#include "causalma/csv.hpp"

#include <istream>

#include "causalma/error.hpp"

namespace causalma::csv {
namespace {

// Reads one logical record; returns false at end of input.
bool read_record(std::istream& in, std::size_t& line, Row& row) {
  row.fields.clear();
  for (;;) {
    if (in.peek() == std::char_traits<char>::eof()) return false;
    ++line;
    const int first = in.peek();
    if (first == '\n' || first == '\r' || first == '#') {
      std::string skipped;
      std::getline(in, skipped);
      continue;
    }
    break;
  }
  row.line = line;

  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  char c = 0;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      row.fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\r') {
      // tolerated before '\n'
    } else if (c == '\n') {
      break;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorKind::ParseError,
                "unterminated quoted field starting on line " + std::to_string(row.line));
  }
  row.fields.push_back(std::move(field));
  return true;
}

}  // namespace

Table read(std::istream& in) {
  Table table;
  std::size_t line = 0;
  Row row;
  if (!read_record(in, line, row)) {
    throw Error(ErrorKind::ParseError, "empty CSV input (no header row)");
  }
  table.header = std::move(row.fields);
  while (read_record(in, line, row)) table.rows.push_back(row);
  return table;
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace causalma::csv
