#include "mspat/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mspat::csv {

namespace {

// Splits one physical record; quoted fields may contain commas and doubled
// quotes. Newlines inside quotes are not supported.
std::vector<std::string> split_record(const std::string& line, long line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty()) throw parse_error("stray quote inside field", line_no);
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw parse_error("unterminated quoted field", line_no);
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

int Table::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw data_error("csv column not found: " + name);
}

double Table::number(int row, int col) const {
  const auto v = maybe_number(row, col);
  if (!v.has_value())
    throw data_error("missing numeric value at csv row " + std::to_string(row + 2) +
                     ", column " + header[col]);
  return *v;
}

std::optional<double> Table::maybe_number(int row, int col) const {
  const std::string& s = rows[row][col];
  if (s.empty()) return std::nullopt;
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw data_error("bad numeric value '" + s + "' at csv row " +
                     std::to_string(row + 2) + ", column " + header[col]);
  }
}

Table read(std::istream& in) {
  Table t;
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw parse_error("csv file has no header row");
  ++line_no;
  t.header = split_record(line, line_no);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_record(line, line_no);
    if (fields.size() != t.header.size())
      throw parse_error("csv row has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(t.header.size()),
                        line_no);
    t.rows.push_back(std::move(fields));
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open csv file: " + path);
  return read(in);
}

namespace {

std::string quote_if_needed(const std::string& f) {
  if (f.find_first_of(",\"\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write(std::ostream& out, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
  for (size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << quote_if_needed(header[i]);
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << quote_if_needed(row[i]);
    out << "\n";
  }
}

void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open output file: " + path);
  write(out, header, rows);
  if (!out) throw io_error("failed writing output file: " + path);
}

std::string format(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace mspat::csv
