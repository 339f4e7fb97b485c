#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mspat/errors.hpp"

namespace mspat::csv {

// Minimal RFC-4180-style table: header row mandatory, '.' decimal separator,
// quoted fields with doubled-quote escapes, empty field = missing value.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_cols() const { return static_cast<int>(header.size()); }
  int column(const std::string& name) const;  // throws on unknown name

  double number(int row, int col) const;               // throws on empty/bad
  std::optional<double> maybe_number(int row, int col) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

void write(std::ostream& out, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows);
void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

std::string format(double v);  // round-trip precision, '.' decimal separator

}  // namespace mspat::csv
