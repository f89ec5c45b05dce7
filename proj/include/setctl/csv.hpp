#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace setctl::csv {

// Shortest decimal string that parses back to exactly x.
std::string fmt(double x);

void write_row(std::ostream& os, const std::vector<double>& values);
void write_header(std::ostream& os, const std::vector<std::string>& names);

struct Table {
  std::vector<std::string> header;  // empty if the file had none
  std::vector<std::vector<double>> rows;
};

// Comma-separated numeric table; a first line that does not parse as
// numbers is taken as the header. Blank lines and lines starting with '#'
// are skipped. All rows must have the same width.
Table read(std::istream& is);
Table read_file(const std::string& path);

}  // namespace setctl::csv
