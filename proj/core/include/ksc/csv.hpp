#pragma once

#include <string>
#include <vector>

namespace ksc::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  double number(std::size_t row, int col) const;
};

std::string cell(double v);  // %.17g

void write_file(const std::string& path, const Table& table);
Table read_file(const std::string& path);

}  // namespace ksc::csv
