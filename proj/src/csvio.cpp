#include "kovae/csvio.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kovae {

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    return pos == s.size();
  } catch (...) {
    return false;
  }
}
}  // namespace

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    std::vector<double> row(cells.size());
    bool ok = true;
    for (size_t j = 0; j < cells.size(); ++j)
      ok = ok && parse_double(cells[j], row[j]);
    if (!ok) {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw std::runtime_error("csv: non-numeric cell at " + path + ":" +
                               std::to_string(lineno));
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("csv: ragged row at " + path + ":" +
                               std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("csv: no numeric rows in " + path);
  Eigen::MatrixXd m(static_cast<int>(rows.size()),
                    static_cast<int>(rows.front().size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("csv: cannot open " + path);
  os.precision(12);
  for (size_t j = 0; j < header.size(); ++j)
    os << header[j] << (j + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (size_t j = 0; j < row.size(); ++j)
      os << row[j] << (j + 1 < row.size() ? "," : "\n");
  }
}

}  // namespace kovae
