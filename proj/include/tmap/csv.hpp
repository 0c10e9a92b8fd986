#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmap {

//! Columnar CSV with '#'-prefixed header manifest lines (key=value) before
//! the column header row.
struct CsvTable {
  std::map<std::string, std::string> manifest;
  std::vector<std::string> columns;
  Eigen::MatrixXd data;
};

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& [k, v] : t.manifest) out << "# " << k << "=" << v << "\n";
  for (std::size_t j = 0; j < t.columns.size(); ++j)
    out << t.columns[j] << (j + 1 < t.columns.size() ? "," : "\n");
  out.precision(17);
  for (Eigen::Index i = 0; i < t.data.rows(); ++i)
    for (Eigen::Index j = 0; j < t.data.cols(); ++j)
      out << t.data(i, j) << (j + 1 < t.data.cols() ? "," : "\n");
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t") + 1);
        t.manifest[key] = line.substr(eq + 1);
      }
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    if (!header_done) {
      while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
      header_done = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  t.data.resize(rows.size(), t.columns.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < t.columns.size(); ++j)
      t.data(i, j) = rows[i][j];
  return t;
}

} // namespace tmap
