#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <bg/common.hpp>

namespace bg {

// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v || (std::isnan(back) && std::isnan(v))) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return shorter;
    }
  }
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns)
      : out_(path), columns_(columns.size()) {
    if (!out_) throw ConfigError("cannot open for writing: " + path);
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }

  // Lines starting with '#' carry run metadata; readers skip them.
  void comment(const std::string& text) { out_ << "# " << text << "\n"; }

  void row(const std::vector<double>& values) {
    require(values.size() == columns_, "csv: row width mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
      out_ << (i ? "," : "") << format_double(values[i]);
    out_ << "\n";
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& columns,
                             const Matrix& m) {
  require(static_cast<std::size_t>(m.cols()) == columns.size(), "csv: column count mismatch");
  CsvWriter w(path, columns);
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    w.row(row);
  }
}

// Reads a numeric CSV, skipping the header line and '#' comments.
inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_skipped = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_skipped) {
      header_skipped = true;
      if (line.find_first_not_of("0123456789+-.eE,na ") != std::string::npos) continue;
    }
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      row.push_back(std::stod(line.substr(pos, next - pos)));
      pos = next + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("ragged csv: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("empty csv: " + path);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace bg
