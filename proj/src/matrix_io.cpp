#include "iterlearn/matrix_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace iterlearn {

std::string format_decimal(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ' ';
      out << format_decimal(m(i, j));
    }
    out << '\n';
  }
}

namespace {

double parse_decimal(const std::string& token) {
  double value = 0;
  const char* first = token.data();
  const char* last = first + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("matrix text: invalid decimal '" + token + "'");
  }
  if (!std::isfinite(value)) throw ParseError("matrix text: non-finite entry '" + token + "'");
  return value;
}

}  // namespace

Eigen::MatrixXd read_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("matrix text: missing header line");
  std::istringstream header(line);
  long rows = 0;
  long cols = 0;
  std::string extra;
  if (!(header >> rows >> cols) || (header >> extra)) {
    throw ParseError("matrix text: header must be 'rows cols'");
  }
  if (rows < 1 || cols < 1) throw ParseError("matrix text: dimensions must be positive");

  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      throw ParseError("matrix text: expected " + std::to_string(rows) + " rows, got " +
                       std::to_string(i));
    }
    std::istringstream row(line);
    std::string token;
    long j = 0;
    while (row >> token) {
      if (j >= cols) throw ParseError("matrix text: row " + std::to_string(i + 1) + " too long");
      m(i, j++) = parse_decimal(token);
    }
    if (j != cols) throw ParseError("matrix text: row " + std::to_string(i + 1) + " too short");
  }
  return m;
}

Eigen::MatrixXd read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open matrix file " + path);
  return read_matrix(in);
}

void write_matrix_file(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write matrix file " + path);
  write_matrix(out, m);
}

}  // namespace iterlearn
