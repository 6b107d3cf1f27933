#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace iterlearn {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `value` at 17 significant digits (%g style, trailing zeros dropped), so
/// parsing the text back reproduces the same double.
std::string format_decimal(double value);

/// Matrix text format: a "rows cols" line followed by `rows` lines of
/// whitespace-separated decimals.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& in);

Eigen::MatrixXd read_matrix_file(const std::string& path);
void write_matrix_file(const std::string& path, const Eigen::MatrixXd& m);

}  // namespace iterlearn
