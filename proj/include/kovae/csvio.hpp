#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kovae {

/// Numeric CSV reader. A non-numeric first row is treated as a header and
/// skipped. Throws on ragged rows or non-numeric cells in the body.
Eigen::MatrixXd read_csv_matrix(const std::string& path);

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace kovae
