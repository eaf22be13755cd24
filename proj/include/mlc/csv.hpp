#pragma once

#include <string>
#include <vector>

#include "mlc/model.hpp"

namespace mlc {

// Column selection for reading a dataset from CSV: a group-id column, item
// columns (0/1) and optional numeric covariate columns.
struct CsvSpec {
  std::string group_col;
  std::vector<std::string> item_cols;
  std::vector<std::string> covariate_cols;
};

// Header row required; items must be exactly 0 or 1; empty cells are fatal
// (missing data is unsupported). Rows are sorted by group id and the original
// row order is recorded. Groups with fewer than 3 units trigger a warning.
Dataset parse_csv(const std::string& path, const CsvSpec& spec,
                  WarningLog* warnings = nullptr);

// "a,b,c" and "y1..y10" styles; a range expands a shared prefix with a
// trailing integer.
std::vector<std::string> expand_column_spec(const std::string& spec);

std::string csv_double(double x);

}  // namespace mlc
