#include "mlc/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mlc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace and quotes
    auto b = field.find_first_not_of(" \t\r\"");
    auto e = field.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, arma::uword row, const std::string& col) {
  if (s.empty())
    throw DataError("missing value at row " + std::to_string(row + 1) +
                    ", column '" + col + "' (missing data is unsupported)");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw DataError("non-numeric value '" + s + "' at row " +
                    std::to_string(row + 1) + ", column '" + col + "'");
  return v;
}

}  // namespace

std::vector<std::string> expand_column_spec(const std::string& spec) {
  std::vector<std::string> out;
  std::stringstream ss(spec);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    if (piece.empty()) continue;
    const auto dots = piece.find("..");
    if (dots == std::string::npos) {
      out.push_back(piece);
      continue;
    }
    const std::string from = piece.substr(0, dots);
    const std::string to = piece.substr(dots + 2);
    // shared prefix with trailing integers, e.g. y1..y10
    auto digits_at = [](const std::string& s) {
      std::size_t i = s.size();
      while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
      return i;
    };
    const std::size_t fp = digits_at(from), tp = digits_at(to);
    if (fp == from.size() || tp == to.size() ||
        from.substr(0, fp) != to.substr(0, tp))
      throw DataError("bad column range '" + piece + "'");
    const long a = std::strtol(from.c_str() + fp, nullptr, 10);
    const long b = std::strtol(to.c_str() + tp, nullptr, 10);
    if (b < a) throw DataError("bad column range '" + piece + "'");
    for (long i = a; i <= b; ++i)
      out.push_back(from.substr(0, fp) + std::to_string(i));
  }
  return out;
}

Dataset parse_csv(const std::string& path, const CsvSpec& spec,
                  WarningLog* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input file '" + path + "'");
  const std::vector<std::string> header = split_line(line);

  auto col_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError("column '" + name + "' not found in '" + path + "'");
    return static_cast<arma::uword>(it - header.begin());
  };

  const arma::uword gcol = col_index(spec.group_col);
  std::vector<arma::uword> item_idx, cov_idx;
  for (const auto& c : spec.item_cols) item_idx.push_back(col_index(c));
  for (const auto& c : spec.covariate_cols) cov_idx.push_back(col_index(c));
  if (item_idx.empty()) throw DataError("no item columns selected");

  std::vector<std::string> group_ids;
  std::vector<double> y_vals, z_vals;
  arma::uword n_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() < header.size())
      throw DataError("row " + std::to_string(n_rows + 2) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    if (fields[gcol].empty())
      throw DataError("missing group id at row " + std::to_string(n_rows + 2));
    group_ids.push_back(fields[gcol]);
    for (arma::uword c : item_idx) {
      const double v = parse_number(fields[c], n_rows + 1, header[c]);
      if (v != 0.0 && v != 1.0)
        throw DataError("item value '" + fields[c] + "' at row " +
                        std::to_string(n_rows + 2) + ", column '" + header[c] +
                        "' is not 0/1");
      y_vals.push_back(v);
    }
    for (arma::uword c : cov_idx)
      z_vals.push_back(parse_number(fields[c], n_rows + 1, header[c]));
    ++n_rows;
  }
  if (n_rows == 0) throw DataError("no data rows in '" + path + "'");

  arma::mat Y(n_rows, item_idx.size());
  for (arma::uword r = 0; r < n_rows; ++r)
    for (arma::uword c = 0; c < item_idx.size(); ++c)
      Y(r, c) = y_vals[r * item_idx.size() + c];
  arma::mat covariates(n_rows, cov_idx.size());
  for (arma::uword r = 0; r < n_rows; ++r)
    for (arma::uword c = 0; c < cov_idx.size(); ++c)
      covariates(r, c) = z_vals[r * cov_idx.size() + c];

  Dataset data = assemble_dataset(Y, group_ids, covariates);
  const arma::uvec sizes = data.group_sizes();
  for (arma::uword j = 0; j < sizes.n_elem; ++j) {
    if (sizes[j] < 3)
      warn(warnings, "group '" + data.group_names[j] + "' has only " +
                         std::to_string(sizes[j]) +
                         " units; identification needs at least 3 per group");
  }
  return data;
}

std::string csv_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace mlc
