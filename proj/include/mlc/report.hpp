#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mlc/estimators.hpp"
#include "mlc/selection.hpp"

namespace mlc {

// z statistic and two-sided p-value with significance stars:
// *** p<0.01, ** p<0.05, * p<0.1.
std::string significance_stars(double p_value);
double two_sided_p(double z);

struct CoefficientEntry {
  arma::uword hl_class;  // 1..M
  arma::uword response_class;  // 2..T (vs class 1)
  std::string covariate;
  Method method;
  double estimate, se, z, p;
  std::string stars;
};

std::vector<CoefficientEntry> coefficient_entries(
    const FitResult& fit, const std::vector<std::string>& covariate_names);

// Long-format CSV, one row per (hl_class, response_class, covariate, method).
void write_coefficients_csv(const std::vector<FitResult>& fits,
                            const std::vector<std::string>& covariate_names,
                            std::ostream& os);

// Printed table: one block per high-level class, response classes and methods
// side by side, an estimate line and a standard-error line per covariate.
void write_coefficients_table(const std::vector<FitResult>& fits,
                              const std::vector<std::string>& covariate_names,
                              std::ostream& os);

// Unit-level marginal posteriors and MAP classes.
void write_unit_posteriors_csv(const Dataset& data, const FitResult& fit,
                               std::ostream& os);
// Group-level posteriors and MAP classes.
void write_group_posteriors_csv(const Dataset& data, const FitResult& fit,
                                std::ostream& os);

void write_selection_csv(const SelectionTable& table, std::ostream& os);

}  // namespace mlc
