#pragma once

#include <armadillo>
#include <string>
#include <vector>

#include "mlc/em_step1.hpp"
#include "mlc/model.hpp"
#include "mlc/posterior.hpp"

namespace mlc {

struct IcValues {
  double aic;
  double bic_n;  // log N penalty
  double bic_j;  // log J penalty
};

IcValues information_criteria(double loglik, arma::uword npar, arma::uword N,
                              arma::uword J);

// Free parameters of the unconditional model.
inline arma::uword npar_unconditional(arma::uword T, arma::uword M,
                                      arma::uword H) {
  return (M - 1) + M * (T - 1) + H * T;
}

enum class Level { low, high };

// 1 - (mean posterior entropy) / (entropy of the marginal class
// distribution). A degenerate single class gives 0/0 and returns 1 with a
// warning.
double entropy_r2(const Posteriors& post, Level level,
                  WarningLog* warnings = nullptr);

struct SelectionRow {
  arma::uword T = 0;
  arma::uword M = 0;
  int phase = 0;  // 1: pooled scan over T; 2: scan over M; 3: re-scan over T
  double loglik = 0.0;
  arma::uword npar = 0;
  double aic = 0.0, bic_n = 0.0, bic_j = 0.0;
  double r2_low = 0.0, r2_high = 0.0;
  bool failed = false;
  std::string error;
};

struct SelectionTable {
  std::vector<SelectionRow> rows;
  arma::uword chosen_T = 0;
  arma::uword chosen_M = 0;
  arma::uword phase1_T = 0;  // visible when phase 3 revises the low-level count
  WarningLog warnings;
};

// One-level-at-a-time scan: pooled fits pick T by BIC(N), multilevel fits
// with that T pick M by BIC(J), a final multilevel scan over T with M fixed
// confirms or revises T. Failed grid cells are recorded and skipped.
SelectionTable hierarchical_select(const Dataset& data,
                                   const std::vector<arma::uword>& T_range,
                                   const std::vector<arma::uword>& M_range,
                                   const EmControl& ctrl, int workers = 1);

}  // namespace mlc
