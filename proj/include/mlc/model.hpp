#pragma once

#include <armadillo>
#include <string>
#include <utility>
#include <vector>

#include "mlc/common.hpp"

namespace mlc {

// Index structure: J groups with sizes n_j, H binary items, T low-level
// classes nested in M high-level classes, K design columns (first column is
// the intercept).
struct ModelDims {
  arma::uword J = 0;
  arma::uvec n;  // length J
  arma::uword H = 0;
  arma::uword T = 1;
  arma::uword M = 1;
  arma::uword K = 1;

  arma::uword N() const { return n.is_empty() ? 0 : arma::accu(n); }
  void validate() const;  // throws DataError on violated invariants
};

// Responses and design with rows sorted so that groups form contiguous
// blocks. Group j occupies rows [offsets[j], offsets[j+1]).
struct Dataset {
  arma::mat Y;        // N x H, entries 0/1
  arma::uvec group;   // N, values 0..J-1, non-decreasing
  arma::mat Z;        // N x K, first column all ones
  arma::uvec offsets;  // length J+1

  std::vector<std::string> group_names;  // original ids (size J, may be empty)
  arma::uvec source_row;  // row r of Y came from input row source_row[r]

  arma::uword n_units() const { return Y.n_rows; }
  arma::uword n_items() const { return Y.n_cols; }
  arma::uword n_groups() const {
    return offsets.is_empty() ? 0 : offsets.n_elem - 1;
  }
  arma::uword n_covariates() const { return Z.n_cols; }
  arma::uvec group_sizes() const;

  ModelDims dims(arma::uword T, arma::uword M) const;
  void validate() const;
};

// Builds a Dataset from unordered rows: sorts by group id (numeric order when
// every id parses as a number, lexicographic otherwise), records the
// permutation in source_row. covariates may be empty; the intercept column is
// prepended either way.
Dataset assemble_dataset(const arma::mat& Y,
                         const std::vector<std::string>& group_ids,
                         const arma::mat& covariates);

struct MeasurementParams {
  arma::mat Phi;  // H x T, strictly interior
};

// omega is the high-level mixing distribution. Gamma stacks the multinomial
// logit coefficients of the low-level class model, one (T-1) x K slice per
// high-level class, class 1 as reference. Pi holds the implied conditional
// class probabilities at the intercept; for K = 1 this is the model's Pi.
struct StructuralParams {
  arma::vec omega;   // M
  arma::cube Gamma;  // (T-1) x K x M
  arma::mat Pi;      // M x T

  arma::uword n_high() const { return omega.n_elem; }
  arma::uword n_low() const { return Pi.n_cols; }
  arma::uword n_covariates() const { return Gamma.n_cols; }

  static StructuralParams from_pi(const arma::vec& omega, const arma::mat& Pi);
  static StructuralParams from_gamma(const arma::vec& omega,
                                     const arma::cube& Gamma);
};

// Starting values for the unconditional model.
struct StartingValues {
  arma::vec omega;  // M
  arma::mat Pi;     // M x T
  arma::mat Phi;    // H x T
};

// Log-linear coordinates of the unconditional model, reference class 1 and
// item value 0: alpha_m = log(omega_m/omega_1), gamma_{t|m} =
// log(pi_{t|m}/pi_{1|m}), beta_{h|t} = logit(phi_{h|t}).
struct LogLinearParams {
  arma::vec alpha;  // M-1
  arma::mat gamma;  // (T-1) x M
  arma::mat beta;   // H x T
};

double clamp_prob(double p);
arma::mat clamp_prob_matrix(arma::mat P);
// Clamp entries away from 0/1, then renormalize to sum 1.
arma::vec clamp_simplex(arma::vec p);
arma::mat clamp_simplex_rows(arma::mat P);

// Softmax with an implicit leading zero: eta has length T-1, result is a
// T-simplex with the reference class first.
arma::vec softmax_ref(const arma::vec& eta);

LogLinearParams to_loglinear(const MeasurementParams& meas,
                             const StructuralParams& strct,
                             WarningLog* warnings = nullptr);
std::pair<MeasurementParams, StructuralParams> from_loglinear(
    const LogLinearParams& ll);

}  // namespace mlc
