#pragma once

#include <armadillo>
#include <string>
#include <vector>

#include "mlc/model.hpp"
#include "mlc/posterior.hpp"

namespace mlc {

// Flattening order used everywhere a parameter vector or covariance over the
// structural parameters appears: alpha_2..alpha_M, then the logit
// coefficients row-major by (m, t, k), then (for full stacks) the item
// log-odds row-major by (t, h). Reference categories are class 1 and item
// value 0.
arma::uword theta2_size(arma::uword T, arma::uword M, arma::uword K);
std::vector<std::string> theta2_labels(arma::uword T, arma::uword M,
                                       arma::uword K);
arma::vec flatten_theta2(const StructuralParams& strct);

// Per-unit score contributions in log-linear coordinates. The group-level
// alpha score is attributed to units as (u_{j,m} - omega_m)/n_j, so unit
// contributions sum to the group score.
struct ScoreBlocks {
  arma::mat alpha;  // N x (M-1)
  arma::mat gamma;  // N x (T-1)*M*K
  arma::mat beta;   // N x H*T
  arma::mat theta2() const { return arma::join_rows(alpha, gamma); }
  arma::mat all() const { return arma::join_rows(alpha, gamma, beta); }
};

// Scores of the unconditional model at (omega, Pi, Phi), using posteriors
// computed at the same parameters (K = 1 layout for the gamma block).
ScoreBlocks score_step1(const Dataset& data, const MeasurementParams& meas,
                        const StructuralParams& strct, const Posteriors& post);

// Scores of the covariate model at (Phi, omega, Gamma): the gamma block picks
// up the covariate vector, the beta block is evaluated at the fixed
// measurement parameters (needed for the cross-information term).
ScoreBlocks score_step2(const Dataset& data, const MeasurementParams& meas,
                        const StructuralParams& strct, const Posteriors& post);

struct CovarianceEstimate {
  arma::mat I22;      // OPG of the structural score
  arma::mat I21;      // cross OPG, structural x measurement
  arma::mat Sigma11;  // asymptotic covariance of the step-1 estimator
  arma::mat V2;       // inv(I22)
  arma::mat V1;       // V2 * I21 * Sigma11 * I21' * V2
  arma::mat V;        // V2 + V1
  arma::vec se;       // sqrt(diag(V)/N)
  WarningLog warnings;
};

arma::mat opg(const arma::mat& scores, arma::uword N);  // scores'scores / N

// Two-step covariance: I22 and I21 from the step-2 scores, Sigma11 as the
// measurement block of the inverted full step-1 OPG. Inversions fall back to
// a 1e-10 ridge with a warning; singularity beyond that is fatal.
CovarianceEstimate corrected_covariance(const ScoreBlocks& step1,
                                        const ScoreBlocks& step2,
                                        arma::uword N);
CovarianceEstimate corrected_covariance(const arma::mat& Sigma11,
                                        const ScoreBlocks& step2,
                                        arma::uword N);

// inv(I22) only; used where no correction is available.
CovarianceEstimate naive_covariance(const ScoreBlocks& step2, arma::uword N);

// Covariance of the structural block of a joint ML fit: invert the OPG of the
// full stacked score and keep the structural sub-block.
CovarianceEstimate full_ml_covariance(const ScoreBlocks& scores,
                                      arma::uword N);

}  // namespace mlc
