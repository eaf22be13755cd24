#pragma once

#include <armadillo>
#include <vector>

#include "mlc/em_step1.hpp"
#include "mlc/model.hpp"
#include "mlc/posterior.hpp"

namespace mlc {

struct Step2Fit {
  arma::vec omega;   // M
  arma::cube Gamma;  // (T-1) x K x M

  std::vector<double> loglik_trace;
  bool converged = false;
  int n_iter = 0;
  double elapsed = 0.0;
  WarningLog warnings;

  double loglik() const { return loglik_trace.back(); }
};

// Maximizes sum_i w_i sum_t Q(i,t) log pi_t(z_i; Gamma) over Gamma by Fisher
// scoring with step halving, where pi is the reference-class multinomial
// logit. Exits when the gradient infinity-norm falls below tol; throws
// NumericalError after max_iter iterations without reaching it. Coefficients
// beyond +-30 are capped with a warning (quasi-separation). If the weights
// sum to ~0 the start is returned unchanged with a warning.
arma::mat weighted_multinomial_fit(const arma::mat& Z, const arma::mat& Q,
                                   const arma::vec& w, arma::mat Gamma,
                                   double tol = 1e-8, int max_iter = 100,
                                   WarningLog* warnings = nullptr);

// EM for the structural model with the measurement model frozen: the M-step
// updates omega in closed form and solves the M decoupled weighted
// multinomial systems, one per high-level class.
Step2Fit fit_structural(const Dataset& data, const MeasurementParams& phi_fixed,
                        const arma::vec& omega0, const arma::cube& Gamma0,
                        const EmControl& ctrl);

// Starting values for the structural step from unconditional estimates:
// intercepts log(pi_{t|m}/pi_{1|m}), all other coefficients zero.
arma::cube structural_start(const arma::mat& Pi, arma::uword K);

}  // namespace mlc
