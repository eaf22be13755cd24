#pragma once

#include <armadillo>

#include "mlc/model.hpp"

namespace mlc {

// conditional: low-level class probabilities depend on covariates through
// Gamma and Z; unconditional: they are the rows of Pi.
enum class Mode { unconditional, conditional };

// E-step quantities. u(j,m) = P(W_j = m | data of group j); q(i,t,m) =
// P(X_i = t | W = m, Y_i); v(i,t,m) = u(group(i),m) * q(i,t,m). loglik is the
// observed-data log-likelihood at the supplied parameters.
struct Posteriors {
  arma::mat u;   // J x M
  arma::cube q;  // N x T x M
  arma::cube v;  // N x T x M
  double loglik = 0.0;
};

// (i,t) entry: sum_h [ y log phi_{h|t} + (1-y) log(1-phi_{h|t}) ].
arma::mat item_logdensity(const Dataset& data, const MeasurementParams& meas);

// Upward-downward E-step, entirely in log domain. Per-unit mixture terms
// log sum_t exp(log pi + logdens) are accumulated over the units of each
// group, then normalized over m by log-sum-exp; group contributions are
// reduced in fixed group order.
Posteriors e_step(const Dataset& data, const MeasurementParams& meas,
                  const StructuralParams& strct, Mode mode, int n_threads = 1);

double loglik(const Dataset& data, const MeasurementParams& meas,
              const StructuralParams& strct, Mode mode, int n_threads = 1);

// Variants reusing a precomputed item_logdensity; used by EM loops where the
// measurement model stays fixed across iterations.
Posteriors e_step_with_logdensity(const Dataset& data, const arma::mat& logdens,
                                  const StructuralParams& strct, Mode mode,
                                  int n_threads = 1);
double loglik_with_logdensity(const Dataset& data, const arma::mat& logdens,
                              const StructuralParams& strct, Mode mode,
                              int n_threads = 1);

}  // namespace mlc
