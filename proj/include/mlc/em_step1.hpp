#pragma once

#include <armadillo>
#include <cstdint>
#include <tuple>
#include <vector>

#include "mlc/model.hpp"
#include "mlc/posterior.hpp"

namespace mlc {

struct EmControl {
  int max_iter = 1000;
  double tol = 1e-8;          // relative log-likelihood change
  int n_starts = 10;          // random starts in addition to the supplied one
  std::uint64_t seed = 1;
  int n_threads = 1;

  double nr_tol = 1e-8;       // gradient inf-norm exit for the logit solver
  int nr_max_iter = 100;

  void validate() const;
};

struct Step1Fit {
  arma::vec omega;  // M
  arma::mat Pi;     // M x T
  arma::mat Phi;    // H x T

  std::vector<double> loglik_trace;  // loglik_trace[0] is the starting value
  bool converged = false;
  int n_iter = 0;
  int best_start_index = 0;  // 0 = supplied start, 1.. = random starts
  double elapsed = 0.0;
  WarningLog warnings;

  double loglik() const { return loglik_trace.back(); }
};

// Closed-form M-step of the unconditional model. Outputs are clamped to the
// interior and renormalized. A class whose posterior mass falls below 1e-12
// raises NumericalError.
std::tuple<arma::vec, arma::mat, arma::mat> m_step_unconditional(
    const Posteriors& post, const Dataset& data, WarningLog* warnings = nullptr);

// Which parameter blocks an EM pass updates; used by estimation strategies
// that freeze part of the model.
struct UncondPhase {
  bool update_phi = true;
  bool update_struct = true;  // omega and Pi
};

// Single-start EM for the unconditional model.
Step1Fit em_unconditional(const Dataset& data, const ModelDims& dims,
                          const StartingValues& start, const EmControl& ctrl,
                          const UncondPhase& phase = {});

// Multi-start EM: the supplied start plus ctrl.n_starts random starts; returns
// the solution with the highest final log-likelihood. Starts that hit a
// degenerate class are dropped with a warning.
Step1Fit fit_unconditional(const Dataset& data, const ModelDims& dims,
                           const StartingValues& start, const EmControl& ctrl);

// Random starting values, interior by construction.
StartingValues random_start(const ModelDims& dims, std::uint64_t seed);

}  // namespace mlc
