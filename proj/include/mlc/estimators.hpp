#pragma once

#include <armadillo>
#include <string>
#include <vector>

#include "mlc/em_step1.hpp"
#include "mlc/em_step2.hpp"
#include "mlc/model.hpp"
#include "mlc/posterior.hpp"
#include "mlc/variance.hpp"

namespace mlc {

enum class Method { one_step, two_step, two_stage };
enum class CovTag { corrected, naive, full_ml };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(CovTag t);

struct PhaseInfo {
  std::string name;
  int n_iter = 0;
  double elapsed = 0.0;
  bool converged = false;
  std::vector<double> loglik_trace;
};

struct FitResult {
  Method method = Method::two_step;
  ModelDims dims;
  MeasurementParams meas;    // estimated (or frozen) measurement model
  StructuralParams strct;    // omega and Gamma
  arma::vec theta2;          // flattened structural parameters
  arma::mat covariance;      // over theta2, log-linear coordinates
  arma::mat covariance_naive;  // the uncorrected part (equals covariance
                               // unless the tag is "corrected")
  CovTag cov_tag = CovTag::corrected;
  arma::vec se;              // sqrt(diag(covariance)/N)
  arma::vec se_naive;
  double loglik = 0.0;       // covariate-model log-likelihood at the estimates
  Posteriors post;           // posteriors at the estimates (covariate model)
  std::vector<PhaseInfo> phases;
  bool converged = false;
  WarningLog warnings;

  int total_iterations() const;
  double total_elapsed() const;
};

// Step 1 fits the unconditional model by multi-start EM; step 2 freezes the
// measurement estimates and fits the structural model; standard errors carry
// the step-1 sampling variability.
FitResult fit_two_step(const Dataset& data, const ModelDims& dims,
                       const EmControl& ctrl);

// Joint ML over all parameters by multi-start EM; standard errors from the
// inverted OPG of the full score.
FitResult fit_one_step(const Dataset& data, const ModelDims& dims,
                       const EmControl& ctrl);

// Measurement model built in three passes (pooled fit, structural-only
// refresh, measurement-only refresh) before the structural step; standard
// errors are uncorrected.
FitResult fit_two_stage(const Dataset& data, const ModelDims& dims,
                        const EmControl& ctrl);

FitResult fit(Method method, const Dataset& data, const ModelDims& dims,
              const EmControl& ctrl);

// Label alignment onto a reference labeling: low-level classes matched by
// minimal total-variation distance between response-probability columns,
// high-level classes by the same criterion on the intercept-implied class
// distributions. theta2 and its covariance transform linearly under
// relabeling (reference-class changes subtract coefficient rows), so A maps
// estimates and A V A' maps covariances.
struct LabelAlignment {
  arma::uvec perm_t;  // new class t is old class perm_t[t]
  arma::uvec perm_m;
  arma::mat A;        // theta2_new = A * theta2_old
};

LabelAlignment align_labels(const arma::mat& Phi_est, const arma::mat& Pi_est,
                            const arma::mat& Phi_ref, const arma::mat& Pi_ref,
                            arma::uword K);

// Applies an alignment to a fit: permutes Phi columns, omega, Gamma slices
// and rows, and maps theta2/covariance/se through A.
void apply_alignment(FitResult& fit, const LabelAlignment& align);

}  // namespace mlc
