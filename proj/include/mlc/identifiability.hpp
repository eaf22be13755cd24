#pragma once

#include <armadillo>
#include <string>
#include <vector>

#include "mlc/model.hpp"

namespace mlc {

// Checkable preconditions for identification of the unconditional model and
// its covariate extension. The report only lists violations; callers decide
// whether to proceed.
struct IdentifiabilityReport {
  bool phi_columns_distinct = true;  // response profiles differ across classes
  bool pi_full_rank = true;          // rank(Pi) == M
  bool m_at_most_t = true;
  bool group_sizes_ok = true;        // min_j n_j >= 3
  bool z_full_rank = true;           // trivially true when Z not supplied
  std::vector<std::string> violations;

  bool identified() const {
    return phi_columns_distinct && pi_full_rank && m_at_most_t &&
           group_sizes_ok && z_full_rank;
  }
};

// Tolerances: entries of Phi count as distinct when they differ by more than
// 1e-8; numerical rank uses singular values above 1e-8 relative to the
// largest one.
IdentifiabilityReport check_identifiability(const ModelDims& dims,
                                            const MeasurementParams& meas,
                                            const StructuralParams& strct,
                                            const arma::mat* Z = nullptr);

}  // namespace mlc
