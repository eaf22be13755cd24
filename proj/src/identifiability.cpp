#include "mlc/identifiability.hpp"

#include <cmath>

namespace mlc {

namespace {

arma::uword numerical_rank(const arma::mat& A, double rel_tol) {
  if (A.is_empty()) return 0;
  arma::vec sv = arma::svd(A);
  if (sv.is_empty()) return 0;
  const double cutoff = rel_tol * sv.max();
  return arma::accu(sv > cutoff);
}

}  // namespace

IdentifiabilityReport check_identifiability(const ModelDims& dims,
                                            const MeasurementParams& meas,
                                            const StructuralParams& strct,
                                            const arma::mat* Z) {
  constexpr double kDistinctTol = 1e-8;
  constexpr double kRankTol = 1e-8;

  IdentifiabilityReport rep;

  for (arma::uword h = 0; h < meas.Phi.n_rows; ++h) {
    for (arma::uword t = 0; t + 1 < meas.Phi.n_cols; ++t) {
      for (arma::uword s = t + 1; s < meas.Phi.n_cols; ++s) {
        if (std::abs(meas.Phi(h, t) - meas.Phi(h, s)) <= kDistinctTol) {
          rep.phi_columns_distinct = false;
          rep.violations.push_back(
              "item " + std::to_string(h + 1) + ": response probabilities of classes " +
              std::to_string(t + 1) + " and " + std::to_string(s + 1) +
              " coincide");
        }
      }
    }
  }

  if (numerical_rank(strct.Pi, kRankTol) < dims.M) {
    rep.pi_full_rank = false;
    rep.violations.push_back("Pi does not have full row rank M");
  }

  if (dims.M > dims.T) {
    rep.m_at_most_t = false;
    rep.violations.push_back("more high-level than low-level classes (M > T)");
  }

  if (dims.n.min() < 3) {
    rep.group_sizes_ok = false;
    rep.violations.push_back("some group has fewer than 3 units");
  }

  if (Z != nullptr && !Z->is_empty()) {
    if (numerical_rank(*Z, kRankTol) < Z->n_cols) {
      rep.z_full_rank = false;
      rep.violations.push_back("design matrix Z is column rank deficient");
    }
  }

  return rep;
}

}  // namespace mlc
