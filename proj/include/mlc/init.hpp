#pragma once

#include <armadillo>
#include <cstdint>

#include "mlc/em_step1.hpp"
#include "mlc/model.hpp"

namespace mlc {

struct KModesResult {
  arma::uvec assignment;  // length N, values 0..K-1
  arma::umat modes;       // K x H binary mode vectors
  double cost = 0.0;      // total simple-matching dissimilarity
  int n_iter = 0;
  WarningLog warnings;
};

// Lloyd-style K-modes on binary rows: assign to the nearest mode by Hamming
// distance (ties -> lowest class index), update modes to the column-wise
// majority (ties -> 1). Keeps the lowest-cost solution over `restarts`
// seeded restarts.
KModesResult kmodes(const arma::mat& Y, arma::uword K, std::uint64_t seed,
                    int max_iter = 50, int restarts = 5);

// Pooled T-class latent class fit ignoring the grouping (the M = 1 special
// case), started from a K-modes partition with K = T.
Step1Fit single_level_lca(const Dataset& data, arma::uword T,
                          const EmControl& ctrl);

// Lighter EM settings for fits that only produce starting values.
EmControl init_inner_defaults();

// Hierarchical starting values: K-modes with K = M gives per-group modal
// high-level assignments and omega; a pooled T-class fit gives Phi; the
// cross-tabulation of its MAP classes against the K-modes groups gives Pi.
// High-level classes are ordered by decreasing omega, low-level classes by
// decreasing mean response probability.
StartingValues hierarchical_init(const Dataset& data, const ModelDims& dims,
                                 std::uint64_t seed,
                                 const EmControl& inner_ctrl = init_inner_defaults(),
                                 WarningLog* warnings = nullptr);

// Sorts low-level classes by decreasing column mean of Phi and permutes Pi
// (and Gamma when present) consistently. Returns the permutation: new class t
// is old class perm[t]. Near-ties keep the stable order and warn.
arma::uvec reorder_classes(MeasurementParams& meas, StructuralParams& strct,
                           WarningLog* warnings = nullptr);

}  // namespace mlc
