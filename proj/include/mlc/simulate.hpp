#pragma once

#include <armadillo>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mlc/em_step1.hpp"
#include "mlc/estimators.hpp"
#include "mlc/model.hpp"

namespace mlc {

// One cell of the 36-condition design: 2 high-level x 3 low-level classes,
// 10 items, one standard-normal covariate, crossed over group count, group
// size, and class separation at both levels.
struct SimCondition {
  int id = 0;                   // 1..36
  arma::uword n_low = 0;        // units per group: 100 or 500
  arma::uword J = 0;            // groups: 30, 50 or 100
  double phi_high = 0.0;        // 0.7 / 0.8 / 0.9
  arma::vec intercepts_m1;      // logit intercepts (t=2, t=3) for class m=1
  arma::vec intercepts_m2;      // and for class m=2

  static constexpr arma::uword H = 10;
  static constexpr arma::uword T = 3;
  static constexpr arma::uword M = 2;
  static constexpr double slope_m1 = -0.25;  // both non-reference classes
  static constexpr double slope_m2 = 0.25;

  static SimCondition from_id(int id);
  std::string ll_separation() const;  // small / moderate / large
  std::string hl_separation() const;  // moderate / large
};

struct SimTruth {
  MeasurementParams meas;
  StructuralParams strct;  // omega, Gamma with K columns
};

SimTruth condition_truth(const SimCondition& cond);

// Draws a dataset from the covariate model: W_j categorical on omega,
// covariates standard normal (optionally the first few Bernoulli(1/2)),
// X_ij from the per-unit logit, items Bernoulli given the class profile.
// latent_w/latent_x, when non-null, receive the drawn class labels.
Dataset generate_from(const SimTruth& truth, arma::uword J, arma::uword n_low,
                      std::uint64_t seed, arma::uword n_binary_covariates = 0,
                      arma::uvec* latent_w = nullptr,
                      arma::uvec* latent_x = nullptr);

std::pair<Dataset, SimTruth> generate(const SimCondition& cond,
                                      std::uint64_t seed);

struct ReplicateRecord {
  int condition = 0;
  int replicate = 0;
  Method estimator = Method::two_step;
  bool ok = false;  // fit completed without a hard failure
  bool converged = false;
  double cpu_seconds = 0.0;
  int n_iter = 0;
  arma::vec estimate;        // aligned structural parameters
  arma::vec se;
  arma::vec truth;
  std::vector<char> ci_hit;  // Wald interval at 1.96 covers the truth
  // two-step fits only: the corrected covariance dominates its uncorrected
  // part (elementwise diagonal and PSD difference)
  char se_inflation_ok = 1;
  char correction_psd = 1;
  std::string error;
};

struct CellMetrics {
  int condition = 0;
  Method estimator = Method::two_step;
  std::string parameter;
  double truth = 0.0;
  double mean_bias = 0.0;
  double mc_sd = 0.0;
  double rel_sd_vs_one_step = 0.0;  // NaN when one_step absent
  double coverage = 0.0;
  double mean_cpu = 0.0;
  double convergence_rate = 0.0;
  int n_used = 0;
  int n_failed = 0;
  bool unreliable = false;  // more than 20% hard failures
};

struct StudyMetrics {
  std::vector<ReplicateRecord> replicates;
  std::vector<CellMetrics> cells;
  std::vector<std::string> parameter_names;
};

EmControl study_defaults();

// Per (condition x replicate): generate, fit each estimator on the same data,
// align labels to the truth, record estimates, Wald coverage and per-thread
// CPU time; aggregate per (condition, estimator, parameter). Replicates run
// in parallel; per-replicate seeds come from the master seed, so results do
// not depend on the worker count.
StudyMetrics run_study(const std::vector<int>& conditions, int R,
                       const std::vector<Method>& estimators,
                       std::uint64_t seed, int workers,
                       const EmControl& ctrl = study_defaults());

// include_timing=false masks the CPU-time columns, which are the only
// run-to-run volatile fields; everything else is reproducible byte-for-byte
// for a fixed seed.
void write_replicates_csv(const StudyMetrics& study, std::ostream& os,
                          bool include_timing = true);
void write_metrics_csv(const StudyMetrics& study, std::ostream& os,
                       bool include_timing = true);
void write_metrics_long_csv(const StudyMetrics& study, std::ostream& os,
                            bool include_timing = true);

}  // namespace mlc
