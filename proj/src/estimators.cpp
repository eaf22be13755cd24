#include "mlc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mlc/identifiability.hpp"
#include "mlc/init.hpp"
#include "mlc/parallel.hpp"
#include "mlc/rng.hpp"

namespace mlc {

std::string to_string(Method m) {
  switch (m) {
    case Method::one_step: return "one_step";
    case Method::two_step: return "two_step";
    case Method::two_stage: return "two_stage";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "one_step") return Method::one_step;
  if (s == "two_step") return Method::two_step;
  if (s == "two_stage") return Method::two_stage;
  throw DataError("unknown estimator '" + s + "'");
}

std::string to_string(CovTag t) {
  switch (t) {
    case CovTag::corrected: return "corrected";
    case CovTag::naive: return "naive";
    case CovTag::full_ml: return "full_ML";
  }
  return "?";
}

int FitResult::total_iterations() const {
  int n = 0;
  for (const auto& p : phases) n += p.n_iter;
  return n;
}

double FitResult::total_elapsed() const {
  double s = 0.0;
  for (const auto& p : phases) s += p.elapsed;
  return s;
}

namespace {

void require_full_rank_design(const Dataset& data) {
  const arma::vec sv = arma::svd(data.Z);
  if (sv.is_empty() || sv.min() <= 1e-8 * sv.max())
    throw NumericalError("design matrix is column rank deficient");
}

void identifiability_warnings(const Dataset& data, const ModelDims& dims,
                              const MeasurementParams& meas,
                              const StructuralParams& strct, WarningLog& log) {
  const IdentifiabilityReport rep =
      check_identifiability(dims, meas, strct, &data.Z);
  for (const auto& v : rep.violations)
    log.push_back("identifiability: " + v);
}

PhaseInfo phase_of(const std::string& name, const Step1Fit& fit) {
  return {name, fit.n_iter, fit.elapsed, fit.converged, fit.loglik_trace};
}

PhaseInfo phase_of(const std::string& name, const Step2Fit& fit) {
  return {name, fit.n_iter, fit.elapsed, fit.converged, fit.loglik_trace};
}

}  // namespace

FitResult fit_two_step(const Dataset& data, const ModelDims& dims,
                       const EmControl& ctrl) {
  require_full_rank_design(data);
  FitResult out;
  out.method = Method::two_step;
  out.dims = dims;

  const StartingValues start = hierarchical_init(data, dims, ctrl.seed,
                                                 init_inner_defaults(),
                                                 &out.warnings);
  const Step1Fit step1 = fit_unconditional(data, dims, start, ctrl);
  out.phases.push_back(phase_of("step1", step1));

  const arma::cube Gamma0 = structural_start(step1.Pi, dims.K);
  const Step2Fit step2 =
      fit_structural(data, {step1.Phi}, step1.omega, Gamma0, ctrl);
  out.phases.push_back(phase_of("step2", step2));

  out.meas = {step1.Phi};
  out.strct = StructuralParams::from_gamma(step2.omega, step2.Gamma);
  out.theta2 = flatten_theta2(out.strct);
  out.post = e_step(data, out.meas, out.strct, Mode::conditional,
                    ctrl.n_threads);
  out.loglik = out.post.loglik;

  const Posteriors post1 =
      e_step(data, out.meas, StructuralParams::from_pi(step1.omega, step1.Pi),
             Mode::unconditional, ctrl.n_threads);
  const ScoreBlocks s1 = score_step1(
      data, out.meas, StructuralParams::from_pi(step1.omega, step1.Pi), post1);
  const ScoreBlocks s2 = score_step2(data, out.meas, out.strct, out.post);
  CovarianceEstimate cov = corrected_covariance(s1, s2, data.n_units());
  out.covariance = cov.V;
  out.covariance_naive = cov.V2;
  out.se = cov.se;
  out.se_naive = arma::sqrt(cov.V2.diag() / static_cast<double>(data.n_units()));
  out.cov_tag = CovTag::corrected;

  out.converged = step1.converged && step2.converged;
  out.warnings.insert(out.warnings.end(), step1.warnings.begin(),
                      step1.warnings.end());
  out.warnings.insert(out.warnings.end(), step2.warnings.begin(),
                      step2.warnings.end());
  out.warnings.insert(out.warnings.end(), cov.warnings.begin(),
                      cov.warnings.end());
  identifiability_warnings(data, dims, out.meas, out.strct, out.warnings);
  return out;
}

namespace {

// Joint EM over all parameter blocks from a single start.
struct OneStepRun {
  arma::vec omega;
  arma::mat Phi;
  arma::cube Gamma;
  std::vector<double> trace;
  bool converged = false;
  WarningLog warnings;
};

OneStepRun one_step_em(const Dataset& data, const ModelDims& dims,
                       const StartingValues& start, const EmControl& ctrl) {
  OneStepRun run;
  run.omega = clamp_simplex(start.omega);
  run.Phi = clamp_prob_matrix(start.Phi);
  run.Gamma = structural_start(start.Pi, dims.K);

  arma::mat logdens = item_logdensity(data, {run.Phi});
  StructuralParams strct = StructuralParams::from_gamma(run.omega, run.Gamma);
  Posteriors post = e_step_with_logdensity(data, logdens, strct,
                                           Mode::conditional, ctrl.n_threads);
  run.trace.push_back(post.loglik);

  for (int it = 1; it <= ctrl.max_iter; ++it) {
    auto [omega_new, Pi_unused, Phi_new] = m_step_unconditional(post, data);
    (void)Pi_unused;
    run.omega = std::move(omega_new);
    run.Phi = std::move(Phi_new);
    logdens = item_logdensity(data, {run.Phi});

    arma::mat w_units(data.n_units(), dims.M);
    for (arma::uword m = 0; m < dims.M; ++m)
      for (arma::uword j = 0; j < data.n_groups(); ++j)
        w_units.col(m)
            .subvec(data.offsets[j], data.offsets[j + 1] - 1)
            .fill(post.u(j, m));
    for (arma::uword m = 0; m < dims.M; ++m)
      run.Gamma.slice(m) = weighted_multinomial_fit(
          data.Z, post.q.slice(m), w_units.col(m), run.Gamma.slice(m),
          ctrl.nr_tol, ctrl.nr_max_iter, &run.warnings);

    strct = StructuralParams::from_gamma(run.omega, run.Gamma);
    post = e_step_with_logdensity(data, logdens, strct, Mode::conditional,
                                  ctrl.n_threads);
    const double prev = run.trace.back();
    run.trace.push_back(post.loglik);
    if (std::abs(post.loglik - prev) / (1.0 + std::abs(post.loglik)) <
        ctrl.tol) {
      run.converged = true;
      break;
    }
  }
  return run;
}

}  // namespace

FitResult fit_one_step(const Dataset& data, const ModelDims& dims,
                       const EmControl& ctrl) {
  require_full_rank_design(data);
  const Stopwatch timer;
  FitResult out;
  out.method = Method::one_step;
  out.dims = dims;

  const StartingValues hier = hierarchical_init(data, dims, ctrl.seed,
                                                init_inner_defaults(),
                                                &out.warnings);
  const int n_starts = ctrl.n_starts + 1;
  std::vector<OneStepRun> runs(n_starts);
  std::vector<std::string> failures(n_starts);
  std::vector<char> ok(n_starts, 0);
  parallel_for(n_starts, ctrl.n_threads, [&](std::size_t s) {
    EmControl local = ctrl;
    local.n_threads = 1;
    const StartingValues sv =
        s == 0 ? hier : random_start(dims, derive_seed(ctrl.seed, s));
    try {
      runs[s] = one_step_em(data, dims, sv, local);
      ok[s] = 1;
    } catch (const NumericalError& e) {
      failures[s] = e.what();
    }
  });

  int best = -1;
  for (int s = 0; s < n_starts; ++s) {
    if (!ok[s]) continue;
    if (best < 0 || runs[s].trace.back() > runs[best].trace.back()) best = s;
  }
  if (best < 0)
    throw NumericalError("fit_one_step: all starts failed (" + failures[0] +
                         ")");
  OneStepRun& run = runs[best];
  for (int s = 0; s < n_starts; ++s)
    if (!ok[s])
      out.warnings.push_back("start " + std::to_string(s) +
                             " abandoned: " + failures[s]);

  out.meas = {run.Phi};
  out.strct = StructuralParams::from_gamma(run.omega, run.Gamma);
  out.theta2 = flatten_theta2(out.strct);
  out.post = e_step(data, out.meas, out.strct, Mode::conditional,
                    ctrl.n_threads);
  out.loglik = out.post.loglik;
  out.converged = run.converged;

  PhaseInfo phase{"em", static_cast<int>(run.trace.size()) - 1, timer.seconds(),
                  run.converged, run.trace};
  out.phases.push_back(std::move(phase));

  const ScoreBlocks s = score_step2(data, out.meas, out.strct, out.post);
  CovarianceEstimate cov = full_ml_covariance(s, data.n_units());
  out.covariance = cov.V;
  out.covariance_naive = cov.V;
  out.se = cov.se;
  out.se_naive = cov.se;
  out.cov_tag = CovTag::full_ml;

  out.warnings.insert(out.warnings.end(), run.warnings.begin(),
                      run.warnings.end());
  out.warnings.insert(out.warnings.end(), cov.warnings.begin(),
                      cov.warnings.end());
  identifiability_warnings(data, dims, out.meas, out.strct, out.warnings);
  return out;
}

FitResult fit_two_stage(const Dataset& data, const ModelDims& dims,
                        const EmControl& ctrl) {
  require_full_rank_design(data);
  FitResult out;
  out.method = Method::two_stage;
  out.dims = dims;

  // stage A, pass 1: pooled low-level fit for an initial measurement model
  const Step1Fit pooled = single_level_lca(data, dims.T, ctrl);
  out.phases.push_back(phase_of("stage_a_pooled", pooled));

  // stage A, pass 2a: structural refresh with the measurement model frozen
  StartingValues sv = hierarchical_init(data, dims, ctrl.seed,
                                        init_inner_defaults(), &out.warnings);
  sv.Phi = pooled.Phi;
  EmControl single = ctrl;
  const Step1Fit pass_2a =
      em_unconditional(data, dims, sv, single, {/*phi*/ false, /*struct*/ true});
  out.phases.push_back(phase_of("stage_a_struct", pass_2a));

  // stage A, pass 2b: measurement refresh with the structural block frozen
  StartingValues sv_b{pass_2a.omega, pass_2a.Pi, pass_2a.Phi};
  const Step1Fit pass_2b =
      em_unconditional(data, dims, sv_b, single, {/*phi*/ true, /*struct*/ false});
  out.phases.push_back(phase_of("stage_a_meas", pass_2b));

  // stage B: structural model given the stage-A measurement estimates
  const arma::cube Gamma0 = structural_start(pass_2a.Pi, dims.K);
  const Step2Fit stage_b =
      fit_structural(data, {pass_2b.Phi}, pass_2a.omega, Gamma0, ctrl);
  out.phases.push_back(phase_of("stage_b", stage_b));

  out.meas = {pass_2b.Phi};
  out.strct = StructuralParams::from_gamma(stage_b.omega, stage_b.Gamma);
  out.theta2 = flatten_theta2(out.strct);
  out.post = e_step(data, out.meas, out.strct, Mode::conditional,
                    ctrl.n_threads);
  out.loglik = out.post.loglik;

  const ScoreBlocks s2 = score_step2(data, out.meas, out.strct, out.post);
  CovarianceEstimate cov = naive_covariance(s2, data.n_units());
  out.covariance = cov.V;
  out.covariance_naive = cov.V;
  out.se = cov.se;
  out.se_naive = cov.se;
  out.cov_tag = CovTag::naive;

  out.converged = pooled.converged && pass_2a.converged && pass_2b.converged &&
                  stage_b.converged;
  for (const WarningLog* w : {&pooled.warnings, &pass_2a.warnings,
                              &pass_2b.warnings, &stage_b.warnings,
                              const_cast<const WarningLog*>(&cov.warnings)})
    out.warnings.insert(out.warnings.end(), w->begin(), w->end());
  identifiability_warnings(data, dims, out.meas, out.strct, out.warnings);
  return out;
}

FitResult fit(Method method, const Dataset& data, const ModelDims& dims,
              const EmControl& ctrl) {
  switch (method) {
    case Method::one_step: return fit_one_step(data, dims, ctrl);
    case Method::two_step: return fit_two_step(data, dims, ctrl);
    case Method::two_stage: return fit_two_stage(data, dims, ctrl);
  }
  throw DataError("unknown estimator");
}

namespace {

double column_tv(const arma::vec& a, const arma::vec& b) {
  return arma::accu(arma::abs(a - b));
}

// exhaustive search over permutations; class counts are small
arma::uvec best_permutation(arma::uword n,
                            const std::function<double(const arma::uvec&)>& cost) {
  std::vector<arma::uword> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  arma::uvec best(idx);
  double best_cost = cost(best);
  while (std::next_permutation(idx.begin(), idx.end())) {
    const arma::uvec cand(idx);
    const double c = cost(cand);
    if (c < best_cost) {
      best_cost = c;
      best = cand;
    }
  }
  return best;
}

}  // namespace

LabelAlignment align_labels(const arma::mat& Phi_est, const arma::mat& Pi_est,
                            const arma::mat& Phi_ref, const arma::mat& Pi_ref,
                            arma::uword K) {
  const arma::uword T = Phi_ref.n_cols;
  const arma::uword M = Pi_ref.n_rows;

  LabelAlignment out;
  out.perm_t = best_permutation(T, [&](const arma::uvec& p) {
    double c = 0.0;
    for (arma::uword t = 0; t < T; ++t)
      c += column_tv(Phi_est.col(p[t]), Phi_ref.col(t));
    return c;
  });
  out.perm_m = best_permutation(M, [&](const arma::uvec& p) {
    double c = 0.0;
    for (arma::uword m = 0; m < M; ++m)
      for (arma::uword t = 0; t < T; ++t)
        c += std::abs(Pi_est(p[m], out.perm_t[t]) - Pi_ref(m, t));
    return c;
  });

  const arma::uword p2 = theta2_size(T, M, K);
  out.A.zeros(p2, p2);
  auto alpha_idx = [&](arma::uword m) { return m - 1; };  // m >= 1
  auto gamma_idx = [&](arma::uword m, arma::uword t, arma::uword k) {
    return (M - 1) + m * (T - 1) * K + (t - 1) * K + k;
  };

  for (arma::uword m = 1; m < M; ++m) {
    const arma::uword om = out.perm_m[m];
    const arma::uword o0 = out.perm_m[0];
    if (om > 0) out.A(alpha_idx(m), alpha_idx(om)) += 1.0;
    if (o0 > 0) out.A(alpha_idx(m), alpha_idx(o0)) -= 1.0;
  }
  for (arma::uword m = 0; m < M; ++m) {
    const arma::uword om = out.perm_m[m];
    for (arma::uword t = 1; t < T; ++t) {
      const arma::uword ot = out.perm_t[t];
      const arma::uword o0 = out.perm_t[0];
      for (arma::uword k = 0; k < K; ++k) {
        const arma::uword row = gamma_idx(m, t, k);
        if (ot > 0) out.A(row, gamma_idx(om, ot, k)) += 1.0;
        if (o0 > 0) out.A(row, gamma_idx(om, o0, k)) -= 1.0;
      }
    }
  }
  return out;
}

void apply_alignment(FitResult& fit, const LabelAlignment& align) {
  const arma::uword T = fit.dims.T;
  const arma::uword M = fit.dims.M;
  const arma::uword K = fit.dims.K;

  fit.meas.Phi = fit.meas.Phi.cols(align.perm_t);

  arma::vec omega(M);
  for (arma::uword m = 0; m < M; ++m) omega[m] = fit.strct.omega[align.perm_m[m]];
  arma::cube Gamma(T - 1, K, M);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::mat& old = fit.strct.Gamma.slice(align.perm_m[m]);
    for (arma::uword t = 1; t < T; ++t) {
      arma::rowvec row(K, arma::fill::zeros);
      if (align.perm_t[t] > 0) row += old.row(align.perm_t[t] - 1);
      if (align.perm_t[0] > 0) row -= old.row(align.perm_t[0] - 1);
      Gamma.slice(m).row(t - 1) = row;
    }
  }
  fit.strct = StructuralParams::from_gamma(omega, Gamma);
  fit.theta2 = align.A * fit.theta2;
  fit.covariance = align.A * fit.covariance * align.A.t();
  fit.covariance_naive = align.A * fit.covariance_naive * align.A.t();
  const double N = static_cast<double>(fit.dims.N());
  fit.se = arma::sqrt(fit.covariance.diag() / N);
  fit.se_naive = arma::sqrt(fit.covariance_naive.diag() / N);
  // posteriors keep the original labeling; consumers needing aligned
  // posteriors should re-run the E-step at the aligned parameters
}

}  // namespace mlc
