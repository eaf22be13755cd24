#include "mlc/em_step2.hpp"

#include <cmath>
#include <cstdio>

#include "mlc/identifiability.hpp"
#include "mlc/parallel.hpp"

namespace mlc {

namespace {

constexpr double kCoefCap = 30.0;

// Blocked accumulation keeps the rounding floor of the gradient well below
// the exit tolerance even for very long columns.
arma::vec blocked_crossprod(const arma::mat& Z, const arma::vec& r) {
  constexpr arma::uword B = 1024;
  arma::vec acc(Z.n_cols, arma::fill::zeros);
  for (arma::uword start = 0; start < Z.n_rows; start += B) {
    const arma::uword end = std::min(Z.n_rows, start + B) - 1;
    acc += Z.rows(start, end).t() * r.subvec(start, end);
  }
  return acc;
}

// Class probabilities P (N x T) under the reference-class logit, plus the
// weighted soft-target objective value.
double logit_objective(const arma::mat& Z, const arma::mat& Q,
                       const arma::vec& w, const arma::mat& Gamma,
                       arma::mat& P) {
  const arma::uword N = Z.n_rows;
  const arma::uword T = Gamma.n_rows + 1;
  arma::mat eta(N, T);
  eta.col(0).zeros();
  for (arma::uword t = 1; t < T; ++t) eta.col(t) = Z * Gamma.row(t - 1).t();

  arma::vec mx = eta.col(0);
  for (arma::uword t = 1; t < T; ++t) mx = arma::max(mx, arma::vec(eta.col(t)));
  arma::vec s(N, arma::fill::zeros);
  for (arma::uword t = 0; t < T; ++t) s += arma::exp(eta.col(t) - mx);
  const arma::vec lse = mx + arma::log(s);

  P = arma::exp(eta.each_col() - lse);
  double obj = 0.0;
  for (arma::uword t = 0; t < T; ++t)
    obj += arma::accu(w % Q.col(t) % (eta.col(t) - lse));
  return obj;
}

}  // namespace

arma::mat weighted_multinomial_fit(const arma::mat& Z, const arma::mat& Q,
                                   const arma::vec& w, arma::mat Gamma,
                                   double tol, int max_iter,
                                   WarningLog* warnings) {
  const arma::uword K = Z.n_cols;
  const arma::uword T = Q.n_cols;
  if (T < 2) return Gamma;
  if (Gamma.n_rows != T - 1 || Gamma.n_cols != K)
    throw NumericalError("weighted_multinomial_fit: start must be (T-1) x K");

  if (arma::accu(w) < 1e-12) {
    warn(warnings,
         "weighted_multinomial_fit: vacuous system (all weights ~0); start "
         "returned unchanged");
    return Gamma;
  }

  const arma::uword p = (T - 1) * K;
  arma::mat P;
  double obj = logit_objective(Z, Q, w, Gamma, P);
  bool capped = false;

  for (int it = 0; it < max_iter; ++it) {
    arma::vec g(p);
    for (arma::uword t = 1; t < T; ++t)
      g.subvec((t - 1) * K, t * K - 1) =
          blocked_crossprod(Z, w % (Q.col(t) - P.col(t)));
    const double g_inf = arma::abs(g).max();
    if (g_inf < tol) return Gamma;

    // expected information; positive semidefinite by construction
    arma::mat F(p, p);
    for (arma::uword t = 1; t < T; ++t) {
      for (arma::uword s = t; s < T; ++s) {
        const arma::vec c = (t == s)
                                ? arma::vec(w % P.col(t) % (1.0 - P.col(t)))
                                : arma::vec(-w % P.col(t) % P.col(s));
        const arma::mat block = Z.t() * (Z.each_col() % c);
        F.submat((t - 1) * K, (s - 1) * K, t * K - 1, s * K - 1) = block;
        if (s != t)
          F.submat((s - 1) * K, (t - 1) * K, s * K - 1, t * K - 1) = block.t();
      }
    }

    arma::vec step;
    if (!arma::solve(step, F, g, arma::solve_opts::likely_sympd)) {
      F.diag() += 1e-10 * (1.0 + arma::abs(F.diag()).max());
      if (!arma::solve(step, F, g))
        throw NumericalError(
            "weighted_multinomial_fit: singular information matrix");
    }

    // step halving keeps the weighted objective non-decreasing; the
    // acceptance slack covers the rounding noise of the objective itself,
    // which otherwise blocks the final quadratic-convergence steps
    const double noise = 4.0 * 2.22e-16 * (1.0 + std::abs(obj));
    double lambda = 1.0;
    arma::mat Gamma_try;
    double obj_try = obj;
    bool accepted = false;
    for (int h = 0; h < 20; ++h) {
      Gamma_try = Gamma + lambda * arma::reshape(step, K, T - 1).t();
      obj_try = logit_objective(Z, Q, w, Gamma_try, P);
      if (obj_try >= obj - noise - 1e-12) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      // no ascent left at machine precision
      logit_objective(Z, Q, w, Gamma, P);
      return Gamma;
    }
    Gamma = Gamma_try;
    obj = obj_try;

    if (arma::abs(Gamma).max() > kCoefCap) {
      Gamma = arma::clamp(Gamma, -kCoefCap, kCoefCap);
      obj = logit_objective(Z, Q, w, Gamma, P);
      capped = true;
    }
  }

  if (capped) {
    warn(warnings,
         "weighted_multinomial_fit: quasi-separation, coefficients capped at "
         "+-30");
    return Gamma;
  }

  arma::vec g(p);
  for (arma::uword t = 1; t < T; ++t)
    g.subvec((t - 1) * K, t * K - 1) =
        blocked_crossprod(Z, w % (Q.col(t) - P.col(t)));
  char norm[32];
  std::snprintf(norm, sizeof(norm), "%.3e", arma::abs(g).max());
  throw NumericalError("weighted_multinomial_fit: no convergence in " +
                       std::to_string(max_iter) +
                       " iterations, gradient inf-norm=" + norm);
}

arma::cube structural_start(const arma::mat& Pi, arma::uword K) {
  const arma::uword M = Pi.n_rows;
  const arma::uword T = Pi.n_cols;
  arma::cube Gamma(T > 0 ? T - 1 : 0, K, M, arma::fill::zeros);
  for (arma::uword m = 0; m < M; ++m)
    for (arma::uword t = 1; t < T; ++t)
      Gamma(t - 1, 0, m) =
          std::log(clamp_prob(Pi(m, t)) / clamp_prob(Pi(m, 0)));
  return Gamma;
}

Step2Fit fit_structural(const Dataset& data, const MeasurementParams& phi_fixed,
                        const arma::vec& omega0, const arma::cube& Gamma0,
                        const EmControl& ctrl) {
  ctrl.validate();
  const Stopwatch timer;
  const arma::uword M = omega0.n_elem;
  const arma::uword J = data.n_groups();

  {
    const IdentifiabilityReport rep = check_identifiability(
        data.dims(Gamma0.n_rows + 1, M), phi_fixed,
        StructuralParams::from_gamma(omega0, Gamma0), &data.Z);
    if (!rep.z_full_rank)
      throw NumericalError("fit_structural: design matrix is rank deficient");
  }

  Step2Fit fit;
  arma::vec omega = clamp_simplex(omega0);
  arma::cube Gamma = Gamma0;

  // the measurement model is frozen, so the item log-densities never change
  const arma::mat logdens = item_logdensity(data, phi_fixed);
  StructuralParams strct = StructuralParams::from_gamma(omega, Gamma);
  Posteriors post = e_step_with_logdensity(data, logdens, strct,
                                           Mode::conditional, ctrl.n_threads);
  fit.loglik_trace.push_back(post.loglik);

  for (int it = 1; it <= ctrl.max_iter; ++it) {
    omega = arma::sum(post.u, 0).t() / static_cast<double>(J);
    omega = clamp_simplex(omega);

    // u spread to units: weight of unit i for class m is u(group(i), m)
    arma::mat w_units(data.n_units(), M);
    for (arma::uword m = 0; m < M; ++m)
      for (arma::uword j = 0; j < J; ++j)
        w_units.col(m)
            .subvec(data.offsets[j], data.offsets[j + 1] - 1)
            .fill(post.u(j, m));

    // the M weighted multinomial systems decouple; solve independently
    std::vector<WarningLog> logs(M);
    parallel_for(M, ctrl.n_threads, [&](std::size_t m) {
      Gamma.slice(m) = weighted_multinomial_fit(
          data.Z, post.q.slice(m), w_units.col(m), Gamma.slice(m), ctrl.nr_tol,
          ctrl.nr_max_iter, &logs[m]);
    });
    for (auto& log : logs)
      fit.warnings.insert(fit.warnings.end(), log.begin(), log.end());

    strct = StructuralParams::from_gamma(omega, Gamma);
    post = e_step_with_logdensity(data, logdens, strct, Mode::conditional,
                                  ctrl.n_threads);
    const double prev = fit.loglik_trace.back();
    fit.loglik_trace.push_back(post.loglik);
    if (std::abs(post.loglik - prev) / (1.0 + std::abs(post.loglik)) <
        ctrl.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.omega = std::move(omega);
  fit.Gamma = std::move(Gamma);
  fit.n_iter = static_cast<int>(fit.loglik_trace.size()) - 1;
  fit.elapsed = timer.seconds();
  return fit;
}

}  // namespace mlc
