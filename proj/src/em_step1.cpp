#include "mlc/em_step1.hpp"

#include <cmath>
#include <limits>

#include "mlc/parallel.hpp"
#include "mlc/rng.hpp"

namespace mlc {

void EmControl::validate() const {
  if (max_iter < 1) throw DataError("EmControl: max_iter must be >= 1");
  if (!(tol > 0.0)) throw DataError("EmControl: tol must be > 0");
  if (n_starts < 0) throw DataError("EmControl: n_starts must be >= 0");
  if (n_threads < 1) throw DataError("EmControl: n_threads must be >= 1");
}

std::tuple<arma::vec, arma::mat, arma::mat> m_step_unconditional(
    const Posteriors& post, const Dataset& data, WarningLog*) {
  constexpr double kDegenerate = 1e-12;
  const arma::uword M = post.u.n_cols;
  const arma::uword T = post.q.n_cols;

  arma::vec omega = arma::sum(post.u, 0).t();
  omega /= static_cast<double>(post.u.n_rows);

  // P(i,t) = sum_m v(i,t,m); reused by both Pi and Phi updates
  arma::mat P = post.v.slice(0);
  for (arma::uword m = 1; m < M; ++m) P += post.v.slice(m);

  arma::mat Pi(M, T);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::rowvec mass = arma::sum(post.v.slice(m), 0);
    const double denom = arma::accu(mass);
    if (denom < kDegenerate)
      throw NumericalError("degenerate high-level class m=" +
                           std::to_string(m + 1));
    Pi.row(m) = mass / denom;
  }

  const arma::rowvec class_mass = arma::sum(P, 0);
  for (arma::uword t = 0; t < T; ++t) {
    if (class_mass[t] < kDegenerate)
      throw NumericalError("degenerate low-level class t=" +
                           std::to_string(t + 1));
  }
  arma::mat Phi = (data.Y.t() * P);
  Phi.each_row() /= class_mass;

  return {clamp_simplex(omega), clamp_simplex_rows(Pi),
          clamp_prob_matrix(Phi)};
}

Step1Fit em_unconditional(const Dataset& data, const ModelDims& dims,
                          const StartingValues& start, const EmControl& ctrl,
                          const UncondPhase& phase) {
  ctrl.validate();
  const Stopwatch timer;

  arma::vec omega = clamp_simplex(start.omega);
  arma::mat Pi = clamp_simplex_rows(start.Pi);
  arma::mat Phi = clamp_prob_matrix(start.Phi);
  if (omega.n_elem != dims.M || Pi.n_rows != dims.M || Pi.n_cols != dims.T ||
      Phi.n_rows != dims.H || Phi.n_cols != dims.T)
    throw NumericalError("em_unconditional: start dimensions mismatch");

  Step1Fit fit;
  arma::mat logdens = item_logdensity(data, {Phi});
  Posteriors post = e_step_with_logdensity(
      data, logdens, StructuralParams::from_pi(omega, Pi), Mode::unconditional,
      ctrl.n_threads);
  fit.loglik_trace.push_back(post.loglik);

  for (int it = 1; it <= ctrl.max_iter; ++it) {
    auto [omega_new, Pi_new, Phi_new] = m_step_unconditional(post, data);
    if (phase.update_struct) {
      omega = std::move(omega_new);
      Pi = std::move(Pi_new);
    }
    if (phase.update_phi) {
      Phi = std::move(Phi_new);
      logdens = item_logdensity(data, {Phi});
    }
    post = e_step_with_logdensity(data, logdens,
                                  StructuralParams::from_pi(omega, Pi),
                                  Mode::unconditional, ctrl.n_threads);
    const double prev = fit.loglik_trace.back();
    fit.loglik_trace.push_back(post.loglik);
    if (std::abs(post.loglik - prev) / (1.0 + std::abs(post.loglik)) <
        ctrl.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.omega = std::move(omega);
  fit.Pi = std::move(Pi);
  fit.Phi = std::move(Phi);
  fit.n_iter = static_cast<int>(fit.loglik_trace.size()) - 1;
  fit.elapsed = timer.seconds();
  return fit;
}

StartingValues random_start(const ModelDims& dims, std::uint64_t seed) {
  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> u_phi(0.1, 0.9);
  std::uniform_real_distribution<double> u_mass(0.5, 1.5);

  StartingValues s;
  s.Phi.set_size(dims.H, dims.T);
  for (auto& x : s.Phi) x = u_phi(eng);
  s.omega.set_size(dims.M);
  for (auto& x : s.omega) x = u_mass(eng);
  s.omega /= arma::accu(s.omega);
  s.Pi.set_size(dims.M, dims.T);
  for (auto& x : s.Pi) x = u_mass(eng);
  s.Pi = clamp_simplex_rows(s.Pi);
  return s;
}

Step1Fit fit_unconditional(const Dataset& data, const ModelDims& dims,
                           const StartingValues& start, const EmControl& ctrl) {
  ctrl.validate();
  const Stopwatch timer;
  const int n_starts = ctrl.n_starts + 1;

  std::vector<Step1Fit> fits(n_starts);
  std::vector<std::string> failures(n_starts);
  std::vector<char> ok(n_starts, 0);

  parallel_for(n_starts, ctrl.n_threads, [&](std::size_t s) {
    EmControl local = ctrl;
    local.n_threads = 1;
    const StartingValues sv =
        s == 0 ? start : random_start(dims, derive_seed(ctrl.seed, s));
    try {
      fits[s] = em_unconditional(data, dims, sv, local);
      ok[s] = 1;
    } catch (const NumericalError& e) {
      failures[s] = e.what();
    }
  });

  int best = -1;
  for (int s = 0; s < n_starts; ++s) {
    if (!ok[s]) continue;
    if (best < 0 || fits[s].loglik() > fits[best].loglik()) best = s;
  }
  if (best < 0)
    throw NumericalError("fit_unconditional: all starts failed (" +
                         failures[0] + ")");

  Step1Fit fit = std::move(fits[best]);
  fit.best_start_index = best;
  for (int s = 0; s < n_starts; ++s) {
    if (!ok[s])
      fit.warnings.push_back("start " + std::to_string(s) +
                             " abandoned: " + failures[s]);
  }
  fit.elapsed = timer.seconds();
  return fit;
}

}  // namespace mlc
