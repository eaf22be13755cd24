#include "mlc/posterior.hpp"

#include <cmath>

#include "mlc/parallel.hpp"

namespace mlc {

namespace {

// Rowwise log-sum-exp over the columns of A; T is small, rows are many.
arma::vec row_logsumexp(const arma::mat& A) {
  arma::vec mx = A.col(0);
  for (arma::uword t = 1; t < A.n_cols; ++t)
    mx = arma::max(mx, arma::vec(A.col(t)));
  arma::vec s(A.n_rows, arma::fill::zeros);
  for (arma::uword t = 0; t < A.n_cols; ++t) s += arma::exp(A.col(t) - mx);
  return mx + arma::log(s);
}

void check_dims(const Dataset& data, const arma::mat& logdens,
                const StructuralParams& strct, Mode mode) {
  if (logdens.n_rows != data.n_units())
    throw NumericalError("e_step: log-density row count mismatch");
  const arma::uword T = strct.n_low();
  if (logdens.n_cols != T)
    throw NumericalError("e_step: log-density class count mismatch");
  if (strct.Pi.n_rows != strct.n_high())
    throw NumericalError("e_step: Pi must be M x T");
  if (mode == Mode::conditional) {
    if (T > 1 && strct.Gamma.n_cols != data.n_covariates())
      throw NumericalError("e_step: Gamma column count must match Z");
    if (T > 1 && strct.Gamma.n_slices != strct.n_high())
      throw NumericalError("e_step: Gamma slice count must match M");
  }
}

// Per-unit mixture log-likelihoods a(i,m) = log sum_t pi_{t|m}(i) f_t(y_i),
// optionally materializing q(i,t,m). Row ranges are processed independently,
// so chunks can run on different threads.
void unit_mixture_logliks(const Dataset& data, const arma::mat& logdens,
                          const StructuralParams& strct, Mode mode,
                          arma::uword r0, arma::uword r1, arma::mat& a,
                          arma::cube* q) {
  const arma::uword T = strct.n_low();
  const arma::uword M = strct.n_high();
  const arma::uword nr = r1 - r0;
  const arma::mat logpi_uncond =
      mode == Mode::unconditional ? arma::mat(arma::log(strct.Pi)) : arma::mat();

  arma::mat A(nr, T);
  for (arma::uword m = 0; m < M; ++m) {
    A = logdens.rows(r0, r1 - 1);
    if (mode == Mode::unconditional) {
      A.each_row() += logpi_uncond.row(m);
    } else if (T > 1) {
      arma::mat eta(nr, T);
      eta.col(0).zeros();
      const arma::mat Zsub = data.Z.rows(r0, r1 - 1);
      for (arma::uword t = 1; t < T; ++t)
        eta.col(t) = Zsub * strct.Gamma.slice(m).row(t - 1).t();
      eta.each_col() -= row_logsumexp(eta);
      A += eta;
    }
    const arma::vec am = row_logsumexp(A);
    a.col(m).subvec(r0, r1 - 1) = am;
    if (q != nullptr) {
      A.each_col() -= am;
      q->slice(m).rows(r0, r1 - 1) = arma::exp(A);
    }
  }
}

// Splits groups into contiguous chunks of roughly equal unit counts.
std::vector<std::pair<arma::uword, arma::uword>> row_chunks(const Dataset& data,
                                                            int n_threads) {
  const arma::uword J = data.n_groups();
  const arma::uword N = data.n_units();
  const arma::uword n_chunks =
      std::max<arma::uword>(1, std::min<arma::uword>(J, n_threads));
  std::vector<std::pair<arma::uword, arma::uword>> chunks;
  arma::uword j = 0;
  for (arma::uword c = 0; c < n_chunks && j < J; ++c) {
    const arma::uword target = (c + 1) * N / n_chunks;
    const arma::uword r0 = data.offsets[j];
    ++j;  // every chunk takes at least one group
    if (c + 1 == n_chunks) {
      j = J;
    } else {
      while (j < J && data.offsets[j + 1] <= target) ++j;
    }
    chunks.emplace_back(r0, data.offsets[j]);
  }
  return chunks;
}

struct GroupStage {
  arma::mat u;     // J x M
  arma::vec ell;   // per-group log-likelihood contributions
  double total = 0.0;
};

GroupStage group_posteriors(const Dataset& data, const arma::mat& a,
                            const StructuralParams& strct) {
  const arma::uword J = data.n_groups();
  const arma::uword M = strct.n_high();
  const arma::rowvec log_omega = arma::log(strct.omega).t();

  GroupStage g;
  g.u.set_size(J, M);
  g.ell.set_size(J);
  for (arma::uword j = 0; j < J; ++j) {
    arma::rowvec logw = log_omega;
    for (arma::uword m = 0; m < M; ++m)
      logw[m] += arma::accu(a.col(m).subvec(data.offsets[j],
                                            data.offsets[j + 1] - 1));
    const double mx = logw.max();
    const double lse = mx + std::log(arma::accu(arma::exp(logw - mx)));
    if (!std::isfinite(lse)) {
      const std::string name = data.group_names.size() == J
                                   ? data.group_names[j]
                                   : std::to_string(j + 1);
      throw NumericalError("non-finite log-likelihood in group " + name);
    }
    g.ell[j] = lse;
    g.u.row(j) = arma::exp(logw - lse);
  }
  // fixed group order keeps the reduction reproducible
  g.total = arma::accu(g.ell);
  return g;
}

}  // namespace

arma::mat item_logdensity(const Dataset& data, const MeasurementParams& meas) {
  if (meas.Phi.n_rows != data.n_items())
    throw NumericalError("item_logdensity: Phi row count must match items");
  const arma::mat Phi = clamp_prob_matrix(meas.Phi);
  const arma::mat log_phi = arma::log(Phi);
  const arma::mat log_1mphi = arma::log(1.0 - Phi);
  arma::mat out = data.Y * (log_phi - log_1mphi);
  out.each_row() += arma::sum(log_1mphi, 0);
  return out;
}

Posteriors e_step_with_logdensity(const Dataset& data, const arma::mat& logdens,
                                  const StructuralParams& strct, Mode mode,
                                  int n_threads) {
  check_dims(data, logdens, strct, mode);
  const arma::uword N = data.n_units();
  const arma::uword T = strct.n_low();
  const arma::uword M = strct.n_high();

  arma::mat a(N, M);
  Posteriors post;
  post.q.set_size(N, T, M);

  const auto chunks = row_chunks(data, n_threads);
  parallel_for(chunks.size(), n_threads, [&](std::size_t c) {
    unit_mixture_logliks(data, logdens, strct, mode, chunks[c].first,
                         chunks[c].second, a, &post.q);
  });

  const GroupStage g = group_posteriors(data, a, strct);
  post.u = g.u;
  post.loglik = g.total;

  post.v = post.q;
  for (arma::uword m = 0; m < M; ++m) {
    for (arma::uword j = 0; j < data.n_groups(); ++j) {
      post.v.slice(m)
          .rows(data.offsets[j], data.offsets[j + 1] - 1) *= g.u(j, m);
    }
  }
  return post;
}

double loglik_with_logdensity(const Dataset& data, const arma::mat& logdens,
                              const StructuralParams& strct, Mode mode,
                              int n_threads) {
  check_dims(data, logdens, strct, mode);
  arma::mat a(data.n_units(), strct.n_high());
  const auto chunks = row_chunks(data, n_threads);
  parallel_for(chunks.size(), n_threads, [&](std::size_t c) {
    unit_mixture_logliks(data, logdens, strct, mode, chunks[c].first,
                         chunks[c].second, a, nullptr);
  });
  return group_posteriors(data, a, strct).total;
}

Posteriors e_step(const Dataset& data, const MeasurementParams& meas,
                  const StructuralParams& strct, Mode mode, int n_threads) {
  return e_step_with_logdensity(data, item_logdensity(data, meas), strct, mode,
                                n_threads);
}

double loglik(const Dataset& data, const MeasurementParams& meas,
              const StructuralParams& strct, Mode mode, int n_threads) {
  return loglik_with_logdensity(data, item_logdensity(data, meas), strct, mode,
                                n_threads);
}

}  // namespace mlc
