#include "mlc/variance.hpp"

#include <cmath>

namespace mlc {

arma::uword theta2_size(arma::uword T, arma::uword M, arma::uword K) {
  return (M - 1) + (T - 1) * M * K;
}

std::vector<std::string> theta2_labels(arma::uword T, arma::uword M,
                                       arma::uword K) {
  std::vector<std::string> labels;
  for (arma::uword m = 1; m < M; ++m)
    labels.push_back("alpha_m" + std::to_string(m + 1));
  for (arma::uword m = 0; m < M; ++m)
    for (arma::uword t = 1; t < T; ++t)
      for (arma::uword k = 0; k < K; ++k)
        labels.push_back("gamma_m" + std::to_string(m + 1) + "_t" +
                         std::to_string(t + 1) + "_k" + std::to_string(k));
  return labels;
}

arma::vec flatten_theta2(const StructuralParams& strct) {
  const arma::uword M = strct.n_high();
  const arma::uword T = strct.n_low();
  const arma::uword K = strct.n_covariates();
  arma::vec out(theta2_size(T, M, K));
  arma::uword pos = 0;
  for (arma::uword m = 1; m < M; ++m)
    out[pos++] = std::log(strct.omega[m] / strct.omega[0]);
  for (arma::uword m = 0; m < M; ++m)
    for (arma::uword t = 1; t < T; ++t)
      for (arma::uword k = 0; k < K; ++k)
        out[pos++] = strct.Gamma(t - 1, k, m);
  return out;
}

namespace {

arma::mat alpha_scores(const Dataset& data, const arma::vec& omega,
                       const Posteriors& post) {
  const arma::uword N = data.n_units();
  const arma::uword M = omega.n_elem;
  arma::mat s(N, M - 1);
  for (arma::uword j = 0; j < data.n_groups(); ++j) {
    const double inv_nj =
        1.0 / static_cast<double>(data.offsets[j + 1] - data.offsets[j]);
    for (arma::uword m = 1; m < M; ++m)
      s.col(m - 1)
          .subvec(data.offsets[j], data.offsets[j + 1] - 1)
          .fill((post.u(j, m) - omega[m]) * inv_nj);
  }
  return s;
}

arma::mat beta_scores(const Dataset& data, const arma::mat& Phi,
                      const Posteriors& post) {
  const arma::uword N = data.n_units();
  const arma::uword H = Phi.n_rows;
  const arma::uword T = Phi.n_cols;
  arma::mat P = post.v.slice(0);
  for (arma::uword m = 1; m < post.v.n_slices; ++m) P += post.v.slice(m);

  arma::mat s(N, H * T);
  for (arma::uword t = 0; t < T; ++t)
    for (arma::uword h = 0; h < H; ++h)
      s.col(t * H + h) = P.col(t) % (data.Y.col(h) - Phi(h, t));
  return s;
}

// u(group(i), m) spread to unit rows
arma::vec unit_weights(const Dataset& data, const Posteriors& post,
                       arma::uword m) {
  arma::vec w(data.n_units());
  for (arma::uword j = 0; j < data.n_groups(); ++j)
    w.subvec(data.offsets[j], data.offsets[j + 1] - 1).fill(post.u(j, m));
  return w;
}

arma::mat sym_inv(arma::mat A, WarningLog* warnings, const std::string& label) {
  A = 0.5 * (A + A.t());
  arma::mat out;
  if (arma::inv_sympd(out, A)) return out;
  const double ridge = 1e-10 * std::max(1.0, arma::abs(A.diag()).max());
  arma::mat B = A;
  B.diag() += ridge;
  if (arma::inv_sympd(out, B)) {
    warn(warnings, label + ": near-singular, ridge " + std::to_string(ridge) +
                       " applied");
    return out;
  }
  throw NumericalError(label + ": singular beyond ridge (condition number " +
                       std::to_string(arma::cond(A)) + ")");
}

}  // namespace

ScoreBlocks score_step1(const Dataset& data, const MeasurementParams& meas,
                        const StructuralParams& strct, const Posteriors& post) {
  const arma::uword N = data.n_units();
  const arma::uword M = strct.n_high();
  const arma::uword T = strct.n_low();

  ScoreBlocks s;
  s.alpha = alpha_scores(data, strct.omega, post);
  s.gamma.set_size(N, (T - 1) * M);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::vec w = unit_weights(data, post, m);
    for (arma::uword t = 1; t < T; ++t)
      s.gamma.col(m * (T - 1) + (t - 1)) =
          w % (post.q.slice(m).col(t) - strct.Pi(m, t));
  }
  s.beta = beta_scores(data, meas.Phi, post);
  return s;
}

ScoreBlocks score_step2(const Dataset& data, const MeasurementParams& meas,
                        const StructuralParams& strct, const Posteriors& post) {
  const arma::uword N = data.n_units();
  const arma::uword M = strct.n_high();
  const arma::uword T = strct.n_low();
  const arma::uword K = strct.n_covariates();

  ScoreBlocks s;
  s.alpha = alpha_scores(data, strct.omega, post);
  s.gamma.set_size(N, (T - 1) * M * K);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::vec w = unit_weights(data, post, m);
    // pi_t(z_i) under the current coefficients of class m
    arma::mat eta(N, T);
    eta.col(0).zeros();
    for (arma::uword t = 1; t < T; ++t)
      eta.col(t) = data.Z * strct.Gamma.slice(m).row(t - 1).t();
    arma::vec mx = eta.col(0);
    for (arma::uword t = 1; t < T; ++t)
      mx = arma::max(mx, arma::vec(eta.col(t)));
    arma::vec se(N, arma::fill::zeros);
    for (arma::uword t = 0; t < T; ++t) se += arma::exp(eta.col(t) - mx);
    const arma::vec lse = mx + arma::log(se);
    for (arma::uword t = 1; t < T; ++t) {
      const arma::vec resid =
          post.q.slice(m).col(t) - arma::exp(eta.col(t) - lse);
      for (arma::uword k = 0; k < K; ++k)
        s.gamma.col(m * (T - 1) * K + (t - 1) * K + k) =
            w % resid % data.Z.col(k);
    }
  }
  s.beta = beta_scores(data, meas.Phi, post);
  return s;
}

arma::mat opg(const arma::mat& scores, arma::uword N) {
  return scores.t() * scores / static_cast<double>(N);
}

CovarianceEstimate corrected_covariance(const arma::mat& Sigma11,
                                        const ScoreBlocks& step2,
                                        arma::uword N) {
  CovarianceEstimate cov;
  const arma::mat s2 = step2.theta2();
  cov.I22 = opg(s2, N);
  cov.I21 = s2.t() * step2.beta / static_cast<double>(N);
  cov.Sigma11 = Sigma11;
  cov.V2 = sym_inv(cov.I22, &cov.warnings, "I22");
  cov.V1 = cov.V2 * cov.I21 * cov.Sigma11 * cov.I21.t() * cov.V2;
  cov.V1 = 0.5 * (cov.V1 + cov.V1.t());
  cov.V = cov.V2 + cov.V1;
  cov.se = arma::sqrt(cov.V.diag() / static_cast<double>(N));
  return cov;
}

CovarianceEstimate corrected_covariance(const ScoreBlocks& step1,
                                        const ScoreBlocks& step2,
                                        arma::uword N) {
  // the step-1 estimator is a joint ML estimate, so the marginal covariance
  // of its measurement block comes from the inverted joint information
  WarningLog warnings;
  const arma::mat I1 = opg(step1.all(), N);
  const arma::mat V1_full = sym_inv(I1, &warnings, "step-1 OPG");
  const arma::uword p21 = step1.alpha.n_cols + step1.gamma.n_cols;
  const arma::uword p1 = step1.beta.n_cols;
  const arma::mat Sigma11 =
      V1_full.submat(p21, p21, p21 + p1 - 1, p21 + p1 - 1);
  CovarianceEstimate cov = corrected_covariance(Sigma11, step2, N);
  cov.warnings.insert(cov.warnings.begin(), warnings.begin(), warnings.end());
  return cov;
}

CovarianceEstimate naive_covariance(const ScoreBlocks& step2, arma::uword N) {
  CovarianceEstimate cov;
  const arma::mat s2 = step2.theta2();
  cov.I22 = opg(s2, N);
  cov.V2 = sym_inv(cov.I22, &cov.warnings, "I22");
  cov.V = cov.V2;
  cov.V1.zeros(cov.V2.n_rows, cov.V2.n_cols);
  cov.Sigma11.reset();
  cov.I21.reset();
  cov.se = arma::sqrt(cov.V.diag() / static_cast<double>(N));
  return cov;
}

CovarianceEstimate full_ml_covariance(const ScoreBlocks& scores,
                                      arma::uword N) {
  CovarianceEstimate cov;
  const arma::mat I = opg(scores.all(), N);
  const arma::mat V_full = sym_inv(I, &cov.warnings, "full OPG");
  const arma::uword p2 = scores.alpha.n_cols + scores.gamma.n_cols;
  cov.I22 = I.submat(0, 0, p2 - 1, p2 - 1);
  cov.V = V_full.submat(0, 0, p2 - 1, p2 - 1);
  cov.V2 = cov.V;
  cov.V1.zeros(p2, p2);
  cov.se = arma::sqrt(cov.V.diag() / static_cast<double>(N));
  return cov;
}

}  // namespace mlc
