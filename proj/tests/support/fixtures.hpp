#pragma once

#include <armadillo>
#include <cstdint>
#include <random>

#include "mlc/model.hpp"
#include "mlc/rng.hpp"
#include "mlc/simulate.hpp"

namespace fixtures {

// Interior parameters drawn uniformly away from the boundary.
inline mlc::MeasurementParams random_phi(arma::uword H, arma::uword T,
                                         std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.15, 0.85);
  arma::mat Phi(H, T);
  for (auto& x : Phi) x = u(eng);
  return {Phi};
}

inline arma::vec random_simplex(arma::uword n, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.4, 1.6);
  arma::vec p(n);
  for (auto& x : p) x = u(eng);
  return p / arma::accu(p);
}

inline mlc::StructuralParams random_structural(arma::uword T, arma::uword M,
                                               std::mt19937_64& eng) {
  arma::mat Pi(M, T);
  for (arma::uword m = 0; m < M; ++m) Pi.row(m) = random_simplex(T, eng).t();
  return mlc::StructuralParams::from_pi(random_simplex(M, eng), Pi);
}

inline mlc::StructuralParams random_structural_cov(arma::uword T,
                                                   arma::uword M,
                                                   arma::uword K,
                                                   std::mt19937_64& eng) {
  std::uniform_real_distribution<double> coef(-0.8, 0.8);
  arma::cube Gamma(T - 1, K, M);
  for (auto& x : Gamma) x = coef(eng);
  return mlc::StructuralParams::from_gamma(random_simplex(M, eng), Gamma);
}

// Small grouped dataset with random binary items and one N(0,1) covariate
// (when K = 2) or intercept only (K = 1).
inline mlc::Dataset random_dataset(arma::uword J, arma::uword n_per_group,
                                   arma::uword H, arma::uword K,
                                   std::mt19937_64& eng) {
  const arma::uword N = J * n_per_group;
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);

  mlc::Dataset data;
  data.Y.set_size(N, H);
  for (auto& y : data.Y) y = coin(eng) ? 1.0 : 0.0;
  data.Z.set_size(N, K);
  data.Z.col(0).ones();
  for (arma::uword k = 1; k < K; ++k)
    for (arma::uword r = 0; r < N; ++r) data.Z(r, k) = normal(eng);
  data.group.set_size(N);
  data.offsets.set_size(J + 1);
  for (arma::uword j = 0; j < J; ++j) {
    data.offsets[j] = j * n_per_group;
    data.group.subvec(j * n_per_group, (j + 1) * n_per_group - 1).fill(j);
  }
  data.offsets[J] = N;
  data.source_row = arma::regspace<arma::uvec>(0, N - 1);
  return data;
}

// Dataset drawn from a well-separated model, for recovery tests.
inline std::pair<mlc::Dataset, mlc::SimTruth> separated_data(
    arma::uword J, arma::uword n_low, std::uint64_t seed) {
  const mlc::SimCondition cond = mlc::SimCondition::from_id(36);
  mlc::SimTruth truth = mlc::condition_truth(cond);
  return {mlc::generate_from(truth, J, n_low, seed), truth};
}

}  // namespace fixtures
