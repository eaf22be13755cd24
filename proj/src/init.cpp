#include "mlc/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "mlc/rng.hpp"

namespace mlc {

namespace {

arma::uvec distinct_row_indices(const arma::mat& Y) {
  std::unordered_set<std::string> seen;
  std::vector<arma::uword> keep;
  std::string key(Y.n_cols, '0');
  for (arma::uword r = 0; r < Y.n_rows; ++r) {
    for (arma::uword c = 0; c < Y.n_cols; ++c)
      key[c] = Y(r, c) != 0.0 ? '1' : '0';
    if (seen.insert(key).second) keep.push_back(r);
  }
  return arma::uvec(keep);
}

// Hamming distances of every row to every mode via one matrix product:
// d(r,k) = sum_c y_rc + sum_c m_kc - 2 y_r . m_k
arma::mat hamming_matrix(const arma::mat& Y, const arma::mat& modes,
                         const arma::vec& row_sums) {
  arma::mat D = -2.0 * (Y * modes.t());
  D.each_col() += row_sums;
  D.each_row() += arma::sum(modes, 1).t();
  return D;
}

KModesResult kmodes_once(const arma::mat& Y, arma::uword K,
                         const arma::uvec& seed_rows, int max_iter,
                         const arma::vec& row_sums) {
  const arma::uword N = Y.n_rows;
  const arma::uword H = Y.n_cols;

  arma::mat modes(K, H);
  for (arma::uword k = 0; k < K; ++k) modes.row(k) = Y.row(seed_rows[k]);

  KModesResult res;
  res.assignment.set_size(N);
  res.assignment.fill(K);  // force a first-sweep change
  for (int it = 0; it < max_iter; ++it) {
    const arma::mat D = hamming_matrix(Y, modes, row_sums);
    bool changed = false;
    res.cost = 0.0;
    for (arma::uword r = 0; r < N; ++r) {
      const arma::uword best = D.row(r).index_min();  // ties -> lowest index
      if (res.assignment[r] != best) {
        res.assignment[r] = best;
        changed = true;
      }
      res.cost += D(r, best);
    }
    res.n_iter = it + 1;
    if (!changed) break;

    for (arma::uword k = 0; k < K; ++k) {
      const arma::uvec members = arma::find(res.assignment == k);
      if (members.is_empty()) {
        // re-seed an emptied cluster with the row farthest from its mode
        arma::uword far_row = 0;
        double far_d = -1.0;
        for (arma::uword r = 0; r < N; ++r) {
          const double d = D(r, res.assignment[r]);
          if (d > far_d) {
            far_d = d;
            far_row = r;
          }
        }
        modes.row(k) = Y.row(far_row);
        continue;
      }
      const arma::rowvec ones = arma::sum(Y.rows(members), 0);
      const double sz = static_cast<double>(members.n_elem);
      for (arma::uword c = 0; c < H; ++c)
        modes(k, c) = (2.0 * ones[c] >= sz) ? 1.0 : 0.0;  // ties -> 1
    }
  }

  res.modes = arma::conv_to<arma::umat>::from(modes);
  return res;
}

}  // namespace

KModesResult kmodes(const arma::mat& Y, arma::uword K, std::uint64_t seed,
                    int max_iter, int restarts) {
  if (K < 1) throw DataError("kmodes: K must be >= 1");
  const arma::uword N = Y.n_rows;
  if (N == 0) throw DataError("kmodes: empty input");

  const arma::uvec distinct = distinct_row_indices(Y);
  WarningLog warnings;
  if (distinct.n_elem < K)
    warnings.push_back("kmodes: fewer distinct rows (" +
                       std::to_string(distinct.n_elem) + ") than K=" +
                       std::to_string(K) + "; duplicate modes permitted");

  const arma::vec row_sums = arma::sum(Y, 1);
  KModesResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int s = 0; s < std::max(1, restarts); ++s) {
    auto eng = make_engine(derive_seed(seed, s));
    arma::uvec seed_rows(K);
    if (distinct.n_elem >= K) {
      // sample K distinct rows without replacement
      std::vector<arma::uword> pool(distinct.begin(), distinct.end());
      for (arma::uword k = 0; k < K; ++k) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t idx = pick(eng);
        seed_rows[k] = pool[idx];
        pool.erase(pool.begin() + idx);
      }
    } else {
      std::uniform_int_distribution<arma::uword> pick(0, N - 1);
      for (arma::uword k = 0; k < K; ++k) seed_rows[k] = pick(eng);
    }
    KModesResult cand = kmodes_once(Y, K, seed_rows, max_iter, row_sums);
    if (cand.cost < best.cost) best = std::move(cand);
  }
  best.warnings = std::move(warnings);
  return best;
}

Step1Fit single_level_lca(const Dataset& data, arma::uword T,
                          const EmControl& ctrl) {
  const ModelDims dims = data.dims(T, 1);
  const KModesResult km = kmodes(data.Y, T, derive_seed(ctrl.seed, 0x5e1f));

  StartingValues start;
  start.omega = arma::vec{1.0};
  start.Pi.set_size(1, T);
  start.Phi.set_size(data.n_items(), T);
  for (arma::uword t = 0; t < T; ++t) {
    const arma::uvec members = arma::find(km.assignment == t);
    start.Pi(0, t) =
        static_cast<double>(std::max<arma::uword>(members.n_elem, 1)) /
        static_cast<double>(data.n_units());
    if (members.is_empty()) {
      start.Phi.col(t).fill(0.5);
    } else {
      start.Phi.col(t) = arma::mean(data.Y.rows(members), 0).t();
    }
  }
  start.Pi = clamp_simplex_rows(start.Pi);
  start.Phi = clamp_prob_matrix(start.Phi);
  return fit_unconditional(data, dims, start, ctrl);
}

EmControl init_inner_defaults() {
  EmControl ctrl;
  ctrl.max_iter = 200;
  ctrl.n_starts = 0;  // the K-modes seeded start only
  return ctrl;
}

StartingValues hierarchical_init(const Dataset& data, const ModelDims& dims,
                                 std::uint64_t seed,
                                 const EmControl& inner_ctrl,
                                 WarningLog* warnings) {
  const arma::uword J = data.n_groups();
  const arma::uword M = dims.M;
  const arma::uword T = dims.T;

  // (1) group-level pre-clustering: per-group modal K-modes class
  const KModesResult km = kmodes(data.Y, M, derive_seed(seed, 0xa11c));
  arma::uvec W_tilde(J);
  for (arma::uword j = 0; j < J; ++j) {
    arma::vec counts(M, arma::fill::zeros);
    for (arma::uword r = data.offsets[j]; r < data.offsets[j + 1]; ++r)
      counts[km.assignment[r]] += 1.0;
    W_tilde[j] = counts.index_max();  // ties -> lowest index
  }
  arma::vec omega(M, arma::fill::zeros);
  for (arma::uword j = 0; j < J; ++j) omega[W_tilde[j]] += 1.0;
  omega /= static_cast<double>(J);

  if (omega.min() <= 0.0) {
    warn(warnings,
         "hierarchical_init: empty high-level class in pre-clustering; "
         "starting omega set to uniform");
    omega.fill(1.0 / static_cast<double>(M));
  } else {
    // order high-level classes by decreasing size and relabel accordingly
    const arma::uvec order = arma::sort_index(omega, "descend");
    arma::uvec relabel(M);
    for (arma::uword m = 0; m < M; ++m) relabel[order[m]] = m;
    omega = omega(order);
    for (arma::uword j = 0; j < J; ++j) W_tilde[j] = relabel[W_tilde[j]];
  }

  // (2) pooled single-level fit for Phi and MAP low-level classes
  EmControl lca_ctrl = inner_ctrl;
  lca_ctrl.seed = derive_seed(seed, 0x1ca);
  const Step1Fit lca = single_level_lca(data, T, lca_ctrl);
  const Posteriors post =
      e_step(data, {lca.Phi}, StructuralParams::from_pi(lca.omega, lca.Pi),
             Mode::unconditional, inner_ctrl.n_threads);

  arma::uvec X_tilde(data.n_units());
  for (arma::uword i = 0; i < data.n_units(); ++i)
    X_tilde[i] = post.q.slice(0).row(i).index_max();

  arma::mat Pi(M, T, arma::fill::zeros);
  for (arma::uword i = 0; i < data.n_units(); ++i)
    Pi(W_tilde[data.group[i]], X_tilde[i]) += 1.0;
  for (arma::uword m = 0; m < M; ++m) {
    if (arma::accu(Pi.row(m)) <= 0.0) Pi.row(m).fill(1.0);
  }
  Pi = clamp_simplex_rows(Pi);

  StartingValues out;
  out.omega = clamp_simplex(omega);
  out.Phi = clamp_prob_matrix(lca.Phi);
  out.Pi = Pi;

  MeasurementParams meas{out.Phi};
  StructuralParams strct = StructuralParams::from_pi(out.omega, out.Pi);
  reorder_classes(meas, strct, warnings);
  out.Phi = meas.Phi;
  out.Pi = strct.Pi;
  return out;
}

arma::uvec reorder_classes(MeasurementParams& meas, StructuralParams& strct,
                           WarningLog* warnings) {
  const arma::uword T = meas.Phi.n_cols;
  const arma::uword M = strct.n_high();
  const arma::uword K = strct.n_covariates();
  const arma::vec key = arma::mean(meas.Phi, 0).t();

  arma::uvec perm(T);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](arma::uword a, arma::uword b) {
    return key[a] > key[b] + 1e-10;  // near-ties keep the stable order
  });

  bool tie = false;
  for (arma::uword t = 0; t + 1 < T; ++t)
    if (std::abs(key[perm[t]] - key[perm[t + 1]]) < 1e-10) tie = true;
  if (tie)
    warn(warnings,
         "reorder_classes: near-tied ordering key; class order may be "
         "arbitrary, consider an alternative ordering rule");

  meas.Phi = meas.Phi.cols(perm);
  if (T < 2) return perm;

  // coefficients relative to the (possibly new) reference class
  arma::cube Gamma(T - 1, K, M);
  for (arma::uword m = 0; m < M; ++m) {
    for (arma::uword t = 1; t < T; ++t) {
      arma::rowvec row(K, arma::fill::zeros);
      if (perm[t] > 0) row += strct.Gamma.slice(m).row(perm[t] - 1);
      if (perm[0] > 0) row -= strct.Gamma.slice(m).row(perm[0] - 1);
      Gamma.slice(m).row(t - 1) = row;
    }
  }
  const arma::mat Pi = strct.Pi.cols(perm);
  strct.Gamma = Gamma;
  strct.Pi = clamp_simplex_rows(Pi);
  return perm;
}

}  // namespace mlc
