#include "mlc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>

namespace mlc {

void ModelDims::validate() const {
  if (J < 1) throw DataError("ModelDims: J must be >= 1");
  if (n.n_elem != J) throw DataError("ModelDims: n must have length J");
  if (n.min() < 1) throw DataError("ModelDims: every group size must be >= 1");
  if (H < 1) throw DataError("ModelDims: H must be >= 1");
  if (T < 1) throw DataError("ModelDims: T must be >= 1");
  if (M < 1) throw DataError("ModelDims: M must be >= 1");
  if (K < 1) throw DataError("ModelDims: K must be >= 1");
}

arma::uvec Dataset::group_sizes() const {
  const arma::uword J = n_groups();
  arma::uvec sizes(J);
  for (arma::uword j = 0; j < J; ++j) sizes[j] = offsets[j + 1] - offsets[j];
  return sizes;
}

ModelDims Dataset::dims(arma::uword T, arma::uword M) const {
  ModelDims d;
  d.J = n_groups();
  d.n = group_sizes();
  d.H = n_items();
  d.T = T;
  d.M = M;
  d.K = n_covariates();
  d.validate();
  return d;
}

void Dataset::validate() const {
  const arma::uword N = n_units();
  if (N == 0) throw DataError("Dataset: no rows");
  if (group.n_elem != N) throw DataError("Dataset: group index length mismatch");
  if (Z.n_rows != N) throw DataError("Dataset: Z row count mismatch");
  for (arma::uword i = 0; i < N; ++i) {
    if (i > 0 && group[i] < group[i - 1])
      throw DataError("Dataset: groups must form contiguous blocks");
  }
  const arma::uword J = n_groups();
  if (J == 0 || offsets[0] != 0 || offsets[J] != N)
    throw DataError("Dataset: bad group offsets");
  for (arma::uword j = 0; j < J; ++j) {
    if (offsets[j + 1] <= offsets[j])
      throw DataError("Dataset: empty group block");
  }
  for (arma::uword c = 0; c < Y.n_cols; ++c) {
    for (arma::uword r = 0; r < N; ++r) {
      const double y = Y(r, c);
      if (y != 0.0 && y != 1.0)
        throw DataError("Dataset: item values must be 0/1 (row " +
                        std::to_string(r + 1) + ", item " +
                        std::to_string(c + 1) + ")");
    }
  }
  if (Z.n_cols < 1 || arma::any(arma::abs(Z.col(0) - 1.0) > 0.0))
    throw DataError("Dataset: first design column must be the intercept");
  if (!Y.is_finite() || !Z.is_finite())
    throw DataError("Dataset: non-finite values present");
}

namespace {

// Numeric order when every id parses as a number, lexicographic otherwise.
bool all_numeric(const std::vector<std::string>& ids) {
  for (const auto& s : ids) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    if (end == nullptr || *end != '\0') return false;
  }
  return true;
}

}  // namespace

Dataset assemble_dataset(const arma::mat& Y,
                         const std::vector<std::string>& group_ids,
                         const arma::mat& covariates) {
  const arma::uword N = Y.n_rows;
  if (group_ids.size() != N)
    throw DataError("assemble_dataset: one group id per row required");
  if (!covariates.is_empty() && covariates.n_rows != N)
    throw DataError("assemble_dataset: covariate row count mismatch");

  std::vector<std::string> unique_ids = group_ids;
  std::sort(unique_ids.begin(), unique_ids.end());
  unique_ids.erase(std::unique(unique_ids.begin(), unique_ids.end()),
                   unique_ids.end());
  if (all_numeric(unique_ids)) {
    std::sort(unique_ids.begin(), unique_ids.end(),
              [](const std::string& a, const std::string& b) {
                return std::strtod(a.c_str(), nullptr) <
                       std::strtod(b.c_str(), nullptr);
              });
  }
  std::map<std::string, arma::uword> rank;
  for (arma::uword j = 0; j < unique_ids.size(); ++j) rank[unique_ids[j]] = j;

  // Stable sort keeps the within-group input order.
  arma::uvec order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](arma::uword a, arma::uword b) {
                     return rank[group_ids[a]] < rank[group_ids[b]];
                   });

  Dataset data;
  data.Y.set_size(N, Y.n_cols);
  data.group.set_size(N);
  data.source_row = order;
  const arma::uword K = 1 + covariates.n_cols;
  data.Z.set_size(N, K);
  for (arma::uword r = 0; r < N; ++r) {
    const arma::uword src = order[r];
    data.Y.row(r) = Y.row(src);
    data.group[r] = rank[group_ids[src]];
    data.Z(r, 0) = 1.0;
    for (arma::uword c = 0; c < covariates.n_cols; ++c)
      data.Z(r, c + 1) = covariates(src, c);
  }
  const arma::uword J = unique_ids.size();
  data.offsets.set_size(J + 1);
  data.offsets[0] = 0;
  arma::uword j = 0;
  for (arma::uword r = 0; r < N; ++r) {
    while (data.group[r] > j) data.offsets[++j] = r;
  }
  while (j < J) data.offsets[++j] = N;
  data.group_names = unique_ids;
  data.validate();
  return data;
}

double clamp_prob(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

arma::mat clamp_prob_matrix(arma::mat P) {
  P.transform([](double p) { return clamp_prob(p); });
  return P;
}

arma::vec clamp_simplex(arma::vec p) {
  p.transform([](double x) { return std::max(kProbEps, x); });
  return p / arma::accu(p);
}

arma::mat clamp_simplex_rows(arma::mat P) {
  for (arma::uword r = 0; r < P.n_rows; ++r)
    P.row(r) = clamp_simplex(P.row(r).t()).t();
  return P;
}

arma::vec softmax_ref(const arma::vec& eta) {
  const arma::uword T = eta.n_elem + 1;
  arma::vec x(T, arma::fill::zeros);
  if (T > 1) x.subvec(1, T - 1) = eta;
  const double mx = x.max();
  const arma::vec e = arma::exp(x - mx);
  return e / arma::accu(e);
}

StructuralParams StructuralParams::from_pi(const arma::vec& omega,
                                           const arma::mat& Pi) {
  const arma::uword M = omega.n_elem;
  const arma::uword T = Pi.n_cols;
  if (Pi.n_rows != M) throw DataError("StructuralParams: Pi must be M x T");
  StructuralParams s;
  s.omega = clamp_simplex(omega);
  s.Pi = clamp_simplex_rows(Pi);
  s.Gamma.set_size(T > 1 ? T - 1 : 0, 1, M);
  for (arma::uword m = 0; m < M; ++m)
    for (arma::uword t = 1; t < T; ++t)
      s.Gamma(t - 1, 0, m) = std::log(s.Pi(m, t) / s.Pi(m, 0));
  return s;
}

StructuralParams StructuralParams::from_gamma(const arma::vec& omega,
                                              const arma::cube& Gamma) {
  const arma::uword M = omega.n_elem;
  const arma::uword T = Gamma.n_rows + 1;
  if (Gamma.n_slices != M)
    throw DataError("StructuralParams: Gamma must have M slices");
  StructuralParams s;
  s.omega = clamp_simplex(omega);
  s.Gamma = Gamma;
  s.Pi.set_size(M, T);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::vec eta = T > 1 ? arma::vec(Gamma.slice(m).col(0))
                                : arma::vec();
    s.Pi.row(m) = softmax_ref(eta).t();
  }
  return s;
}

LogLinearParams to_loglinear(const MeasurementParams& meas,
                             const StructuralParams& strct,
                             WarningLog* warnings) {
  const arma::uword M = strct.n_high();
  const arma::uword T = strct.n_low();
  const arma::uword H = meas.Phi.n_rows;

  bool clamped = false;
  auto safe = [&](double p) {
    const double c = clamp_prob(p);
    if (c != p) clamped = true;
    return c;
  };

  LogLinearParams ll;
  ll.alpha.set_size(M > 0 ? M - 1 : 0);
  const double w0 = safe(strct.omega[0]);
  for (arma::uword m = 1; m < M; ++m)
    ll.alpha[m - 1] = std::log(safe(strct.omega[m]) / w0);

  ll.gamma.set_size(T > 1 ? T - 1 : 0, M);
  for (arma::uword m = 0; m < M; ++m) {
    const double p0 = safe(strct.Pi(m, 0));
    for (arma::uword t = 1; t < T; ++t)
      ll.gamma(t - 1, m) = std::log(safe(strct.Pi(m, t)) / p0);
  }

  ll.beta.set_size(H, meas.Phi.n_cols);
  for (arma::uword t = 0; t < meas.Phi.n_cols; ++t)
    for (arma::uword h = 0; h < H; ++h) {
      const double p = safe(meas.Phi(h, t));
      ll.beta(h, t) = std::log(p / (1.0 - p));
    }

  if (clamped)
    warn(warnings, "to_loglinear: boundary probabilities clamped to the interior");
  return ll;
}

std::pair<MeasurementParams, StructuralParams> from_loglinear(
    const LogLinearParams& ll) {
  const arma::uword M = ll.alpha.n_elem + 1;
  const arma::uword T = ll.gamma.n_rows + 1;
  if (T > 1 && ll.gamma.n_cols != M)
    throw DataError("from_loglinear: gamma must have one column per class");

  MeasurementParams meas;
  meas.Phi = 1.0 / (1.0 + arma::exp(-ll.beta));

  arma::vec omega = softmax_ref(ll.alpha);
  arma::mat Pi(M, T);
  for (arma::uword m = 0; m < M; ++m) {
    const arma::vec eta = T > 1 ? arma::vec(ll.gamma.col(m)) : arma::vec();
    Pi.row(m) = softmax_ref(eta).t();
  }
  return {std::move(meas), StructuralParams::from_pi(omega, Pi)};
}

}  // namespace mlc
