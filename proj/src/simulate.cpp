#include "mlc/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "mlc/parallel.hpp"
#include "mlc/rng.hpp"

namespace mlc {

SimCondition SimCondition::from_id(int id) {
  if (id < 1 || id > 36) throw DataError("condition id must be in 1..36");
  // block structure: (LL sep x HL sep) outer, (n_low, J) inner
  static const double phi_levels[3] = {0.7, 0.8, 0.9};
  static const arma::uword n_levels[2] = {100, 500};
  static const arma::uword j_levels[3] = {30, 50, 100};

  const int z = id - 1;
  const int block = z / 6;       // 0..5
  const int inner = z % 6;       // 0..5
  const int ll = block % 3;      // small, moderate, large
  const int hl = block / 3;      // moderate, large

  SimCondition c;
  c.id = id;
  c.n_low = n_levels[inner % 2];
  c.J = j_levels[inner / 2];
  c.phi_high = phi_levels[ll];
  if (hl == 0) {
    c.intercepts_m1 = {-0.85, -1.38};
    c.intercepts_m2 = {0.85, 1.38};
  } else {
    c.intercepts_m1 = {-1.38, -2.07};
    c.intercepts_m2 = {1.38, 2.07};
  }
  return c;
}

std::string SimCondition::ll_separation() const {
  if (phi_high < 0.75) return "small";
  if (phi_high < 0.85) return "moderate";
  return "large";
}

std::string SimCondition::hl_separation() const {
  return intercepts_m1[0] < -1.0 ? "large" : "moderate";
}

SimTruth condition_truth(const SimCondition& cond) {
  const double hi = cond.phi_high;
  const double lo = 1.0 - hi;

  SimTruth truth;
  truth.meas.Phi.set_size(SimCondition::H, SimCondition::T);
  truth.meas.Phi.col(0).fill(hi);                   // high on every item
  truth.meas.Phi.col(1).head(5).fill(lo);           // low on the first five
  truth.meas.Phi.col(1).tail(5).fill(hi);           // high on the last five
  truth.meas.Phi.col(2).fill(lo);                   // low on every item

  arma::cube Gamma(SimCondition::T - 1, 2, SimCondition::M);
  Gamma.slice(0).col(0) = cond.intercepts_m1;
  Gamma.slice(0).col(1).fill(SimCondition::slope_m1);
  Gamma.slice(1).col(0) = cond.intercepts_m2;
  Gamma.slice(1).col(1).fill(SimCondition::slope_m2);
  truth.strct = StructuralParams::from_gamma(arma::vec{0.5, 0.5}, Gamma);
  return truth;
}

namespace {

arma::uword draw_categorical(const arma::vec& probs, double u) {
  double s = 0.0;
  for (arma::uword k = 0; k + 1 < probs.n_elem; ++k) {
    s += probs[k];
    if (u <= s) return k;
  }
  return probs.n_elem - 1;
}

}  // namespace

Dataset generate_from(const SimTruth& truth, arma::uword J, arma::uword n_low,
                      std::uint64_t seed, arma::uword n_binary_covariates,
                      arma::uvec* latent_w, arma::uvec* latent_x) {
  const arma::uword T = truth.strct.n_low();
  const arma::uword K = truth.strct.n_covariates();
  const arma::uword H = truth.meas.Phi.n_rows;
  const arma::uword N = J * n_low;

  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset data;
  data.Y.set_size(N, H);
  data.Z.set_size(N, K);
  data.group.set_size(N);
  data.offsets.set_size(J + 1);
  data.source_row = arma::regspace<arma::uvec>(0, N - 1);
  if (latent_w != nullptr) latent_w->set_size(J);
  if (latent_x != nullptr) latent_x->set_size(N);

  arma::uword r = 0;
  for (arma::uword j = 0; j < J; ++j) {
    data.offsets[j] = r;
    const arma::uword w = draw_categorical(truth.strct.omega, unif(eng));
    if (latent_w != nullptr) (*latent_w)[j] = w;
    for (arma::uword i = 0; i < n_low; ++i, ++r) {
      data.group[r] = j;
      data.Z(r, 0) = 1.0;
      for (arma::uword k = 1; k < K; ++k)
        data.Z(r, k) = (k <= n_binary_covariates)
                           ? (unif(eng) < 0.5 ? 0.0 : 1.0)
                           : normal(eng);

      arma::vec eta(T - 1);
      for (arma::uword t = 1; t < T; ++t)
        eta[t - 1] =
            arma::dot(truth.strct.Gamma.slice(w).row(t - 1), data.Z.row(r));
      const arma::uword x = draw_categorical(softmax_ref(eta), unif(eng));
      if (latent_x != nullptr) (*latent_x)[r] = x;
      for (arma::uword h = 0; h < H; ++h)
        data.Y(r, h) = unif(eng) < truth.meas.Phi(h, x) ? 1.0 : 0.0;
    }
  }
  data.offsets[J] = N;
  return data;
}

std::pair<Dataset, SimTruth> generate(const SimCondition& cond,
                                      std::uint64_t seed) {
  SimTruth truth = condition_truth(cond);
  return {generate_from(truth, cond.J, cond.n_low, seed), truth};
}

EmControl study_defaults() {
  EmControl ctrl;
  ctrl.max_iter = 500;
  ctrl.tol = 1e-8;
  ctrl.n_starts = 1;
  ctrl.n_threads = 1;
  return ctrl;
}

namespace {

ReplicateRecord run_one_fit(const Dataset& data, const ModelDims& dims,
                            const SimTruth& truth, Method method,
                            const EmControl& ctrl) {
  ReplicateRecord rec;
  rec.estimator = method;
  const double cpu0 = thread_cpu_seconds();
  try {
    FitResult fit_result = fit(method, data, dims, ctrl);
    rec.cpu_seconds = thread_cpu_seconds() - cpu0;

    const LabelAlignment align =
        align_labels(fit_result.meas.Phi, fit_result.strct.Pi, truth.meas.Phi,
                     truth.strct.Pi, dims.K);
    apply_alignment(fit_result, align);

    rec.ok = true;
    rec.converged = fit_result.converged;
    rec.n_iter = fit_result.total_iterations();
    rec.estimate = fit_result.theta2;
    rec.se = fit_result.se;
    rec.truth = flatten_theta2(truth.strct);
    rec.ci_hit.resize(rec.estimate.n_elem);
    for (arma::uword p = 0; p < rec.estimate.n_elem; ++p)
      rec.ci_hit[p] = std::abs(rec.estimate[p] - rec.truth[p]) <=
                              1.96 * rec.se[p]
                          ? 1
                          : 0;

    if (method == Method::two_step) {
      const arma::mat D = fit_result.covariance - fit_result.covariance_naive;
      const arma::vec eigs = arma::eig_sym(0.5 * (D + D.t()));
      rec.correction_psd = eigs.min() >= -1e-10 ? 1 : 0;
      rec.se_inflation_ok =
          arma::all(fit_result.covariance.diag() >=
                    fit_result.covariance_naive.diag() - 1e-12)
              ? 1
              : 0;
    }
  } catch (const std::exception& e) {
    rec.cpu_seconds = thread_cpu_seconds() - cpu0;
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

StudyMetrics run_study(const std::vector<int>& conditions, int R,
                       const std::vector<Method>& estimators,
                       std::uint64_t seed, int workers,
                       const EmControl& ctrl) {
  if (R < 2) throw DataError("run_study: at least two replicates required");
  if (conditions.empty() || estimators.empty())
    throw DataError("run_study: empty condition or estimator list");

  const std::size_t n_cond = conditions.size();
  const std::size_t n_est = estimators.size();
  const std::size_t n_tasks = n_cond * static_cast<std::size_t>(R);

  StudyMetrics study;
  study.replicates.resize(n_tasks * n_est);

  parallel_for(n_tasks, workers, [&](std::size_t task) {
    const std::size_t c = task / R;
    const int r = static_cast<int>(task % R);
    const SimCondition cond = SimCondition::from_id(conditions[c]);
    const std::uint64_t rep_seed =
        derive_seed(seed, static_cast<std::uint64_t>(cond.id),
                    static_cast<std::uint64_t>(r));
    const auto [data, truth] = generate(cond, rep_seed);
    const ModelDims dims = data.dims(SimCondition::T, SimCondition::M);

    EmControl local = ctrl;
    local.n_threads = 1;
    local.seed = derive_seed(rep_seed, 0xf17);
    for (std::size_t e = 0; e < n_est; ++e) {
      ReplicateRecord rec =
          run_one_fit(data, dims, truth, estimators[e], local);
      rec.condition = cond.id;
      rec.replicate = r;
      study.replicates[(task * n_est) + e] = std::move(rec);
    }
  });

  study.parameter_names =
      theta2_labels(SimCondition::T, SimCondition::M, 2);
  const arma::uword p2 = study.parameter_names.size();

  // aggregate per (condition, estimator, parameter)
  for (std::size_t c = 0; c < n_cond; ++c) {
    // completed-replicate estimate matrix per estimator, for paired ratios
    std::map<std::size_t, arma::mat> est_matrix;  // p2 x R, NaN when failed
    for (std::size_t e = 0; e < n_est; ++e) {
      arma::mat E(p2, R);
      E.fill(arma::datum::nan);
      for (int r = 0; r < R; ++r) {
        const ReplicateRecord& rec =
            study.replicates[(c * R + r) * n_est + e];
        if (rec.ok) E.col(r) = rec.estimate;
      }
      est_matrix[e] = std::move(E);
    }
    std::ptrdiff_t one_step_idx = -1;
    for (std::size_t e = 0; e < n_est; ++e)
      if (estimators[e] == Method::one_step) one_step_idx = e;

    for (std::size_t e = 0; e < n_est; ++e) {
      int n_ok = 0, n_fail = 0, n_conv = 0;
      double cpu = 0.0;
      arma::vec truth_vals;
      std::vector<double> coverage(p2, 0.0);
      for (int r = 0; r < R; ++r) {
        const ReplicateRecord& rec =
            study.replicates[(c * R + r) * n_est + e];
        if (!rec.ok) {
          ++n_fail;
          continue;
        }
        ++n_ok;
        if (rec.converged) ++n_conv;
        cpu += rec.cpu_seconds;
        truth_vals = rec.truth;
        for (arma::uword p = 0; p < p2; ++p) coverage[p] += rec.ci_hit[p];
      }

      for (arma::uword p = 0; p < p2; ++p) {
        CellMetrics cell;
        cell.condition = conditions[c];
        cell.estimator = estimators[e];
        cell.parameter = study.parameter_names[p];
        cell.n_used = n_ok;
        cell.n_failed = n_fail;
        cell.unreliable = n_fail > R / 5;
        cell.convergence_rate = n_ok > 0 ? double(n_conv) / n_ok : 0.0;
        cell.mean_cpu = n_ok > 0 ? cpu / n_ok : 0.0;
        cell.truth = truth_vals.is_empty() ? arma::datum::nan : truth_vals[p];
        cell.coverage = n_ok > 0 ? coverage[p] / n_ok : arma::datum::nan;

        const arma::rowvec vals = est_matrix[e].row(p);
        std::vector<double> done;
        for (int r = 0; r < R; ++r)
          if (std::isfinite(vals[r])) done.push_back(vals[r]);
        if (!done.empty()) {
          const arma::vec dv(done);
          cell.mean_bias = arma::mean(dv) - cell.truth;
          cell.mc_sd = dv.n_elem > 1 ? arma::stddev(dv, 0) : 0.0;
        } else {
          cell.mean_bias = arma::datum::nan;
          cell.mc_sd = arma::datum::nan;
        }

        cell.rel_sd_vs_one_step = arma::datum::nan;
        if (one_step_idx >= 0 &&
            estimators[e] != Method::one_step) {
          // ratio over the replicates where both fits completed
          const arma::rowvec base =
              est_matrix[static_cast<std::size_t>(one_step_idx)].row(p);
          std::vector<double> a, b;
          for (int r = 0; r < R; ++r) {
            if (std::isfinite(vals[r]) && std::isfinite(base[r])) {
              a.push_back(vals[r]);
              b.push_back(base[r]);
            }
          }
          if (a.size() > 1) {
            const double sd_a = arma::stddev(arma::vec(a), 0);
            const double sd_b = arma::stddev(arma::vec(b), 0);
            cell.rel_sd_vs_one_step = sd_b > 0.0 ? sd_a / sd_b
                                                 : arma::datum::nan;
          }
        } else if (estimators[e] == Method::one_step) {
          cell.rel_sd_vs_one_step = 1.0;
        }
        study.cells.push_back(std::move(cell));
      }
    }
  }
  return study;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

void write_replicates_csv(const StudyMetrics& study, std::ostream& os,
                          bool include_timing) {
  os << "condition,replicate,estimator,ok,converged,cpu_seconds,n_iter,"
        "parameter,estimate,truth,se,ci_hit\n";
  for (const auto& rec : study.replicates) {
    const std::string cpu = include_timing ? fmt(rec.cpu_seconds) : "";
    if (!rec.ok) {
      os << rec.condition << ',' << rec.replicate << ','
         << to_string(rec.estimator) << ",0,0," << cpu << ',' << rec.n_iter
         << ",,,,," << '\n';
      continue;
    }
    for (arma::uword p = 0; p < rec.estimate.n_elem; ++p) {
      os << rec.condition << ',' << rec.replicate << ','
         << to_string(rec.estimator) << ",1," << (rec.converged ? 1 : 0) << ','
         << cpu << ',' << rec.n_iter << ','
         << study.parameter_names[p] << ',' << fmt(rec.estimate[p]) << ','
         << fmt(rec.truth[p]) << ',' << fmt(rec.se[p]) << ','
         << int(rec.ci_hit[p]) << '\n';
    }
  }
}

void write_metrics_csv(const StudyMetrics& study, std::ostream& os,
                       bool include_timing) {
  os << "condition,estimator,parameter,truth,mean_bias,mc_sd,"
        "rel_sd_vs_one_step,coverage,mean_cpu,convergence_rate,n_used,"
        "n_failed,unreliable\n";
  for (const auto& cell : study.cells) {
    os << cell.condition << ',' << to_string(cell.estimator) << ','
       << cell.parameter << ',' << fmt(cell.truth) << ','
       << fmt(cell.mean_bias) << ',' << fmt(cell.mc_sd) << ','
       << fmt(cell.rel_sd_vs_one_step) << ',' << fmt(cell.coverage) << ','
       << (include_timing ? fmt(cell.mean_cpu) : std::string()) << ','
       << fmt(cell.convergence_rate) << ','
       << cell.n_used << ',' << cell.n_failed << ','
       << (cell.unreliable ? 1 : 0) << '\n';
  }
}

void write_metrics_long_csv(const StudyMetrics& study, std::ostream& os,
                            bool include_timing) {
  os << "condition,estimator,parameter,metric,value\n";
  for (const auto& cell : study.cells) {
    const std::pair<const char*, double> metrics[] = {
        {"mean_bias", cell.mean_bias},
        {"mc_sd", cell.mc_sd},
        {"rel_sd_vs_one_step", cell.rel_sd_vs_one_step},
        {"coverage", cell.coverage},
        {"mean_cpu", cell.mean_cpu},
        {"convergence_rate", cell.convergence_rate},
    };
    for (const auto& [name, value] : metrics) {
      if (!include_timing && std::string(name) == "mean_cpu") continue;
      os << cell.condition << ',' << to_string(cell.estimator) << ','
         << cell.parameter << ',' << name << ',' << fmt(value) << '\n';
    }
  }
}

}  // namespace mlc
