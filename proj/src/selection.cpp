#include "mlc/selection.hpp"

#include <cmath>
#include <limits>

#include "mlc/init.hpp"
#include "mlc/parallel.hpp"

namespace mlc {

IcValues information_criteria(double loglik, arma::uword npar, arma::uword N,
                              arma::uword J) {
  const double p = static_cast<double>(npar);
  return {-2.0 * loglik + 2.0 * p,
          -2.0 * loglik + p * std::log(static_cast<double>(N)),
          -2.0 * loglik + p * std::log(static_cast<double>(J))};
}

double entropy_r2(const Posteriors& post, Level level, WarningLog* warnings) {
  auto neg_entropy_term = [](double p) {
    return p > 0.0 ? -p * std::log(p) : 0.0;
  };

  arma::mat probs;  // rows are units (or groups), columns classes
  if (level == Level::high) {
    probs = post.u;
  } else {
    probs = post.v.slice(0);
    for (arma::uword m = 1; m < post.v.n_slices; ++m) probs += post.v.slice(m);
    probs.each_col() /= arma::sum(probs, 1);
  }

  const arma::rowvec marginal = arma::mean(probs, 0);
  double total = 0.0;
  for (const double p : marginal) total += neg_entropy_term(p);
  total *= static_cast<double>(probs.n_rows);

  if (total <= 0.0) {
    warn(warnings, "entropy_r2: degenerate single class, returning 1");
    return 1.0;
  }
  double observed = 0.0;
  for (const double p : probs) observed += neg_entropy_term(p);
  return 1.0 - observed / total;
}

namespace {

SelectionRow fit_cell(const Dataset& data, arma::uword T, arma::uword M,
                      int phase, const EmControl& ctrl) {
  SelectionRow row;
  row.T = T;
  row.M = M;
  row.phase = phase;
  try {
    Step1Fit fit;
    if (M == 1) {
      fit = single_level_lca(data, T, ctrl);
    } else {
      const ModelDims dims = data.dims(T, M);
      const StartingValues start = hierarchical_init(data, dims, ctrl.seed);
      fit = fit_unconditional(data, dims, start, ctrl);
    }
    row.loglik = fit.loglik();
    row.npar = npar_unconditional(T, M, data.n_items());
    const IcValues ic = information_criteria(row.loglik, row.npar,
                                             data.n_units(), data.n_groups());
    row.aic = ic.aic;
    row.bic_n = ic.bic_n;
    row.bic_j = ic.bic_j;
    const Posteriors post =
        e_step(data, {fit.Phi}, StructuralParams::from_pi(fit.omega, fit.Pi),
               Mode::unconditional, ctrl.n_threads);
    row.r2_low = entropy_r2(post, Level::low);
    row.r2_high = entropy_r2(post, Level::high);
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

// lowest criterion among the non-failed rows in [from, rows.size());
// ties go to the earlier (smaller class count) row
template <typename Crit>
const SelectionRow* argmin_row(const std::vector<SelectionRow>& rows,
                               std::size_t from, Crit crit) {
  const SelectionRow* best = nullptr;
  for (std::size_t i = from; i < rows.size(); ++i) {
    const SelectionRow& r = rows[i];
    if (r.failed) continue;
    if (best == nullptr || crit(r) < crit(*best)) best = &r;
  }
  return best;
}

}  // namespace

SelectionTable hierarchical_select(const Dataset& data,
                                   const std::vector<arma::uword>& T_range,
                                   const std::vector<arma::uword>& M_range,
                                   const EmControl& ctrl, int workers) {
  if (T_range.empty() || M_range.empty())
    throw DataError("hierarchical_select: empty class-number range");

  SelectionTable table;
  auto scan = [&](const std::vector<arma::uword>& Ts,
                  const std::vector<arma::uword>& Ms, int phase) {
    std::vector<SelectionRow> rows(Ts.size() * Ms.size());
    parallel_for(rows.size(), workers, [&](std::size_t i) {
      EmControl local = ctrl;
      local.n_threads = 1;
      rows[i] = fit_cell(data, Ts[i % Ts.size()], Ms[i / Ts.size()], phase,
                         local);
    });
    for (auto& r : rows) {
      if (r.failed)
        table.warnings.push_back("fit for T=" + std::to_string(r.T) + ", M=" +
                                 std::to_string(r.M) + " failed: " + r.error);
      table.rows.push_back(std::move(r));
    }
    return rows.size();
  };

  // phase 1: pooled models, choose T by BIC(N)
  const std::size_t p1_first = table.rows.size();
  scan(T_range, {1}, 1);
  const SelectionRow* best1 = argmin_row(
      table.rows, p1_first, [](const SelectionRow& r) { return r.bic_n; });
  if (best1 == nullptr)
    throw NumericalError("hierarchical_select: every pooled fit failed");
  table.phase1_T = best1->T;

  // phase 2: multilevel models at that T, choose M by BIC(J)
  const std::size_t p2_first = table.rows.size();
  scan({table.phase1_T}, M_range, 2);
  const SelectionRow* best2 = argmin_row(
      table.rows, p2_first, [](const SelectionRow& r) { return r.bic_j; });
  if (best2 == nullptr)
    throw NumericalError("hierarchical_select: every multilevel fit failed");
  table.chosen_M = best2->M;

  // phase 3: re-scan T with M fixed; the low-level choice may change once
  // within-group associations are accounted for
  const std::size_t p3_first = table.rows.size();
  scan(T_range, {table.chosen_M}, 3);
  const SelectionRow* best3 = argmin_row(
      table.rows, p3_first, [](const SelectionRow& r) { return r.bic_n; });
  table.chosen_T = best3 != nullptr ? best3->T : table.phase1_T;
  if (table.chosen_T != table.phase1_T)
    table.warnings.push_back(
        "low-level class count revised from " + std::to_string(table.phase1_T) +
        " to " + std::to_string(table.chosen_T) + " in the final scan");
  return table;
}

}  // namespace mlc
