#include <doctest.h>

#include <armadillo>
#include <cmath>
#include <sstream>

#include "mlc/rng.hpp"
#include "mlc/simulate.hpp"

using namespace mlc;

TEST_CASE("the condition table matches the crossed design") {
  const SimCondition c1 = SimCondition::from_id(1);
  CHECK(c1.n_low == 100);
  CHECK(c1.J == 30);
  CHECK(c1.phi_high == doctest::Approx(0.7));
  CHECK(c1.hl_separation() == "moderate");

  const SimCondition c19 = SimCondition::from_id(19);
  CHECK(c19.n_low == 100);
  CHECK(c19.J == 30);
  CHECK(c19.ll_separation() == "small");
  CHECK(c19.hl_separation() == "large");
  CHECK(c19.intercepts_m1[0] == doctest::Approx(-1.38));
  CHECK(c19.intercepts_m1[1] == doctest::Approx(-2.07));

  const SimCondition c31 = SimCondition::from_id(31);
  CHECK(c31.n_low == 100);
  CHECK(c31.J == 30);
  CHECK(c31.ll_separation() == "large");
  CHECK(c31.hl_separation() == "large");

  const SimCondition c36 = SimCondition::from_id(36);
  CHECK(c36.n_low == 500);
  CHECK(c36.J == 100);
  CHECK(c36.phi_high == doctest::Approx(0.9));
  CHECK(c36.hl_separation() == "large");

  CHECK_THROWS_AS(SimCondition::from_id(0), DataError);
  CHECK_THROWS_AS(SimCondition::from_id(37), DataError);
}

TEST_CASE("generated item frequencies match the class profiles") {
  const SimCondition cond = SimCondition::from_id(36);  // 50000 units
  const SimTruth truth = condition_truth(cond);
  arma::uvec w, x;
  const Dataset data =
      generate_from(truth, cond.J, cond.n_low, 2024, 0, &w, &x);

  for (arma::uword t = 0; t < 3; ++t) {
    const arma::uvec members = arma::find(x == t);
    REQUIRE(members.n_elem > 1000);
    const arma::rowvec freq = arma::mean(data.Y.rows(members), 0);
    for (arma::uword h = 0; h < 10; ++h)
      CHECK(std::abs(freq[h] - truth.meas.Phi(h, t)) < 0.01);
  }
}

TEST_CASE("class membership follows the logits along the covariate") {
  const SimCondition cond = SimCondition::from_id(36);
  const SimTruth truth = condition_truth(cond);
  arma::uvec w, x;
  const Dataset data =
      generate_from(truth, cond.J, cond.n_low, 77, 0, &w, &x);

  // bin the covariate and compare class shares with the model curve
  const arma::vec z = data.Z.col(1);
  const arma::vec edges = {-2.0, -1.0, -0.3, 0.3, 1.0, 2.0};
  for (arma::uword m = 0; m < 2; ++m) {
    for (arma::uword b = 0; b + 1 < edges.n_elem; ++b) {
      std::vector<arma::uword> idx;
      for (arma::uword i = 0; i < data.n_units(); ++i)
        if (w[data.group[i]] == m && z[i] >= edges[b] && z[i] < edges[b + 1])
          idx.push_back(i);
      if (idx.size() < 1500) continue;
      arma::vec shares(3, arma::fill::zeros);
      double zbar = 0.0;
      for (const arma::uword i : idx) {
        shares[x[i]] += 1.0;
        zbar += z[i];
      }
      shares /= double(idx.size());
      zbar /= double(idx.size());
      arma::vec eta(2);
      for (arma::uword t = 1; t < 3; ++t)
        eta[t - 1] = truth.strct.Gamma(t - 1, 0, m) +
                     truth.strct.Gamma(t - 1, 1, m) * zbar;
      const arma::vec expected = softmax_ref(eta);
      for (arma::uword t = 0; t < 3; ++t)
        CHECK(std::abs(shares[t] - expected[t]) < 0.02);
    }
  }
}

TEST_CASE("no covariate effect makes the class levels independent") {
  SimTruth truth = condition_truth(SimCondition::from_id(36));
  arma::cube Gamma(2, 2, 2, arma::fill::zeros);
  Gamma.slice(0).col(0) = arma::vec{-0.5, -0.8};
  Gamma.slice(1).col(0) = arma::vec{-0.5, -0.8};  // same intercepts, no slopes
  truth.strct = StructuralParams::from_gamma(arma::vec{0.5, 0.5}, Gamma);

  arma::uvec w, x;
  generate_from(truth, 100, 200, 5150, 0, &w, &x);
  arma::mat counts(2, 3, arma::fill::zeros);
  arma::uword r = 0;
  for (arma::uword j = 0; j < 100; ++j)
    for (arma::uword i = 0; i < 200; ++i, ++r) counts(w[j], x[r]) += 1.0;

  // Pearson chi-square against independence; df = 2, the 1% critical value
  const double total = arma::accu(counts);
  double stat = 0.0;
  for (arma::uword a = 0; a < 2; ++a)
    for (arma::uword b = 0; b < 3; ++b) {
      const double expected =
          arma::accu(counts.row(a)) * arma::accu(counts.col(b)) / total;
      stat += std::pow(counts(a, b) - expected, 2) / expected;
    }
  CHECK(stat < 9.21);
}

TEST_CASE("generation is deterministic in the seed") {
  const SimCondition cond = SimCondition::from_id(7);
  const auto [d1, t1] = generate(cond, 99);
  const auto [d2, t2] = generate(cond, 99);
  CHECK(arma::abs(d1.Y - d2.Y).max() == 0.0);
  CHECK(arma::abs(d1.Z - d2.Z).max() == 0.0);
  const auto [d3, t3] = generate(cond, 100);
  CHECK(arma::abs(d1.Y - d3.Y).max() > 0.0);
}

TEST_CASE("study runs are reproducible and worker-count independent") {
  const std::vector<int> conds{1};
  const std::vector<Method> est{Method::one_step, Method::two_step};
  EmControl ctrl = study_defaults();
  ctrl.max_iter = 200;

  const StudyMetrics a = run_study(conds, 3, est, 31337, 1, ctrl);
  const StudyMetrics b = run_study(conds, 3, est, 31337, 1, ctrl);
  const StudyMetrics c = run_study(conds, 3, est, 31337, 2, ctrl);

  auto csv_of = [](const StudyMetrics& s) {
    std::ostringstream os;
    write_replicates_csv(s, os, /*include_timing=*/false);
    write_metrics_csv(s, os, /*include_timing=*/false);
    return os.str();
  };
  CHECK(csv_of(a) == csv_of(b));
  CHECK(csv_of(a) == csv_of(c));
}

TEST_CASE("study metrics have the expected shape") {
  const std::vector<int> conds{1};
  const std::vector<Method> est{Method::one_step, Method::two_step,
                                Method::two_stage};
  EmControl ctrl = study_defaults();
  ctrl.max_iter = 150;
  const StudyMetrics study = run_study(conds, 3, est, 555, 2, ctrl);

  CHECK(study.replicates.size() == 9);
  CHECK(study.parameter_names.size() == 9);  // 1 + 2*2*2 for T=3, M=2, K=2
  CHECK(study.cells.size() == 3 * 9);
  for (const auto& cell : study.cells) {
    if (cell.n_used > 0) {
      CHECK(cell.coverage >= 0.0);
      CHECK(cell.coverage <= 1.0);
    }
    if (cell.estimator == Method::one_step)
      CHECK(cell.rel_sd_vs_one_step == doctest::Approx(1.0));
  }
  for (const auto& rec : study.replicates) {
    CHECK(rec.ok);
    CHECK(rec.se_inflation_ok == 1);
    CHECK(rec.correction_psd == 1);
  }
}
