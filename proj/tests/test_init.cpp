#include <doctest.h>

#include <algorithm>
#include <armadillo>
#include <cmath>

#include "mlc/init.hpp"
#include "mlc/posterior.hpp"
#include "mlc/rng.hpp"
#include "support/fixtures.hpp"

using namespace mlc;

TEST_CASE("k-modes recovers perfectly separated blocks") {
  arma::mat Y(10, 4, arma::fill::zeros);
  Y.rows(0, 4).fill(1.0);  // first block all ones
  const KModesResult res = kmodes(Y, 2, 5);
  CHECK(res.cost == doctest::Approx(0.0));
  for (arma::uword r = 1; r < 5; ++r)
    CHECK(res.assignment[r] == res.assignment[0]);
  for (arma::uword r = 6; r < 10; ++r)
    CHECK(res.assignment[r] == res.assignment[5]);
  CHECK(res.assignment[0] != res.assignment[5]);
}

TEST_CASE("one cluster yields the column-wise majority mode") {
  arma::mat Y{{1, 0}, {1, 0}, {1, 1}, {0, 1}, {1, 0}};
  const KModesResult res = kmodes(Y, 1, 5);
  CHECK(res.modes(0, 0) == 1);
  CHECK(res.modes(0, 1) == 0);
  CHECK(res.cost == doctest::Approx(1.0 + 2.0));
}

TEST_CASE("k-modes matches the exhaustive best 2-partition on a toy set") {
  arma::mat Y{{0, 0, 0, 0}, {0, 0, 0, 1}, {1, 0, 0, 0},
              {1, 1, 1, 1}, {1, 1, 1, 0}, {0, 1, 1, 1}};
  const KModesResult res = kmodes(Y, 2, 9);

  // brute force over all assignments of 6 rows to 2 clusters
  double best = 1e300;
  for (unsigned mask = 0; mask < 64; ++mask) {
    double cost = 0.0;
    for (int cluster = 0; cluster < 2; ++cluster) {
      std::vector<arma::uword> members;
      for (arma::uword r = 0; r < 6; ++r)
        if (((mask >> r) & 1u) == static_cast<unsigned>(cluster))
          members.push_back(r);
      if (members.empty()) continue;
      for (arma::uword c = 0; c < 4; ++c) {
        double ones = 0.0;
        for (const arma::uword r : members) ones += Y(r, c);
        const double zeros = members.size() - ones;
        cost += std::min(ones, zeros);  // majority mode cost per column
      }
    }
    best = std::min(best, cost);
  }
  CHECK(res.cost == doctest::Approx(best));
}

TEST_CASE("k-modes cost never increases with more sweeps") {
  auto eng = make_engine(33);
  const Dataset data = fixtures::random_dataset(5, 30, 6, 1, eng);
  double prev = 1e300;
  for (int iters = 1; iters <= 6; ++iters) {
    const KModesResult res = kmodes(data.Y, 3, 12, iters, 1);
    CHECK(res.cost <= prev + 1e-12);
    prev = res.cost;
  }
}

TEST_CASE("more clusters than distinct rows warns and still runs") {
  arma::mat Y(8, 3, arma::fill::zeros);
  Y.rows(4, 7).fill(1.0);  // only two distinct rows
  const KModesResult res = kmodes(Y, 3, 4);
  CHECK(!res.warnings.empty());
  CHECK(res.assignment.n_elem == 8);
}

TEST_CASE("hierarchical start lands close to separated truth") {
  const auto [data, truth] = fixtures::separated_data(40, 60, 55);
  const ModelDims dims = data.dims(3, 2);
  const StartingValues start = hierarchical_init(data, dims, 2);

  // truth classes are already ordered by decreasing response means
  CHECK(arma::abs(start.Phi - truth.meas.Phi).max() < 0.05);
  CHECK(std::abs(arma::accu(start.omega) - 1.0) < 1e-12);
  for (arma::uword m = 0; m < 2; ++m)
    CHECK(std::abs(arma::accu(start.Pi.row(m)) - 1.0) < 1e-12);
  CHECK(start.Phi.min() > 0.0);
  CHECK(start.Phi.max() < 1.0);
}

TEST_CASE("single high-level class start") {
  auto eng = make_engine(34);
  const Dataset data = fixtures::random_dataset(4, 10, 3, 1, eng);
  const StartingValues start = hierarchical_init(data, data.dims(2, 1), 3);
  CHECK(start.omega.n_elem == 1);
  CHECK(start.omega[0] == doctest::Approx(1.0));
  CHECK(std::abs(arma::accu(start.Pi.row(0)) - 1.0) < 1e-12);
}

TEST_CASE("fully degenerate one-class start") {
  auto eng = make_engine(35);
  const Dataset data = fixtures::random_dataset(3, 8, 3, 1, eng);
  const StartingValues start = hierarchical_init(data, data.dims(1, 1), 3);
  CHECK(start.Phi.n_cols == 1);
  const arma::vec means = arma::mean(data.Y, 0).t();
  CHECK(arma::abs(start.Phi.col(0) - means).max() < 0.02);
}

TEST_CASE("class reordering sorts by decreasing response means") {
  MeasurementParams meas{arma::mat(4, 3)};
  meas.Phi.col(0).fill(0.3);
  meas.Phi.col(1).fill(0.9);
  meas.Phi.col(2).fill(0.5);
  StructuralParams strct = StructuralParams::from_pi(
      arma::vec{0.6, 0.4}, arma::mat{{0.2, 0.5, 0.3}, {0.1, 0.6, 0.3}});

  const arma::uvec perm = reorder_classes(meas, strct);
  CHECK(perm[0] == 1);
  CHECK(perm[1] == 2);
  CHECK(perm[2] == 0);
  CHECK(meas.Phi(0, 0) == doctest::Approx(0.9));
  CHECK(strct.Pi(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(strct.Pi(0, 2) == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("already sorted classes keep their order") {
  MeasurementParams meas{arma::mat(3, 2)};
  meas.Phi.col(0).fill(0.8);
  meas.Phi.col(1).fill(0.2);
  StructuralParams strct = StructuralParams::from_pi(
      arma::vec{1.0}, arma::mat{{0.5, 0.5}});
  const arma::uvec perm = reorder_classes(meas, strct);
  CHECK(perm[0] == 0);
  CHECK(perm[1] == 1);
}

TEST_CASE("tied ordering keys warn and keep the stable order") {
  MeasurementParams meas{arma::mat(3, 2, arma::fill::value(0.5))};
  StructuralParams strct = StructuralParams::from_pi(
      arma::vec{1.0}, arma::mat{{0.4, 0.6}});
  WarningLog log;
  const arma::uvec perm = reorder_classes(meas, strct, &log);
  CHECK(perm[0] == 0);
  CHECK(perm[1] == 1);
  CHECK(!log.empty());
}

TEST_CASE("reordering is a pure relabeling of the model") {
  auto eng = make_engine(36);
  const Dataset data = fixtures::random_dataset(4, 6, 4, 1, eng);
  MeasurementParams meas = fixtures::random_phi(4, 3, eng);
  StructuralParams strct = fixtures::random_structural(3, 2, eng);
  const double before = loglik(data, meas, strct, Mode::unconditional);
  reorder_classes(meas, strct);
  const double after = loglik(data, meas, strct, Mode::unconditional);
  CHECK(after == doctest::Approx(before).epsilon(1e-10));
}
