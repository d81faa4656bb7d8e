#include "oracles.hpp"
#include "rcm/coarse.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace rcm;
using namespace rcm::coarse;
using cluster::Threshold;
using rcm::env::ConductanceField;

namespace {

ConductanceField dangling(double beta) {
  auto f = ConductanceField::uniform(Lattice(2, 4), 1.0);
  const auto& lat = f.lattice();
  const auto w = lat.index(Point{1, 0});
  f.set_omega(lat.origin(), 0, +1, beta);
  f.set_omega(w, 0, +1, 0.0);
  f.set_omega(w, 1, +1, 0.0);
  f.set_omega(w, 1, -1, 0.0);
  return f;
}

}  // namespace

TEST_CASE("dangling weak site") {
  const auto f = dangling(0.1);
  const auto strong = cluster::components(f, Threshold::at_least(1.0));
  const auto& lat = f.lattice();
  const auto x = lat.origin();
  const auto h = hat_chain(f, strong, x);
  CHECK(h.pi == doctest::Approx(3.1));
  CHECK(h.expected_hiding_time == doctest::Approx(1 + 0.1 / 3.1).epsilon(1e-13));
  CHECK(h.expected_hiding_time == doctest::Approx(1.032258).epsilon(1e-6));
  CHECK(h.prob(x) == doctest::Approx(0.1 / 3.1).epsilon(1e-13));
  for (const Point y : {Point{-1, 0}, Point{0, 1}, Point{0, -1}}) CHECK(h.prob(lat.index(y)) == doctest::Approx(1 / 3.1));
  CHECK(h.g_size == 2);
  CHECK(h.weak_size == 1);
  CHECK(h.row_sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h.hiding_bound(2, 1.0) == doctest::Approx(16.0));
  CHECK_FALSE(h.approximate);

  // a strong site with no weak neighbor keeps its one-step row
  const auto y = lat.index(Point{-2, 2});
  const auto g = hat_chain(f, strong, y);
  CHECK(g.expected_hiding_time == 1.0);
  CHECK(g.row.size() == 4);
  CHECK(g.entropy() == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(hat_chain(f, strong, lat.index(Point{1, 0})), NotStrongError);
}

TEST_CASE("rows match an independent mass-propagation oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto f = env::sample_field(2, 5, env::TwoValue{0.7, 10}, seed);
    const auto strong = cluster::components(f, Threshold::at_least(1.0));
    const auto D = oracle::dense_chain(f);
    const auto& lat = f.lattice();
    std::set<int> strong_set;
    for (std::size_t i = 0; i < D.sites.size(); ++i) {
      if (strong.in_largest(lat.index(D.sites[i]))) strong_set.insert(static_cast<int>(i));
    }
    int checked = 0;
    for (int i : strong_set) {
      const auto ref = oracle::hat_row(D, strong_set, i);
      const auto h = hat_chain(f, strong, lat.index(D.sites[static_cast<std::size_t>(i)]));
      CHECK(h.expected_hiding_time == doctest::Approx(ref.mean_time).epsilon(1e-10));
      CHECK(h.row.size() == ref.row.size());
      for (const auto& [j, p] : ref.row) {
        CHECK(h.prob(lat.index(D.sites[static_cast<std::size_t>(j)])) == doctest::Approx(p).epsilon(1e-10));
      }
      ++checked;
    }
    CHECK(checked > 20);
  }
}

TEST_CASE("solvers agree") {
  const auto f = env::sample_field(2, 8, env::TwoValue{0.62, 20}, 4);
  const auto strong = cluster::components(f, Threshold::at_least(1.0));
  SolverOptions iter;
  iter.dense_limit = 0;
  SolverOptions mc;
  mc.dense_limit = 0;
  mc.iterative_limit = 0;
  mc.mc_walkers = 200000;
  mc.mc_seed = 5;
  int with_weak = 0;
  const auto& lat = f.lattice();
  for (std::int64_t s = 0; s < lat.num_sites() && with_weak < 5; ++s) {
    if (!strong.in_largest(s)) continue;
    const auto a = hat_chain(f, strong, s);
    if (a.weak_size == 0) continue;
    ++with_weak;
    const auto b = hat_chain(f, strong, s, iter);
    CHECK(a.solver == "dense");
    CHECK(b.solver == "iterative");
    CHECK(b.expected_hiding_time == doctest::Approx(a.expected_hiding_time).epsilon(1e-9));
    for (const auto& [y, p] : a.row) CHECK(b.prob(y) == doctest::Approx(p).epsilon(1e-9));
    const auto c = hat_chain(f, strong, s, mc);
    CHECK(c.approximate);
    CHECK(c.solver == "mc");
    for (const auto& [y, p] : a.row) CHECK(std::abs(c.prob(y) - p) <= 4 * std::sqrt(p * (1 - p) / 200000) + 1e-12);
  }
  CHECK(with_weak == 5);
}

TEST_CASE("coarse chain is reversible with unit rows") {
  const auto f = env::sample_field(2, 10, env::DyadicPolyLog{0.7, 0.5}, 2);
  const auto strong = cluster::components(f, Threshold::at_least(1.0));
  const auto a = hat_matrix(f, strong, {}, 1);
  const auto b = hat_matrix(f, strong, {}, 3);
  CHECK(a.max_symmetry_residual() < 1e-10);
  CHECK(a.max_row_sum_error() < 1e-12);
  REQUIRE(a.states == b.states);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].row == b.rows[i].row);
  CHECK(static_cast<std::int64_t>(a.states.size()) == strong.largest_size());

  // power returns against explicit products
  const auto x = a.states[a.states.size() / 2];
  const auto pw = hat_power_returns(a, x, 3);
  REQUIRE(pw.size() == 4);
  CHECK(pw[0] == 1.0);
  CHECK(pw[1] == doctest::Approx(a.at(x).prob(x)));
  double two = 0;
  for (const auto& [y, p] : a.at(x).row) two += p * a.at(y).prob(x);
  CHECK(pw[2] == doctest::Approx(two).epsilon(1e-12));
}

TEST_CASE("hiding time census") {
  const auto f = env::sample_field(2, 20, env::TwoValue{0.7, 100}, 3);
  const auto strong = cluster::components(f, Threshold::at_least(1.0));
  std::vector<std::int64_t> sites;
  for (std::int64_t s = 0; s < f.lattice().num_sites(); s += 7) {
    if (strong.in_largest(s)) sites.push_back(s);
  }
  const auto a = hiding_time_census(f, strong, sites, {}, 1);
  const auto b = hiding_time_census(f, strong, sites, {}, 2);
  REQUIRE(a.rows.size() == sites.size());
  CHECK(a.bound_holds);
  CHECK(a.max_ratio <= 1);
  CHECK(a.mean_g_size >= 1);
  CHECK(a.mean_g_size == b.mean_g_size);
  CHECK(a.max_ratio == b.max_ratio);
  for (const auto& r : a.rows) {
    CHECK(r.expected_hiding_time >= 1);
    CHECK(r.expected_hiding_time <= r.bound);
  }
}

TEST_CASE("coarse monte carlo at l=1, n=1") {
  const auto f = dangling(0.5);
  const auto strong = cluster::components(f, Threshold::at_least(1.0));
  const auto x = f.lattice().origin();
  const double p = hat_chain(f, strong, x).prob(x);
  const auto est = mc_coarse_return(f, strong, x, 1, 1, 100000, 11);
  CHECK(std::abs(est.value - p) <= 4 * est.stderr_);
  // T_1 = 2 exactly when the walk steps onto the dangling site
  const auto late = mc_coarse_return(f, strong, x, 1, 2, 100000, 11);
  CHECK(std::abs(late.value - 0.5 / 3.5) <= 4 * late.stderr_);
  CHECK(mc_coarse_return(f, strong, x, 1, 3, 100000, 11).value == 0.0);

  const auto grid = mc_coarse_returns(f, strong, x, {1, 2}, {1, 3}, 20000, 4, 1);
  const auto grid2 = mc_coarse_returns(f, strong, x, {1, 2}, {1, 3}, 20000, 4, 3);
  CHECK(grid.estimate == grid2.estimate);
  CHECK(grid.estimate[0][1] <= grid.estimate[0][0]);
}
