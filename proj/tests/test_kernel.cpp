#include "oracles.hpp"
#include "rcm/kernel.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace rcm;
using namespace rcm::kernel;
using rcm::env::ConductanceField;

TEST_CASE("short returns match path enumeration") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto f = env::sample_field(2, 5, env::TwoValue{0.6, 5}, seed);
    const auto& lat = f.lattice();
    for (const Point x : {Point{}, Point{2, -1}, Point{-3, 3}}) {
      const auto s = lat.index(x);
      const auto series = return_series(f, s, 4, 1);
      for (int n = 1; n <= 4; ++n) {
        INFO("seed " << seed << " x " << to_string(x, 2) << " n " << n);
        CHECK(series.value_at(n) == doctest::Approx(oracle::closed_paths(f, x, n)).epsilon(1e-12));
      }
    }
  }
  const auto g = env::sample_field(3, 3, env::DyadicPolyLog{0.7, 0.5}, 4);
  const auto series = return_series(g, g.lattice().origin(), 6, 2);
  for (int n : {2, 4, 6}) CHECK(series.value_at(n) == doctest::Approx(oracle::closed_paths(g, Point{}, n)).epsilon(1e-12));
}

TEST_CASE("homogeneous field gives the simple random walk") {
  const auto f = ConductanceField::uniform(Lattice(2, 40), 1.0);
  const auto direct = return_series(f, f.lattice().origin(), 40, 1, {Dynamics::full(), Route::kDirect});
  const auto half = return_series(f, f.lattice().origin(), 80, 2, {Dynamics::full(), Route::kHalf});
  for (int n = 1; n <= 40; ++n) CHECK(direct.value_at(n) == doctest::Approx(oracle::srw2_return(n)).epsilon(1e-10));
  for (int n = 2; n <= 80; n += 2) CHECK(half.value_at(n) == doctest::Approx(oracle::srw2_return(n)).epsilon(1e-10));
  CHECK(direct.route == "direct");
  CHECK(half.route == "half");
}

TEST_CASE("two-site chain alternates") {
  auto f = ConductanceField::uniform(Lattice(1, 10), 1.0);
  f.set_omega(f.lattice().index(Point{-1}), 0, +1, 0.0);
  f.set_omega(f.lattice().index(Point{1}), 0, +1, 0.0);
  const auto series = return_series(f, f.lattice().origin(), 9, 1, {Dynamics::full(), Route::kDirect});
  for (int n = 1; n <= 9; ++n) CHECK(series.value_at(n) == (n % 2 ? 0.0 : 1.0));
}

TEST_CASE("mass conservation and detailed balance") {
  const auto f = env::sample_field(2, 12, env::DyadicPolyLog{0.7, 0.5}, 8);
  const auto& lat = f.lattice();
  const auto x = lat.index(Point{1, 2});
  const auto y = lat.index(Point{-2, 1});
  for (int n : {3, 6, 9}) {
    const auto mx = evolve(f, x, n, {Dynamics::full(), Route::kDirect});
    const auto my = evolve(f, y, n, {Dynamics::full(), Route::kDirect});
    CHECK(mx.total == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(mx.max_mass_deviation < 1e-12);
    const double pix = oracle::pi_at(f, lat.point(x)), piy = oracle::pi_at(f, lat.point(y));
    const double lhs = pix * mx.at(y), rhs = piy * my.at(x);
    if (n % 2 == 0) CHECK(lhs > 0);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
  }
  // half route agrees with the direct one
  const auto a = return_series(f, lat.origin(), 12, 2, {Dynamics::full(), Route::kDirect});
  const auto b = return_series(f, lat.origin(), 12, 2, {Dynamics::full(), Route::kHalf});
  for (int n = 2; n <= 12; n += 2) CHECK(a.value_at(n) == doctest::Approx(b.value_at(n)).epsilon(1e-11));
}

TEST_CASE("even steps are non-increasing and runs are deterministic") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto f = env::sample_field(2, 30, env::TwoValue{0.7, 100}, seed);
    const auto a = return_series(f, f.lattice().origin(), 60, 2, {Dynamics::full(), Route::kAuto, 1});
    const auto b = return_series(f, f.lattice().origin(), 60, 2, {Dynamics::full(), Route::kAuto, 4});
    CHECK(a.even_monotone());
    CHECK_NOTHROW(require_monotone(a));
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].value == b.entries[i].value);
  }
  KernelSeries bad;
  bad.max_even_increase = 1e-3;
  CHECK_THROWS_AS(require_monotone(bad), Error);
}

TEST_CASE("restricted and killed dynamics") {
  const auto f = env::sample_field(2, 10, env::TwoValue{0.7, 10}, 6);
  const auto o = f.lattice().origin();
  // alpha below every value: both reduce to the full walk
  const auto full = return_series(f, o, 8, 1);
  const auto res = return_series(f, o, 8, 1, {Dynamics::restricted(0.01)});
  for (int n = 1; n <= 8; ++n) CHECK(res.value_at(n) == doctest::Approx(full.value_at(n)).epsilon(1e-13));

  double prev = 1;
  for (int n = 1; n <= 8; ++n) {
    const auto d = evolve(f, o, n, {Dynamics::killed(1.0), Route::kDirect});
    CHECK(d.total <= prev + 1e-15);
    prev = d.total;
  }
  CHECK(prev < 1);
  CHECK(prev > 0);

  // killed mass after one step is the weak share of pi(o)
  const auto st = env::step_distribution(f, o);
  double strong = 0;
  for (std::size_t i = 0; i < st.moves.size(); ++i) {
    if (st.moves[i].omega >= 1.0) strong += st.probability(i);
  }
  CHECK(evolve(f, o, 1, {Dynamics::killed(1.0), Route::kDirect}).total == doctest::Approx(strong).epsilon(1e-14));
}

TEST_CASE("monte carlo agrees with the exact kernel") {
  const auto f = env::sample_field(2, 20, env::TwoValue{0.7, 10}, 15);
  const auto o = f.lattice().origin();
  const auto exact = return_series(f, o, 20, 2);
  for (int n : {4, 10, 20}) {
    const auto est = mc_return(f, o, n, 200000, 77);
    INFO("n " << n << " exact " << exact.value_at(n) << " mc " << est.value << " +- " << est.stderr_);
    CHECK(std::abs(est.value - exact.value_at(n)) <= 4 * est.stderr_);
    CHECK(est.stderr_ > 0);
  }
  const auto a = mc_return(f, o, 6, 5000, 3, 1), b = mc_return(f, o, 6, 5000, 3, 3);
  CHECK(a.value == b.value);
}

TEST_CASE("decay fit on synthetic series") {
  std::vector<double> ns, v1, v2;
  for (int n = 10; n <= 1000; n += 10) {
    ns.push_back(n);
    v1.push_back(3.0 * std::pow(n, -1.5));
    v2.push_back(2.0 * std::pow(n, -2.0) * std::log(n));
  }
  const auto a = fit_decay(ns, v1);
  CHECK(a.exponent == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(a.prefactor == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(a.residual_norm < 1e-9);
  const auto b = fit_decay(ns, v2, true);
  CHECK(b.exponent == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(b.log_coefficient == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(b.prefactor == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(b.with_log);
}

TEST_CASE("homogeneous planar exponent") {
  const auto f = ConductanceField::uniform(Lattice(2, 130), 1.0);
  const auto series = return_series(f, f.lattice().origin(), 256, 2);
  const auto fit = fit_decay(series, 64, 256);
  INFO("exponent " << fit.exponent);
  CHECK(fit.exponent >= 0.95);
  CHECK(fit.exponent <= 1.05);
  CHECK(fit.n_lo == 64);
  CHECK(fit.n_hi == 256);
}

TEST_CASE("annealed averages") {
  const auto h = annealed_return(env::Homogeneous{1.0}, 2, 8, 6, 3, 1);
  CHECK(h.accepted == 3);
  CHECK(h.rejected == 0);
  CHECK(h.mean == doctest::Approx(oracle::srw2_return(6)).epsilon(1e-12));
  CHECK(h.stderr_ == doctest::Approx(0.0).epsilon(1e-15));

  const auto a = annealed_return(env::BernoulliPerc{0.7}, 2, 10, 8, 6, 9);
  const auto b = annealed_return(env::BernoulliPerc{0.7}, 2, 10, 8, 6, 9, 3);
  CHECK(a.accepted == 6);
  CHECK(a.values == b.values);
  CHECK(a.seeds == b.seeds);
  for (double v : a.values) {
    CHECK(v > 0);
    CHECK(v <= 1);
  }
  CHECK(ensemble_seed(9, 0, 0) != ensemble_seed(9, 0, 1));
  CHECK(ensemble_seed(9, 0, 0) != ensemble_seed(9, 1, 0));
}
