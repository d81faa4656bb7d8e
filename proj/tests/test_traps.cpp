#include "oracles.hpp"
#include "rcm/traps.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

using namespace rcm;
using namespace rcm::traps;
using cluster::Threshold;
using rcm::env::ConductanceField;

namespace {

ConductanceField planted(int L, const Point& x, int axis = 0, double weak = 0.01) {
  return env::plant_trap(ConductanceField::uniform(Lattice(2, L), 1.0), x, weak, axis);
}

}  // namespace

TEST_CASE("planted trap is found with its weak scale") {
  const auto f = planted(10, Point{2, 0});
  const auto lab = cluster::components(f, Threshold::positive());
  const auto traps = detect_traps(f, lab, 0.5);
  REQUIRE(traps.size() == 1);
  const auto& t = traps[0];
  CHECK(t.x == Point{2, 0});
  CHECK(t.y == Point{3, 0});
  CHECK(t.z == Point{4, 0});
  CHECK(t.axis == 0);
  CHECK(t.weak_scale == 0.01);
  CHECK(t.in_cluster);
  CHECK(t.chem_dist == -1);
  CHECK(detect_traps(f, lab, 0.005).empty());

  const auto g = planted(10, Point{-3, 1}, 1, 0.02);
  const auto tg = detect_traps(g, cluster::components(g, Threshold::positive()), 0.5);
  REQUIRE(tg.size() == 1);
  CHECK(tg[0].axis == 1);
  CHECK(tg[0].z == Point{-3, 3});

  DetectOptions opt;
  opt.distances = true;
  const auto td = detect_traps(f, lab, 0.5, opt);
  REQUIRE(td.size() == 1);
  CHECK(td[0].chem_dist == 2);

  opt.max_norm = 1.5;
  CHECK(detect_traps(f, lab, 0.5, opt).empty());
}

TEST_CASE("an anchor cut off from the trap is not a trap") {
  auto f = planted(8, Point{0, 0});
  f.set_omega(f.lattice().origin(), 0, +1, 0.0);
  const auto lab = cluster::components(f, Threshold::positive());
  CHECK(detect_traps(f, lab, 0.5).empty());
}

TEST_CASE("box condition") {
  auto f = planted(10, Point{0, 0});
  const auto o = f.lattice().origin();
  const auto lab = cluster::components(f, Threshold::positive());
  DetectOptions opt;
  opt.box_side = 5;
  CHECK(detect_traps(f, lab, 0.5, opt).size() == 1);
  f.set_omega(o, 0, -1, 0.5);
  f.set_omega(o, 1, +1, 0.5);
  f.set_omega(o, 1, -1, 0.5);
  const auto lab2 = cluster::components(f, Threshold::positive());
  CHECK(detect_traps(f, lab2, 0.5, opt).empty());
  CHECK(detect_traps(f, lab2, 0.5).size() == 1);

  CHECK(box_side_for_scale(std::exp(2.0)) == 5);
  CHECK(box_side_for_scale(std::exp(3.0)) == 9);
  CHECK_THROWS(box_side_for_scale(1.0));
}

TEST_CASE("detection agrees with a direct scan") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto f = env::sample_field(2, 15, env::TwoValue{0.7, 100}, seed);
    const auto lab = cluster::components(f, Threshold::positive());
    const auto& lat = f.lattice();
    std::set<std::tuple<std::int64_t, int>> ref;
    for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
      if (!lab.in_largest(s)) continue;
      const Point x = lat.point(s);
      for (int a = 0; a < 2; ++a) {
        const Point y = oracle::shift(x, a, 1), z = oracle::shift(y, a, 1);
        if (!oracle::inside(z, 2, 15)) continue;
        if (f.omega(y, z) != 1.0 || f.omega(x, y) <= 0) continue;
        double weak = 0;
        for (const Point& p : {y, z}) {
          for (int b = 0; b < 2; ++b) {
            for (int dir : {1, -1}) {
              const Point q = oracle::shift(p, b, dir);
              if ((p == y && q == z) || (p == z && q == y)) continue;
              weak = std::max(weak, f.omega(p, q));
            }
          }
        }
        if (weak < 1) ref.insert({s, a});
      }
    }
    const auto traps = detect_traps(f, lab, 0.999);
    std::set<std::tuple<std::int64_t, int>> got;
    for (const auto& t : traps) {
      got.insert({t.anchor, t.axis});
      CHECK(t.weak_scale == 0.01);
    }
    CHECK(got == ref);
    const auto again = detect_traps(f, lab, 0.999, {0, -1, false, 3});
    CHECK(again.size() == traps.size());
  }
}

TEST_CASE("trap sum weights") {
  std::vector<TrapRecord> traps(4);
  traps[0].x = Point{0, 0, 0, 0};
  traps[1].x = Point{1, 0, 0, 0};
  traps[2].x = Point{0, 2, 0, 0};
  traps[3].x = Point{3, 4, 0, 0};
  CHECK(trap_sum(traps, 4, 4) == doctest::Approx(1 + 1 + 1.0 / 16));
  CHECK(trap_sum(traps, 25, 4) == doctest::Approx(1 + 1 + 1.0 / 16 + std::pow(5.0, -4)));
  CHECK(trap_sum(traps, 25, 2) == 4);
  CHECK(trap_sum(traps, 0.5, 3) == 1);
}

TEST_CASE("hitting probabilities") {
  const auto f = ConductanceField::uniform(Lattice(2, 6), 1.0);
  const auto& lat = f.lattice();
  const auto o = lat.origin();
  const auto same = hitting_prob(f, o, o, 5, 10, 1);
  CHECK(same.value == 1);
  CHECK(same.stderr_ == 0);
  const auto e = hitting_prob(f, o, lat.index(Point{1, 0}), 1, 40000, 2);
  CHECK(std::abs(e.value - 0.25) <= 4 * e.stderr_);
  const auto d2 = hitting_prob(f, o, lat.index(Point{1, 1}), 1, 1000, 2);
  CHECK(d2.value == 0);
  const auto a = hitting_prob(f, o, lat.index(Point{2, 1}), 9, 3000, 5, 1);
  const auto b = hitting_prob(f, o, lat.index(Point{2, 1}), 9, 3000, 5, 3);
  CHECK(a.value == b.value);

  auto g = f;
  const auto c = lat.index(Point{6, 6});
  g.set_omega(c, 0, -1, 0.0);
  g.set_omega(c, 1, -1, 0.0);
  CHECK_THROWS_AS(hitting_prob(g, o, c, 3, 10, 1), DisconnectedError);
}

TEST_CASE("trap lower bound") {
  const auto f = planted(20, Point{0, 0});
  const auto& lat = f.lattice();
  const auto lab = cluster::components(f, Threshold::positive());
  const auto traps = detect_traps(f, lab, 0.5);
  REQUIRE(traps.size() == 1);
  const auto& t = traps[0];

  // source at the anchor: one round trip across the weak bond
  const double pxy = 0.01 / 3.01, pyx = 0.01 / 1.03, stay = 1 / (1.03 * 1.03);
  const auto at_x = trap_lower_bound(f, t, t.anchor, 6);
  CHECK(at_x.path == std::vector<std::int64_t>{t.anchor});
  CHECK(at_x.entry == doctest::Approx(pxy).epsilon(1e-14));
  CHECK(at_x.exit == doctest::Approx(pyx).epsilon(1e-14));
  CHECK(at_x.stay == doctest::Approx(stay).epsilon(1e-14));
  CHECK(at_x.idle_rounds == 5);
  CHECK(at_x.value == doctest::Approx(pxy * pyx * std::pow(stay, 5)).epsilon(1e-12));

  const auto src = lat.index(Point{-3, 0});
  const auto series = kernel::return_series(f, src, 24, 2);
  for (int n = 1; n <= 12; ++n) {
    const auto b = trap_lower_bound(f, t, src, n);
    if (n < 4) {
      CHECK(b.value == 0);
      continue;
    }
    CHECK(b.path.size() == 4);
    CHECK(b.idle_rounds == n - 4);
    CHECK(b.value > 0);
    CHECK(b.value <= series.value_at(2 * n));
  }

  // source at y: the shuttle alone
  const auto at_y = trap_lower_bound(f, t, t.y_site, 7);
  CHECK(at_y.value == doctest::Approx(std::pow(stay, 7)).epsilon(1e-12));

  // a supplied path is used as given
  const std::vector<std::int64_t> detour{lat.index(Point{0, 1}), lat.index(Point{1, 1}), lat.index(Point{1, 0}),
                                          lat.index(Point{0, 0})};
  const auto viaf = trap_lower_bound(f, t, lat.index(Point{0, 1}), 6, detour);
  const double hand = (1 / 4.0) * (1 / 3.01) * (0.01 / 3.01) * (0.01 / 1.03) * (0.01 / 1.03) * (0.01 / 3.01);
  CHECK(viaf.path_probability == doctest::Approx(hand).epsilon(1e-12));
  CHECK(viaf.idle_rounds == 2);
  CHECK(viaf.value <= kernel::return_series(f, lat.index(Point{0, 1}), 12, 2).value_at(12));
  CHECK_THROWS(trap_lower_bound(f, t, lat.index(Point{0, 1}), 6, std::vector<std::int64_t>{lat.index(Point{0, 1})}));
}

TEST_CASE("conditioned path ratios") {
  const auto f = ConductanceField::uniform(Lattice(2, 12), 1.0);
  const auto one = conditioned_path_ratio(f, f.lattice().origin(), 1.0, 8, 200, 3);
  CHECK(one.survival == doctest::Approx(1.0));
  CHECK(one.min_ratio == doctest::Approx(1.0));
  CHECK(one.max_ratio == doctest::Approx(1.0));
  CHECK(one.k() == doctest::Approx(1.0));

  const auto g = env::sample_field(2, 12, env::TwoValue{0.8, 10}, 4);
  const auto strong = cluster::components(g, Threshold::at_least(1.0));
  std::int64_t src = g.lattice().origin();
  while (!strong.in_largest(src)) ++src;
  const auto a = conditioned_path_ratio(g, src, 1.0, 6, 500, 9, 1);
  const auto b = conditioned_path_ratio(g, src, 1.0, 6, 500, 9, 3);
  CHECK(a.survival > 0);
  CHECK(a.survival < 1);
  CHECK(a.min_ratio <= a.max_ratio);
  CHECK(a.k() >= 1);
  CHECK(a.paths == 500);
  CHECK(a.min_ratio == b.min_ratio);
  CHECK(a.max_ratio == b.max_ratio);
}
