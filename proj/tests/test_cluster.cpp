#include "oracles.hpp"
#include "rcm/cluster.hpp"
#include "rcm/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace rcm;
using namespace rcm::cluster;
using rcm::env::ConductanceField;

TEST_CASE("all-ones field is one component") {
  const auto f = ConductanceField::uniform(Lattice(2, 5), 1.0);
  const auto lab = components(f, Threshold::at_least(0.5));
  CHECK(lab.largest_size() == f.lattice().num_sites());
  for (std::int64_t s = 0; s < f.lattice().num_sites(); ++s) CHECK(lab.in_largest(s));
  CHECK(lab.second_largest_size() == 0);
}

TEST_CASE("path of five sites split by a weak middle bond") {
  auto f = ConductanceField::uniform(Lattice(1, 2), 1.0);
  const auto& lat = f.lattice();
  f.set_omega(lat.index(Point{0}), 0, +1, 0.1);
  const auto lab = components(f, Threshold::at_least(0.5));
  CHECK(lab.largest_size() == 3);
  CHECK(lab.second_largest_size() == 2);
  CHECK(lab.same_component(lat.index(Point{-2}), lat.index(Point{0})));
  CHECK_FALSE(lab.same_component(lat.index(Point{0}), lat.index(Point{1})));
  CHECK(lab.histogram().at(3) == 1);
  CHECK(lab.histogram().at(2) == 1);
}

TEST_CASE("labels agree with a breadth-first oracle") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto f = env::sample_field(2, 7, env::TwoValue{0.55, 4}, seed);
    for (const auto th : {Threshold::positive(), Threshold::at_least(1.0), Threshold::at_least(0.25)}) {
      const auto lab = components(f, th);
      const auto ref = oracle::bfs_labels(f, [&](double w) { return th.open(w); });
      const auto& lat = f.lattice();
      std::map<int, std::int64_t> ref_to_id;
      std::map<int, std::int64_t> ref_size;
      for (const auto& [p, l] : ref) ref_size[l]++;
      for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
        const auto it = ref.find(lat.point(s));
        if (it == ref.end()) {
          CHECK(lab.component(s) == ClusterLabeling::kNone);
          continue;
        }
        auto [pos, fresh] = ref_to_id.emplace(it->second, lab.component(s));
        CHECK(pos->second == lab.component(s));
        CHECK(lab.component_size(s) == ref_size[it->second]);
      }
      // distinct oracle labels map to distinct ids
      std::set<std::int64_t> ids;
      for (const auto& [l, id] : ref_to_id) ids.insert(id);
      CHECK(ids.size() == ref_to_id.size());
      // neighbors share an id iff their bond is open
      for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
        for (int a = 0; a < 2; ++a) {
          const auto t = lat.neighbor(s, a, +1);
          if (t < 0) continue;
          if (th.open(f.omega_up(s, a))) CHECK(lab.same_component(s, t));
        }
      }
      std::int64_t mx = 0;
      for (const auto& [size, count] : lab.histogram()) mx = std::max(mx, size);
      CHECK(lab.largest_size() == mx);
    }
  }
}

TEST_CASE("nesting of thresholds") {
  const auto f = env::sample_field(2, 30, env::DyadicPolyLog{0.7, 0.5}, 3);
  const auto lo = components(f, Threshold::at_least(0.1));
  const auto hi = components(f, Threshold::at_least(0.5));
  const auto pos = components(f, Threshold::positive());
  std::map<std::int64_t, std::int64_t> parent;
  for (std::int64_t s = 0; s < f.lattice().num_sites(); ++s) {
    const auto c = hi.component(s);
    if (c == ClusterLabeling::kNone) continue;
    auto [it, fresh] = parent.emplace(c, lo.component(s));
    CHECK(it->second == lo.component(s));
    CHECK(lo.component(s) != ClusterLabeling::kNone);
    if (hi.in_largest(s)) CHECK(pos.in_largest(s));
  }
}

TEST_CASE("largest component density matches a large-box estimate") {
  const env::BernoulliPerc law{0.7};
  std::vector<double> dens;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto f = env::sample_field(2, 100, law, seed);
    const auto lab = components(f, Threshold::positive());
    dens.push_back(static_cast<double>(lab.largest_size()) / f.lattice().num_sites());
  }
  const double mean = std::accumulate(dens.begin(), dens.end(), 0.0) / dens.size();
  double var = 0;
  for (double v : dens) var += (v - mean) * (v - mean);
  var /= dens.size() - 1;
  const auto big = env::sample_field(2, 400, law, 1000);
  const auto lab = components(big, Threshold::positive());
  const double theta = static_cast<double>(lab.largest_size()) / big.lattice().num_sites();
  // the L=400 value carries about 1/16 of one L=100 sample's variance
  const double se = std::sqrt(var / dens.size() + var / 16);
  INFO("L=100 mean " << mean << " L=400 " << theta << " se " << se);
  CHECK(std::abs(mean - theta) <= 3 * se);
}

TEST_CASE("second-largest strong component stays bounded") {
  std::vector<double> second;
  for (int L : {50, 100, 200}) {
    double s = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto f = env::sample_field(2, L, env::TwoValue{0.7, 10}, seed);
      s += components(f, Threshold::at_least(1.0)).second_largest_size();
    }
    second.push_back(s / 3);
  }
  INFO(second[0] << " " << second[1] << " " << second[2]);
  CHECK(second[2] <= 2.5 * second[0]);
  CHECK(second[2] < 500);
}

TEST_CASE("weak component conventions") {
  auto f = ConductanceField::uniform(Lattice(2, 4), 1.0);
  const auto& lat = f.lattice();
  const auto x = lat.origin();
  {
    const auto strong = components(f, Threshold::at_least(0.5));
    const auto g = weak_component(f, strong, x);
    CHECK(g.sites == std::vector<std::int64_t>{x});
    CHECK(g.size() == 1);
    CHECK(g.weak_sites.empty());
  }
  // dangling site w = (1,0) joined only to x
  const Point w{1, 0};
  const auto ws = lat.index(w);
  f.set_omega(x, 0, +1, 0.1);
  f.set_omega(ws, 0, +1, 0.0);
  f.set_omega(ws, 1, +1, 0.0);
  f.set_omega(ws, 1, -1, 0.0);
  const auto strong = components(f, Threshold::at_least(0.5));
  const auto g = weak_component(f, strong, x);
  CHECK(g.sites == std::vector<std::int64_t>{x, ws});
  CHECK(g.weak_sites == std::vector<std::int64_t>{ws});
  CHECK(g.max_diameter() == 0);
  CHECK_THROWS_AS(weak_component(f, strong, ws), NotStrongError);
}

TEST_CASE("weak component invariants and diameter tail") {
  const auto f = env::sample_field(2, 30, env::TwoValue{0.7, 100}, 12);
  const auto strong = components(f, Threshold::at_least(1.0));
  const auto& lat = f.lattice();
  std::map<int, std::int64_t> diam_count;
  std::int64_t total = 0;
  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    if (!strong.in_largest(s)) continue;
    const auto g = weak_component(f, strong, s);
    CHECK(std::binary_search(g.sites.begin(), g.sites.end(), s));
    for (auto w : g.weak_sites) CHECK_FALSE(strong.in_largest(w));
    for (auto t : g.strong_sites) CHECK(strong.in_largest(t));
    CHECK(std::is_sorted(g.sites.begin(), g.sites.end()));
    for (int d : g.diameters) {
      diam_count[d]++;
      ++total;
    }
  }
  REQUIRE(total > 100);
  std::vector<double> k, logtail;
  for (int m = 0; m <= 4; ++m) {
    std::int64_t ge = 0;
    for (const auto& [d, c] : diam_count) {
      if (d >= m) ge += c;
    }
    if (ge == 0) break;
    k.push_back(m);
    logtail.push_back(std::log(static_cast<double>(ge) / total));
  }
  REQUIRE(k.size() >= 2);
  double mk = 0, my = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    mk += k[i];
    my += logtail[i];
  }
  mk /= k.size();
  my /= k.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    sxy += (k[i] - mk) * (logtail[i] - my);
    sxx += (k[i] - mk) * (k[i] - mk);
  }
  CHECK(sxy / sxx < 0);
}

TEST_CASE("chemical distance") {
  const auto f = ConductanceField::uniform(Lattice(2, 5), 1.0);
  const auto lab = components(f, Threshold::positive());
  const auto& lat = f.lattice();
  const auto o = lat.origin();
  CHECK(chemical_distance(f, lab, o, o) == 0);
  CHECK(chemical_distance(f, lab, o, lat.index(Point{1, 0})) == 1);
  CHECK(chemical_distance(f, lab, o, lat.index(Point{3, -2})) == 5);

  auto g = f;
  const auto c = lat.index(Point{5, 5});
  g.set_omega(c, 0, -1, 0.0);
  g.set_omega(c, 1, -1, 0.0);
  const auto lab2 = components(g, Threshold::positive());
  CHECK_THROWS_AS(chemical_distance(g, lab2, o, c), DisconnectedError);
}

TEST_CASE("chemical over euclidean distance on p=0.7 clusters") {
  const auto f = env::sample_field(2, 60, env::BernoulliPerc{0.7}, 21);
  const auto lab = components(f, Threshold::positive());
  const auto& lat = f.lattice();
  std::vector<std::int64_t> sites;
  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    if (lab.in_largest(s)) sites.push_back(s);
  }
  rng::Stream st(5, rng::kSample, 0);
  double sum = 0;
  int pairs = 0;
  while (pairs < 40) {
    const auto a = sites[st.below(sites.size())], b = sites[st.below(sites.size())];
    Point d{};
    for (int i = 0; i < 2; ++i) d[i] = lat.coord(a, i) - lat.coord(b, i);
    const double e = euclidean_norm(d);
    if (e < 20 || e > 50) continue;
    sum += chemical_distance(f, lab, a, b) / e;
    ++pairs;
  }
  const double mean = sum / pairs;
  INFO("mean ratio " << mean);
  CHECK(mean > 1);
  CHECK(mean < 2);
}

TEST_CASE("alpha helper and component table") {
  CHECK(choose_alpha(env::TwoValue{0.7, 10}, 2) == 1.0);
  CHECK(choose_alpha(env::DyadicPolyLog{0.7, 0.5}, 2) == 1.0);
  CHECK(choose_alpha(env::TwoValue{0.3, 10}, 2) == 0.1);  // only 1/10 percolates
  CHECK_THROWS(choose_alpha(env::BernoulliPerc{0.3}, 2));

  auto f = ConductanceField::uniform(Lattice(1, 2), 1.0);
  f.set_omega(f.lattice().index(Point{0}), 0, +1, 0.1);
  const auto lab = components(f, Threshold::at_least(0.5));
  std::ostringstream out;
  write_components_csv(out, lab);
  CHECK(out.str().rfind("alpha,comp_id,size,touches_boundary\n", 0) == 0);
  int lines = 0;
  for (char c : out.str()) lines += c == '\n';
  CHECK(lines == 3);
  for (const auto& r : lab.table()) CHECK(r.touches_boundary);
}
