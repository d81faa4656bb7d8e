#include "rcm/cluster.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>
#include <unordered_map>

namespace rcm::cluster {

namespace {

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t s) {
  while (parent[s] >= 0) {
    const std::int32_t p = parent[s];
    if (parent[p] >= 0) parent[s] = parent[p];
    s = p;
  }
  return s;
}

void unite(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (parent[a] > parent[b]) std::swap(a, b);  // a is the larger tree
  parent[a] += parent[b];
  parent[b] = a;
}

}  // namespace

ClusterLabeling components(const env::ConductanceField& field, Threshold threshold) {
  const Lattice& lat = field.lattice();
  if (lat.num_sites() >= std::numeric_limits<std::int32_t>::max()) {
    throw std::invalid_argument("components: box too large for 32-bit labels");
  }
  ClusterLabeling out;
  out.lattice_ = lat;
  out.threshold_ = threshold;
  const auto n = static_cast<std::int32_t>(lat.num_sites());
  out.parent_.assign(static_cast<std::size_t>(n), -1);
  auto& parent = out.parent_;

  bool open_code[256] = {};
  for (std::size_t c = 0; c < field.palette().size(); ++c) open_code[c] = threshold.open(field.palette()[c]);

  const int d = lat.dim();
  const int L = lat.radius();
  if (!(field.is_uniform() && !open_code[field.code_up(0, 0)])) {
    for (std::int32_t s = 0; s < n; ++s) {
      for (int a = 0; a < d; ++a) {
        if (lat.coord(s, a) >= L) continue;
        if (open_code[field.code_up(s, a)]) unite(parent, s, static_cast<std::int32_t>(s + lat.stride(a)));
      }
    }
  }
  for (std::int32_t s = 0; s < n; ++s) {
    if (parent[s] >= 0) parent[s] = find_root(parent, s);
  }

  for (std::int32_t s = 0; s < n; ++s) {
    if (parent[s] < -1) {
      const std::int64_t size = -static_cast<std::int64_t>(parent[s]);
      ++out.histogram_[size];
      if (size > out.largest_size_) {
        out.largest_size_ = size;
        out.largest_id_ = s;
      }
    }
  }

  std::vector<std::int64_t>& roots = out.boundary_roots_;
  for (std::int32_t s = 0; s < n; ++s) {
    if (!lat.on_boundary(s)) {
      // skip the interior run along axis 0
      const int c0 = lat.coord(s, 0);
      if (c0 > -L && c0 < L) s += 2 * L - 2 - (c0 + L - 1);
      continue;
    }
    const auto c = out.component(s);
    if (c != ClusterLabeling::kNone) roots.push_back(c);
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  return out;
}

std::int64_t ClusterLabeling::component_size(std::int64_t site) const {
  const auto c = component(site);
  if (c == kNone) return 1;
  return -static_cast<std::int64_t>(parent_[static_cast<std::size_t>(c)]);
}

bool ClusterLabeling::touches_boundary(std::int64_t comp_id) const {
  return std::binary_search(boundary_roots_.begin(), boundary_roots_.end(), comp_id);
}

std::int64_t ClusterLabeling::second_largest_size() const {
  if (histogram_.empty()) return 0;
  auto it = histogram_.rbegin();
  if (it->second >= 2) return it->first;
  ++it;
  return it == histogram_.rend() ? 0 : it->first;
}

std::vector<ClusterLabeling::ComponentRow> ClusterLabeling::table() const {
  std::vector<ComponentRow> rows;
  for (std::size_t s = 0; s < parent_.size(); ++s) {
    if (parent_[s] < -1) {
      const auto id = static_cast<std::int64_t>(s);
      rows.push_back({id, -static_cast<std::int64_t>(parent_[s]), touches_boundary(id)});
    }
  }
  return rows;
}

int WeakComponent::max_diameter() const {
  int m = 0;
  for (int v : diameters) m = std::max(m, v);
  return m;
}

WeakComponent weak_component(const env::ConductanceField& field, const ClusterLabeling& strong, std::int64_t x) {
  const Lattice& lat = field.lattice();
  if (!strong.in_largest(x)) throw NotStrongError("site " + to_string(lat.point(x), lat.dim()) + " is not strong");
  const int d = lat.dim();

  WeakComponent out;
  out.anchor = x;
  std::unordered_map<std::int64_t, char> seen;  // 1 weak, 2 strong boundary
  std::vector<std::int64_t> queue;

  for (int a = 0; a < d; ++a) {
    for (int dir : {+1, -1}) {
      if (!(field.omega(x, a, dir) > 0)) continue;
      const std::int64_t y = lat.neighbor(x, a, dir);
      if (strong.in_largest(y) || seen.count(y)) continue;
      // one weak cluster F_y
      Point lo, hi;
      lo.fill(std::numeric_limits<int>::max());
      hi.fill(std::numeric_limits<int>::min());
      queue.assign(1, y);
      seen[y] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::int64_t u = queue[head];
        out.weak_sites.push_back(u);
        const Point pu = lat.point(u);
        for (int b = 0; b < d; ++b) {
          lo[b] = std::min(lo[b], pu[b]);
          hi[b] = std::max(hi[b], pu[b]);
        }
        for (int b = 0; b < d; ++b) {
          for (int e : {+1, -1}) {
            if (!(field.omega(u, b, e) > 0)) continue;
            const std::int64_t v = lat.neighbor(u, b, e);
            if (strong.in_largest(v)) {
              if (!seen.count(v)) {
                seen[v] = 2;
                out.strong_sites.push_back(v);
              }
              continue;
            }
            if (seen.count(v)) continue;
            seen[v] = 1;
            queue.push_back(v);
          }
        }
      }
      int diam = 0;
      for (int b = 0; b < d; ++b) diam = std::max(diam, hi[b] - lo[b]);
      out.diameters.push_back(diam);
    }
  }

  std::sort(out.weak_sites.begin(), out.weak_sites.end());
  std::sort(out.strong_sites.begin(), out.strong_sites.end());
  out.sites = out.weak_sites;
  out.sites.insert(out.sites.end(), out.strong_sites.begin(), out.strong_sites.end());
  out.sites.push_back(x);
  std::sort(out.sites.begin(), out.sites.end());
  out.sites.erase(std::unique(out.sites.begin(), out.sites.end()), out.sites.end());
  return out;
}

int chemical_distance(const env::ConductanceField& field, const ClusterLabeling& labeling, std::int64_t x,
                      std::int64_t y) {
  if (x == y) return 0;
  const Lattice& lat = field.lattice();
  if (!labeling.same_component(x, y)) {
    throw DisconnectedError("sites " + to_string(lat.point(x), lat.dim()) + " and " +
                            to_string(lat.point(y), lat.dim()) + " are in different components");
  }
  const Threshold th = labeling.threshold();
  const int d = lat.dim();
  std::unordered_map<std::int64_t, int> dist{{x, 0}};
  std::deque<std::int64_t> queue{x};
  while (!queue.empty()) {
    const std::int64_t u = queue.front();
    queue.pop_front();
    const int du = dist[u];
    for (int a = 0; a < d; ++a) {
      for (int dir : {+1, -1}) {
        if (!th.open(field.omega(u, a, dir))) continue;
        const std::int64_t v = lat.neighbor(u, a, dir);
        if (dist.count(v)) continue;
        if (v == y) return du + 1;
        dist[v] = du + 1;
        queue.push_back(v);
      }
    }
  }
  throw DisconnectedError("no open path found");
}

double choose_alpha(const env::ConductanceLaw& law, int dim, double max_weak_mass) {
  auto atoms = env::bond_marginal(law);
  std::sort(atoms.begin(), atoms.end(), [](const env::Atom& a, const env::Atom& b) { return a.value > b.value; });
  const double pc = env::percolation_threshold(dim);
  double at_least = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].value <= 0) break;
    at_least += atoms[i].prob;
    if (i + 1 < atoms.size() && atoms[i + 1].value == atoms[i].value) continue;
    double weak = 0;
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      if (atoms[j].value > 0) weak += atoms[j].prob;
    }
    if (at_least > pc && weak <= max_weak_mass) return atoms[i].value;
  }
  throw std::invalid_argument("choose_alpha: no support value gives a supercritical strong component");
}

void write_components_csv(std::ostream& out, const ClusterLabeling& labeling) {
  out << "alpha,comp_id,size,touches_boundary\n";
  char alpha[40];
  std::snprintf(alpha, sizeof alpha, "%.17g", labeling.threshold().alpha);
  for (const auto& r : labeling.table()) {
    out << alpha << ',' << r.id << ',' << r.size << ',' << (r.touches_boundary ? 1 : 0) << '\n';
  }
}

}  // namespace rcm::cluster
