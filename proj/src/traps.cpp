#include "rcm/traps.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_set>

namespace rcm::traps {

namespace {

// Hop distances from `source` along open bonds of the labeling (-1 unreached).
std::vector<std::int32_t> bfs_distances(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling,
                                        std::int64_t source) {
  const Lattice& lat = field.lattice();
  std::vector<std::int32_t> dist(static_cast<std::size_t>(lat.num_sites()), -1);
  std::deque<std::int64_t> queue{source};
  dist[source] = 0;
  const auto th = labeling.threshold();
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (int a = 0; a < lat.dim(); ++a) {
      for (int dir : {+1, -1}) {
        if (!th.open(field.omega(u, a, dir))) continue;
        const auto v = lat.neighbor(u, a, dir);
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return dist;
}

// Nearest site of the largest component to the origin (l1, then index).
std::int64_t origin_cluster_point(const cluster::ClusterLabeling& labeling) {
  const Lattice& lat = labeling.lattice();
  if (labeling.in_largest(lat.origin())) return lat.origin();
  std::int64_t best = -1;
  int best_norm = std::numeric_limits<int>::max();
  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    if (!labeling.in_largest(s)) continue;
    int norm = 0;
    for (int a = 0; a < lat.dim(); ++a) norm += std::abs(lat.coord(s, a));
    if (norm < best_norm) {
      best_norm = norm;
      best = s;
    }
  }
  return best;
}

bool reaches_box_boundary(const env::ConductanceField& field, std::int64_t x, int side) {
  const Lattice& lat = field.lattice();
  const int h = (side - 1) / 2;
  const Point cx = lat.point(x);
  auto offset = [&](std::int64_t s) {
    int m = 0;
    for (int a = 0; a < lat.dim(); ++a) m = std::max(m, std::abs(lat.coord(s, a) - cx[a]));
    return m;
  };
  if (h == 0) return true;
  std::vector<std::int64_t> queue{x};
  std::unordered_set<std::int64_t> seen{x};
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto u = queue[i];
    if (offset(u) == h) return true;
    for (int a = 0; a < lat.dim(); ++a) {
      for (int dir : {+1, -1}) {
        if (field.omega(u, a, dir) < 1.0) continue;
        const auto v = lat.neighbor(u, a, dir);
        if (offset(v) > h || !seen.insert(v).second) continue;
        queue.push_back(v);
      }
    }
  }
  return false;
}

double step_prob(const env::ConductanceField& field, std::int64_t from, std::int64_t to) {
  const Lattice& lat = field.lattice();
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      if (lat.neighbor(from, a, dir) == to) return field.omega(from, a, dir) / field.pi(from);
    }
  }
  return 0;
}

}  // namespace

std::vector<TrapRecord> detect_traps(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling,
                                     double weak_max, const DetectOptions& opt) {
  const Lattice& lat = field.lattice();
  const int d = lat.dim();
  std::vector<std::int32_t> dist;
  if (opt.distances) {
    const auto src = origin_cluster_point(labeling);
    if (src >= 0) dist = bfs_distances(field, labeling, src);
  }

  auto weak_at = [&](std::int64_t s, std::int64_t partner) {
    double w = 0;
    for (int a = 0; a < d; ++a) {
      for (int dir : {+1, -1}) {
        if (lat.neighbor(s, a, dir) == partner) continue;
        w = std::max(w, field.omega(s, a, dir));
      }
    }
    return w;
  };

  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t n = lat.num_sites();
  std::vector<std::vector<TrapRecord>> found(static_cast<std::size_t>((n + kChunk - 1) / kChunk));
  parallel::for_chunks(
      0, n, kChunk,
      [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        auto& out = found[static_cast<std::size_t>(c)];
        for (std::int64_t x = lo; x < hi; ++x) {
          if (!labeling.in_largest(x)) continue;
          if (opt.max_norm >= 0) {
            double r2 = 0;
            for (int a = 0; a < d; ++a) r2 += static_cast<double>(lat.coord(x, a)) * lat.coord(x, a);
            if (r2 > opt.max_norm * opt.max_norm) continue;
          }
          for (int a = 0; a < d; ++a) {
            if (lat.coord(x, a) > lat.radius() - 2) continue;
            const std::int64_t y = x + lat.stride(a);
            const std::int64_t z = y + lat.stride(a);
            if (field.omega_up(y, a) != 1.0 || !(field.omega_up(x, a) > 0)) continue;
            const double w = std::max(weak_at(y, z), weak_at(z, y));
            if (w >= 1.0 || w > weak_max) continue;
            if (opt.box_side > 0 && !reaches_box_boundary(field, x, opt.box_side)) continue;
            TrapRecord t;
            t.anchor = x;
            t.y_site = y;
            t.z_site = z;
            t.x = lat.point(x);
            t.y = lat.point(y);
            t.z = lat.point(z);
            t.axis = a;
            t.weak_scale = w;
            t.in_cluster = true;
            if (!dist.empty()) t.chem_dist = dist[x];
            out.push_back(t);
          }
        }
      },
      opt.threads);
  std::vector<TrapRecord> all;
  for (auto& f : found) all.insert(all.end(), f.begin(), f.end());
  return all;
}

int box_side_for_scale(double ell) {
  if (!(ell > 1)) throw std::invalid_argument("box_side_for_scale: ell must exceed 1");
  const double l = std::log(ell);
  int s = static_cast<int>(std::ceil(l * l - 1e-12));
  if (s % 2 == 0) ++s;
  return std::max(s, 1);
}

double trap_sum(const std::vector<TrapRecord>& traps, double n, int dim) {
  const double rmax = std::sqrt(n);
  double sum = 0;
  for (const auto& t : traps) {
    double r2 = 0;
    for (int a = 0; a < dim; ++a) r2 += static_cast<double>(t.x[a]) * t.x[a];
    const double r = std::sqrt(r2);
    if (r > rmax) continue;
    sum += r < 1 ? 1.0 : std::pow(r, -(2.0 * dim - 4));
  }
  return sum;
}

kernel::Estimate hitting_prob(const env::ConductanceField& field, std::int64_t source, std::int64_t target, int n,
                              std::int64_t walkers, std::uint64_t seed, int threads) {
  if (walkers < 1) throw std::invalid_argument("hitting_prob: walkers must be >= 1");
  if (source == target) return {1.0, 0.0};
  const Lattice& lat = field.lattice();
  const auto positive = cluster::Threshold::positive();
  {
    std::vector<char> seen(static_cast<std::size_t>(lat.num_sites()), 0);
    std::vector<std::int64_t> queue{source};
    seen[source] = 1;
    bool found = false;
    for (std::size_t i = 0; i < queue.size() && !found; ++i) {
      for (int a = 0; a < lat.dim(); ++a) {
        for (int dir : {+1, -1}) {
          if (!positive.open(field.omega(queue[i], a, dir))) continue;
          const auto v = lat.neighbor(queue[i], a, dir);
          if (!seen[v]) {
            seen[v] = 1;
            queue.push_back(v);
            found = found || v == target;
          }
        }
      }
    }
    if (!found) throw DisconnectedError("hitting_prob: source and target are not connected");
  }

  constexpr std::int64_t kChunk = 4096;
  std::vector<std::int64_t> hits(static_cast<std::size_t>((walkers + kChunk - 1) / kChunk), 0);
  const int d = lat.dim();
  parallel::for_chunks(
      0, walkers, kChunk,
      [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        std::int64_t h = 0;
        double w[2 * kMaxDim];
        for (std::int64_t k = lo; k < hi; ++k) {
          rng::Stream stream(seed, rng::kWalker, static_cast<std::uint64_t>(k));
          std::int64_t x = source;
          for (int t = 0; t < n; ++t) {
            double total = 0;
            for (int a = 0; a < d; ++a) {
              w[2 * a] = field.omega(x, a, +1);
              w[2 * a + 1] = field.omega(x, a, -1);
              total += w[2 * a] + w[2 * a + 1];
            }
            double u = stream.uniform() * total;
            int m = 0;
            while (m < 2 * d - 1 && u >= w[m]) {
              u -= w[m];
              ++m;
            }
            while (w[m] == 0) --m;
            x = lat.neighbor(x, m / 2, m % 2 == 0 ? +1 : -1);
            if (x == target) {
              ++h;
              break;
            }
          }
        }
        hits[static_cast<std::size_t>(c)] = h;
      },
      threads);
  std::int64_t total = 0;
  for (auto h : hits) total += h;
  const double p = static_cast<double>(total) / static_cast<double>(walkers);
  return {p, std::sqrt(p * (1 - p) / static_cast<double>(walkers))};
}

TrapBound trap_lower_bound(const env::ConductanceField& field, const TrapRecord& trap, std::int64_t source, int n,
                           const std::optional<std::vector<std::int64_t>>& path) {
  const Lattice& lat = field.lattice();
  if (field.omega_up(trap.y_site, trap.axis) != 1.0) throw std::invalid_argument("trap_lower_bound: not a trap");
  TrapBound b;
  b.stay = step_prob(field, trap.y_site, trap.z_site) * step_prob(field, trap.z_site, trap.y_site);
  if (source == trap.y_site) {
    b.idle_rounds = n;
    b.value = std::pow(b.stay, n);
    b.path_probability = b.entry = b.exit = 1;
    return b;
  }

  if (path) {
    b.path = *path;
    if (b.path.empty() || b.path.front() != source || b.path.back() != trap.anchor) {
      throw std::invalid_argument("trap_lower_bound: path must run from the source to the anchor");
    }
  } else {
    std::vector<std::int64_t> parent(static_cast<std::size_t>(lat.num_sites()), -2);
    std::vector<std::int64_t> queue{source};
    parent[source] = -1;
    for (std::size_t i = 0; i < queue.size() && parent[trap.anchor] == -2; ++i) {
      for (int a = 0; a < lat.dim(); ++a) {
        for (int dir : {+1, -1}) {
          if (field.omega(queue[i], a, dir) < 1.0) continue;
          const auto v = lat.neighbor(queue[i], a, dir);
          if (parent[v] == -2) {
            parent[v] = queue[i];
            queue.push_back(v);
          }
        }
      }
    }
    if (parent[trap.anchor] == -2) throw DisconnectedError("trap_lower_bound: no strong path to the anchor");
    for (std::int64_t v = trap.anchor; v != -1; v = parent[v]) b.path.push_back(v);
    std::reverse(b.path.begin(), b.path.end());
  }

  const int r = static_cast<int>(b.path.size()) - 1;
  b.path_probability = 1;
  for (int i = 0; i < r; ++i) {
    b.path_probability *= step_prob(field, b.path[i], b.path[i + 1]) * step_prob(field, b.path[i + 1], b.path[i]);
  }
  b.entry = step_prob(field, trap.anchor, trap.y_site);
  b.exit = step_prob(field, trap.y_site, trap.anchor);
  b.idle_rounds = n - r - 1;
  if (b.idle_rounds < 0) {
    b.value = 0;
    return b;
  }
  b.value = b.path_probability * b.entry * b.exit * std::pow(b.stay, b.idle_rounds);
  return b;
}

PathRatio conditioned_path_ratio(const env::ConductanceField& field, std::int64_t source, double strong_alpha, int n,
                                 std::int64_t paths, std::uint64_t seed, int threads) {
  const Lattice& lat = field.lattice();
  const int d = lat.dim();
  const cluster::Threshold strong = cluster::Threshold::at_least(strong_alpha);
  kernel::Options opt;
  opt.dynamics = kernel::Dynamics::killed(strong_alpha);
  opt.route = kernel::Route::kDirect;
  opt.threads = threads;
  PathRatio res;
  res.n = n;
  res.paths = paths;
  res.survival = kernel::evolve(field, source, n, opt).total;
  if (!(res.survival > 0)) throw DisconnectedError("conditioned_path_ratio: source has no strong bond");

  constexpr std::int64_t kChunk = 1024;
  const auto chunks = static_cast<std::size_t>((paths + kChunk - 1) / kChunk);
  std::vector<double> lo_r(chunks, std::numeric_limits<double>::infinity()), hi_r(chunks, 0);
  parallel::for_chunks(
      0, paths, kChunk,
      [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        std::int64_t nb[2 * kMaxDim];
        for (std::int64_t k = lo; k < hi; ++k) {
          rng::Stream stream(seed, rng::kWalker, static_cast<std::uint64_t>(k));
          std::int64_t x = source;
          double log_ratio = 0;
          for (int t = 0; t < n; ++t) {
            int deg = 0;
            for (int a = 0; a < d; ++a) {
              for (int dir : {+1, -1}) {
                if (strong.open(field.omega(x, a, dir))) nb[deg++] = lat.neighbor(x, a, dir);
              }
            }
            log_ratio += std::log(deg / field.pi(x));
            x = nb[stream.below(static_cast<std::uint64_t>(deg))];
          }
          const double ratio = std::exp(log_ratio) / res.survival;
          lo_r[c] = std::min(lo_r[c], ratio);
          hi_r[c] = std::max(hi_r[c], ratio);
        }
      },
      threads);
  res.min_ratio = *std::min_element(lo_r.begin(), lo_r.end());
  res.max_ratio = *std::max_element(hi_r.begin(), hi_r.end());
  return res;
}

}  // namespace rcm::traps
