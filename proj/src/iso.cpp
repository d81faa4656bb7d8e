#include "rcm/iso.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace rcm::iso {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void lattice_moves(const env::ConductanceField& field, std::int64_t x, const cluster::Threshold* only, Row& out) {
  const Lattice& lat = field.lattice();
  out.clear();
  double pi = 0;
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      const double w = field.omega(x, a, dir);
      if (w > 0 && (!only || only->open(w))) {
        out.emplace_back(lat.neighbor(x, a, dir), w);
        pi += w;
      }
    }
  }
  for (auto& [y, p] : out) p /= pi;
}

double lattice_weight(const env::ConductanceField& field, std::int64_t x, const cluster::Threshold* only) {
  const Lattice& lat = field.lattice();
  double pi = 0;
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      const double w = field.omega(x, a, dir);
      if (w > 0 && (!only || only->open(w))) pi += w;
    }
  }
  return pi;
}

void compose(const ChainView& chain, std::int64_t x, Row& out) {
  Row first, second;
  chain.row(x, first);
  std::unordered_map<std::int64_t, double> acc;
  for (const auto& [y, p] : first) {
    chain.row(y, second);
    for (const auto& [z, q] : second) acc[z] += p * q;
  }
  out.assign(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
}

}  // namespace

ChainView plain_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& positive,
                      std::int64_t component_id) {
  ChainView c;
  c.kind = "plain";
  c.field = &field;
  c.open = cluster::Threshold::positive();
  const auto* lab = &positive;
  const auto* f = &field;
  c.contains = [lab, component_id](std::int64_t s) { return lab->component(s) == component_id; };
  c.weight = [f](std::int64_t s) { return lattice_weight(*f, s, nullptr); };
  c.row = [f](std::int64_t s, Row& out) { lattice_moves(*f, s, nullptr, out); };
  if (positive.component_size(component_id) <= 2'000'000) {
    for (std::int64_t s = 0; s < field.lattice().num_sites(); ++s) {
      if (positive.component(s) == component_id) c.states.push_back(s);
    }
  }
  return c;
}

ChainView tilde_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong) {
  ChainView c;
  c.kind = "tilde";
  c.field = &field;
  c.open = strong.threshold();
  const auto* lab = &strong;
  const auto* f = &field;
  const cluster::Threshold th = strong.threshold();
  c.contains = [lab](std::int64_t s) { return lab->in_largest(s); };
  c.weight = [f, th](std::int64_t s) { return lattice_weight(*f, s, &th); };
  c.row = [f, th](std::int64_t s, Row& out) { lattice_moves(*f, s, &th, out); };
  if (strong.largest_size() <= 2'000'000) {
    for (std::int64_t s = 0; s < field.lattice().num_sites(); ++s) {
      if (strong.in_largest(s)) c.states.push_back(s);
    }
  }
  return c;
}

ChainView hat2_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                     const coarse::HatMatrix& hat) {
  ChainView one;
  const auto* h = &hat;
  one.contains = [h](std::int64_t s) { return h->index.count(s) > 0; };
  one.weight = [h](std::int64_t s) { return h->at(s).pi; };
  one.row = [h](std::int64_t s, Row& out) { out = h->at(s).row; };
  ChainView c = square(one);
  c.kind = "hat2";
  c.states = hat.states;
  c.field = &field;
  c.open = strong.threshold();
  return c;
}

ChainView matrix_chain(const std::vector<std::vector<double>>& P, const std::vector<double>& weights) {
  const auto n = static_cast<std::int64_t>(P.size());
  if (weights.size() != P.size()) throw std::invalid_argument("matrix_chain: size mismatch");
  ChainView c;
  c.kind = "custom";
  for (std::int64_t i = 0; i < n; ++i) c.states.push_back(i);
  c.contains = [n](std::int64_t s) { return s >= 0 && s < n; };
  c.weight = [weights](std::int64_t s) { return weights[static_cast<std::size_t>(s)]; };
  c.row = [P](std::int64_t s, Row& out) {
    out.clear();
    const auto& r = P[static_cast<std::size_t>(s)];
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] != 0) out.emplace_back(static_cast<std::int64_t>(j), r[j]);
    }
  };
  return c;
}

ChainView square(const ChainView& chain) {
  ChainView c = chain;
  c.kind = chain.kind + "^2";
  c.row = [chain](std::int64_t s, Row& out) { compose(chain, s, out); };
  return c;
}

ChainView lazy(const ChainView& chain, double hold) {
  if (!(hold >= 0 && hold < 1)) throw std::invalid_argument("lazy: hold must be in [0,1)");
  ChainView c = chain;
  c.kind = "lazy(" + chain.kind + ")";
  c.row = [chain, hold](std::int64_t s, Row& out) {
    chain.row(s, out);
    bool found = false;
    for (auto& [y, p] : out) {
      p *= 1 - hold;
      if (y == s) {
        p += hold;
        found = true;
      }
    }
    if (!found) {
      out.emplace_back(s, hold);
      std::sort(out.begin(), out.end());
    }
  };
  return c;
}

double stationarity_residual(const ChainView& chain) {
  std::unordered_map<std::int64_t, double> flow;
  Row r;
  for (auto x : chain.states) {
    chain.row(x, r);
    const double w = chain.weight(x);
    for (const auto& [y, p] : r) flow[y] += w * p;
  }
  double worst = 0;
  for (auto x : chain.states) worst = std::max(worst, std::abs(flow[x] - chain.weight(x)));
  return worst;
}

CutRecord cut_stats(const ChainView& chain, const std::vector<std::int64_t>& set) {
  if (set.empty()) throw std::invalid_argument("cut_stats: empty set");
  std::unordered_set<std::int64_t> in(set.begin(), set.end());
  CutRecord rec;
  rec.size = in.size();
  Row r;
  for (auto x : in) {
    if (!chain.contains(x)) throw std::invalid_argument("cut_stats: state " + std::to_string(x) + " not in the chain");
    const double w = chain.weight(x);
    rec.pi += w;
    chain.row(x, r);
    for (const auto& [y, p] : r) {
      if (in.count(y)) {
        rec.q_in += w * p;
      } else {
        rec.q_out += w * p;
      }
    }
  }
  rec.phi = rec.q_out / rec.pi;
  if (chain.field) {
    const env::ConductanceField& f = *chain.field;
    const Lattice& lat = f.lattice();
    rec.open_boundary = rec.edge_boundary = rec.inner_boundary = 0;
    for (auto x : in) {
      bool inner = false;
      for (int a = 0; a < lat.dim(); ++a) {
        for (int dir : {+1, -1}) {
          const std::int64_t y = lat.neighbor(x, a, dir);
          if (y >= 0 && in.count(y)) continue;
          ++rec.edge_boundary;
          inner = true;
          if (y >= 0 && chain.open.open(f.omega(x, a, dir))) ++rec.open_boundary;
        }
      }
      if (inner) ++rec.inner_boundary;
    }
  }
  return rec;
}

double ProfileEstimate::operator()(double u) const {
  // breakpoints are sums of weights; accept those within rounding of u
  auto it = std::upper_bound(r.begin(), r.end(), u + 1e-12 * std::max(1.0, std::abs(u)));
  if (it == r.begin()) return kInf;
  return phi[static_cast<std::size_t>(it - r.begin()) - 1];
}

void enumerate_connected_sets(const std::vector<std::vector<int>>& adjacency, int max_size,
                              const std::function<void(const std::vector<int>&)>& visit) {
  const int n = static_cast<int>(adjacency.size());
  std::vector<int> mark(static_cast<std::size_t>(n), 0);  // members of S and N(S), with multiplicity
  std::vector<int> set;

  std::function<void(std::vector<int>, int)> extend = [&](std::vector<int> ext, int v) {
    visit(set);
    if (static_cast<int>(set.size()) >= max_size) return;
    while (!ext.empty()) {
      const int w = ext.back();
      ext.pop_back();
      std::vector<int> next = ext;
      for (int u : adjacency[w]) {
        if (u > v && mark[u] == 0) next.push_back(u);
      }
      set.push_back(w);
      ++mark[w];
      for (int u : adjacency[w]) ++mark[u];
      extend(std::move(next), v);
      for (int u : adjacency[w]) --mark[u];
      --mark[w];
      set.pop_back();
    }
  };

  for (int v = 0; v < n; ++v) {
    set.assign(1, v);
    ++mark[v];
    for (int u : adjacency[v]) ++mark[u];
    std::vector<int> ext;
    for (int u : adjacency[v]) {
      if (u > v) ext.push_back(u);
    }
    extend(std::move(ext), v);
    for (int u : adjacency[v]) --mark[u];
    --mark[v];
  }
}

namespace {

ProfileEstimate build_profile(std::vector<std::pair<double, double>> samples, double r_max) {
  std::sort(samples.begin(), samples.end());
  ProfileEstimate p;
  p.r_max = r_max;
  p.sets_examined = static_cast<std::int64_t>(samples.size());
  double best = kInf;
  for (const auto& [pi, phi] : samples) {
    best = std::min(best, phi);
    if (!p.r.empty() && p.r.back() == pi) {
      p.phi.back() = best;
    } else {
      p.r.push_back(pi);
      p.phi.push_back(best);
    }
  }
  return p;
}

void require_states(const ChainView& chain) {
  if (chain.states.empty()) throw std::invalid_argument("profile: chain does not list its states");
}

double min_weight(const ChainView& chain) {
  double m = kInf;
  for (auto s : chain.states) m = std::min(m, chain.weight(s));
  return m;
}

}  // namespace

ProfileEstimate profile_exhaustive(const ChainView& chain, double r_max) {
  require_states(chain);
  const std::size_t k = chain.states.size();
  if (k > 20) throw std::invalid_argument("profile_exhaustive: more than 20 states");
  if (r_max < min_weight(chain)) throw std::invalid_argument("profile: r_max below the smallest single-state weight");

  std::unordered_map<std::int64_t, int> idx;
  for (std::size_t i = 0; i < k; ++i) idx[chain.states[i]] = static_cast<int>(i);
  std::vector<std::vector<double>> Q(k, std::vector<double>(k, 0.0));
  std::vector<double> w(k);
  std::vector<std::vector<int>> adj(k);
  Row r;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = chain.weight(chain.states[i]);
    chain.row(chain.states[i], r);
    for (const auto& [y, p] : r) {
      const int j = idx.at(y);
      Q[i][j] += w[i] * p;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j && (Q[i][j] > 0 || Q[j][i] > 0)) adj[i].push_back(static_cast<int>(j));
    }
  }
  std::vector<std::pair<double, double>> samples;
  const double tol = 1e-12 * std::max(1.0, r_max);
  enumerate_connected_sets(adj, static_cast<int>(k), [&](const std::vector<int>& s) {
    std::uint32_t mask = 0;
    double pi = 0;
    for (int i : s) {
      mask |= 1u << i;
      pi += w[i];
    }
    if (pi > r_max + tol) return;
    double out = 0;
    for (int i : s) {
      for (std::size_t j = 0; j < k; ++j) {
        if (!(mask >> j & 1u)) out += Q[i][j];
      }
    }
    samples.emplace_back(pi, out / pi);
  });
  auto p = build_profile(std::move(samples), r_max);
  p.mode = "exhaustive";
  p.exact = true;
  return p;
}

ProfileEstimate profile_heuristic(const ChainView& chain, double r_max, const HeuristicOptions& opt) {
  require_states(chain);
  if (r_max < min_weight(chain)) throw std::invalid_argument("profile: r_max below the smallest single-state weight");
  std::vector<std::pair<double, double>> samples;
  Row r;
  for (int start = 0; start < opt.starts; ++start) {
    rng::Stream stream(opt.seed, rng::kSample, static_cast<std::uint64_t>(start));
    std::unordered_set<std::int64_t> in;
    std::vector<std::int64_t> frontier;
    std::unordered_set<std::int64_t> in_frontier;
    const std::int64_t x0 = chain.states[stream.below(chain.states.size())];
    double pi = 0, q_out = 0;
    auto add = [&](std::int64_t u) {
      const double wu = chain.weight(u);
      chain.row(u, r);
      double to_set = 0, self = 0;
      for (const auto& [y, p] : r) {
        if (y == u) self += p;
        else if (in.count(y)) to_set += p;
      }
      q_out += wu * (1 - to_set - self) - wu * to_set;
      pi += wu;
      in.insert(u);
      for (const auto& [y, p] : r) {
        if (p > 0 && !in.count(y) && !in_frontier.count(y)) {
          frontier.push_back(y);
          in_frontier.insert(y);
        }
      }
    };
    if (chain.weight(x0) > r_max) continue;
    add(x0);
    samples.emplace_back(pi, std::max(0.0, q_out) / pi);
    while (true) {
      // drop frontier entries that joined the set
      std::vector<std::int64_t> live;
      for (auto y : frontier) {
        if (!in.count(y)) live.push_back(y);
      }
      frontier.swap(live);
      if (frontier.empty()) break;
      const std::size_t pick = stream.below(frontier.size());
      const std::int64_t u = frontier[pick];
      if (pi + chain.weight(u) > r_max) break;
      add(u);
      samples.emplace_back(pi, std::max(0.0, q_out) / pi);
    }
    if (in.size() >= 2) {
      // local swaps on the final set
      std::vector<std::int64_t> set(in.begin(), in.end());
      std::sort(set.begin(), set.end());
      auto rec = cut_stats(chain, set);
      for (std::size_t t = 0; t < 2 * set.size(); ++t) {
        std::vector<std::int64_t> cand = set;
        const std::size_t drop = stream.below(cand.size());
        std::vector<std::int64_t> nbrs;
        for (auto x : cand) {
          chain.row(x, r);
          for (const auto& [y, p] : r) {
            if (p > 0 && !std::binary_search(set.begin(), set.end(), y)) nbrs.push_back(y);
          }
        }
        if (nbrs.empty()) break;
        cand[drop] = nbrs[stream.below(nbrs.size())];
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        if (cand.size() != set.size()) continue;
        // connectivity of the candidate in the chain graph
        std::unordered_set<std::int64_t> cs(cand.begin(), cand.end()), seen{cand.front()};
        std::vector<std::int64_t> q{cand.front()};
        for (std::size_t h = 0; h < q.size(); ++h) {
          chain.row(q[h], r);
          for (const auto& [y, p] : r) {
            if (p > 0 && cs.count(y) && seen.insert(y).second) q.push_back(y);
          }
        }
        if (seen.size() != cand.size()) continue;
        const auto cr = cut_stats(chain, cand);
        if (cr.pi > r_max) continue;
        if (cr.phi <= rec.phi) {
          set = cand;
          rec = cr;
          samples.emplace_back(rec.pi, rec.phi);
        }
      }
    }
  }
  if (samples.empty()) throw std::invalid_argument("profile: no admissible set");
  auto p = build_profile(std::move(samples), r_max);
  p.mode = "heuristic";
  p.exact = false;
  return p;
}

namespace {

double finish_mp(double integral, double gamma) {
  if (std::isinf(integral)) return kInf;
  const double x = 1.0 + (1 - gamma) * (1 - gamma) / (gamma * gamma) * integral;
  return std::ceil(x - 1e-9 * std::max(1.0, x));
}

void check_mp_args(double gamma, double eps, double pi_x, double pi_y) {
  if (!(gamma > 0 && gamma <= 0.5)) throw std::invalid_argument("morris_peres_n: gamma must be in (0, 1/2]");
  if (!(eps > 0)) throw std::invalid_argument("morris_peres_n: eps must be positive");
  if (!(pi_x > 0 && pi_y > 0)) throw std::invalid_argument("morris_peres_n: weights must be positive");
}

}  // namespace

double morris_peres_n(const ProfileEstimate& profile, double gamma, double eps, double pi_x, double pi_y) {
  check_mp_args(gamma, eps, pi_x, pi_y);
  const double a = 4 * std::min(pi_x, pi_y);
  const double b = 4 / eps;
  if (b <= a) return 1.0;
  if (b > profile.r_max * (1 + 1e-12)) {
    throw std::invalid_argument("morris_peres_n: profile computed only up to r=" + std::to_string(profile.r_max) +
                                ", integration needs " + std::to_string(b));
  }
  // Phi is constant on [r_i, r_{i+1}); +inf (integrand 0) below r_0.
  double integral = 0;
  for (std::size_t i = 0; i < profile.r.size(); ++i) {
    const double lo = std::max(a, profile.r[i]);
    const double hi = std::min(b, i + 1 < profile.r.size() ? profile.r[i + 1] : b);
    if (hi <= lo) continue;
    const double phi = profile.phi[i];
    if (phi <= 0) return kInf;
    integral += 4.0 / (phi * phi) * std::log(hi / lo);
  }
  return finish_mp(integral, gamma);
}

double morris_peres_n(const std::function<double(double)>& phi, double gamma, double eps, double pi_x, double pi_y) {
  check_mp_args(gamma, eps, pi_x, pi_y);
  const double a = 4 * std::min(pi_x, pi_y);
  const double b = 4 / eps;
  if (b <= a) return 1.0;
  auto f = [&](double u) {
    const double v = phi(u);
    if (!(v > 0)) throw std::domain_error("morris_peres_n: profile vanishes on the integration range");
    return 4.0 / (u * v * v);
  };
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
  return finish_mp(integral, gamma);
}

// ---------------------------------------------------------------------------

namespace {

struct GrowState {
  const env::ConductanceField& field;
  const cluster::ClusterLabeling& labeling;
  const Lattice& lat;
  int R;
  std::vector<char> in;
  std::vector<std::int64_t> members;

  GrowState(const env::ConductanceField& f, const cluster::ClusterLabeling& l, int r)
      : field(f), labeling(l), lat(f.lattice()), R(r), in(static_cast<std::size_t>(f.lattice().num_sites()), 0) {}

  bool inside(std::int64_t s) const {
    for (int a = 0; a < lat.dim(); ++a) {
      if (std::abs(lat.coord(s, a)) > R) return false;
    }
    return true;
  }
  bool open(std::int64_t s, int a, int dir) const { return labeling.threshold().open(field.omega(s, a, dir)); }

  // open neighbors of s inside the R-box
  template <class F>
  void for_open(std::int64_t s, F&& f) const {
    for (int a = 0; a < lat.dim(); ++a) {
      for (int dir : {+1, -1}) {
        if (!open(s, a, dir)) continue;
        const std::int64_t t = lat.neighbor(s, a, dir);
        if (inside(t)) f(t);
      }
    }
  }

  std::int64_t boundary() const {
    std::int64_t b = 0;
    for (auto s : members) {
      for (int a = 0; a < lat.dim(); ++a) {
        for (int dir : {+1, -1}) {
          if (open(s, a, dir) && !in[lat.neighbor(s, a, dir)]) ++b;
        }
      }
    }
    return b;
  }

  // open bonds from s to members minus open bonds from s to non-members
  int balance(std::int64_t s) const {
    int v = 0;
    for (int a = 0; a < lat.dim(); ++a) {
      for (int dir : {+1, -1}) {
        if (!open(s, a, dir)) continue;
        v += in[lat.neighbor(s, a, dir)] ? 1 : -1;
      }
    }
    return v;
  }

  std::vector<std::int64_t> frontier() const {
    std::vector<std::int64_t> out;
    for (auto s : members) for_open(s, [&](std::int64_t t) {
        if (!in[t]) out.push_back(t);
      });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool connected() const {
    if (members.empty()) return true;
    std::vector<std::int64_t> queue{members.front()};
    std::unordered_set<std::int64_t> seen{members.front()};
    for (std::size_t h = 0; h < queue.size(); ++h) {
      for_open(queue[h], [&](std::int64_t t) {
        if (in[t] && seen.insert(t).second) queue.push_back(t);
      });
    }
    return seen.size() == members.size();
  }

  void clear() {
    for (auto s : members) in[s] = 0;
    members.clear();
  }
};

std::vector<std::int64_t> cluster_sites_in_box(const cluster::ClusterLabeling& labeling, int R) {
  const Lattice& lat = labeling.lattice();
  std::vector<std::int64_t> out;
  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    bool inside = true;
    for (int a = 0; a < lat.dim() && inside; ++a) inside = std::abs(lat.coord(s, a)) <= R;
    if (inside && labeling.in_largest(s)) out.push_back(s);
  }
  return out;
}

void grow_into(GrowState& st, const std::vector<std::int64_t>& sites, std::size_t size, rng::Stream& stream) {
  st.clear();
  const std::int64_t x0 = sites[stream.below(sites.size())];
  st.in[x0] = 1;
  st.members.push_back(x0);
  std::vector<std::int64_t> frontier;
  std::unordered_map<std::int64_t, std::size_t> pos;
  auto push = [&](std::int64_t t) {
    if (st.in[t] || pos.count(t)) return;
    pos[t] = frontier.size();
    frontier.push_back(t);
  };
  st.for_open(x0, push);
  while (st.members.size() < size && !frontier.empty()) {
    const std::size_t k = stream.below(frontier.size());
    const std::int64_t u = frontier[k];
    pos[frontier.back()] = k;
    frontier[k] = frontier.back();
    frontier.pop_back();
    pos.erase(u);
    st.in[u] = 1;
    st.members.push_back(u);
    st.for_open(u, push);
  }

  // local swaps that keep the set connected and do not enlarge the open boundary
  const std::size_t swaps = 2 * st.members.size();
  auto front = st.frontier();
  for (std::size_t t = 0; t < swaps && !front.empty() && st.members.size() > 1; ++t) {
    const std::size_t ri = stream.below(st.members.size());
    const std::int64_t r = st.members[ri];
    const std::int64_t f = front[stream.below(front.size())];
    // boundary change: removing r then adding f
    st.in[r] = 0;
    const int delta = st.balance(r);  // bonds to members become boundary, the rest vanish
    const int add_delta = -st.balance(f);
    if (delta + add_delta > 0) {
      st.in[r] = 1;
      continue;
    }
    st.in[f] = 1;
    st.members[ri] = f;
    if (!st.connected()) {
      st.in[f] = 0;
      st.in[r] = 1;
      st.members[ri] = r;
      continue;
    }
    front = st.frontier();
  }
}

}  // namespace

std::vector<std::int64_t> grow_set(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling,
                                   int R, std::size_t size, std::uint64_t seed, std::uint64_t index) {
  const auto sites = cluster_sites_in_box(labeling, R);
  if (sites.empty()) throw std::invalid_argument("grow_set: no cluster sites in the box");
  GrowState st(field, labeling, R);
  rng::Stream stream(seed, rng::kSample, index);
  grow_into(st, sites, size, stream);
  auto out = st.members;
  std::sort(out.begin(), out.end());
  return out;
}

IsoResult check_isoperimetry(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling, int R,
                             double c1, int samples, std::uint64_t seed, int threads) {
  const Lattice& lat = field.lattice();
  const int d = lat.dim();
  if (R < 2 || R >= lat.radius()) throw std::invalid_argument("check_isoperimetry: need 2 <= R < L");
  const auto sites = cluster_sites_in_box(labeling, R);
  IsoResult res;
  const double expo = static_cast<double>(d) / (d - 1);
  res.size_floor = static_cast<std::size_t>(std::ceil(std::pow(c1 * std::log(static_cast<double>(R)), expo)));
  res.size_floor = std::max<std::size_t>(res.size_floor, 2);
  const double box = std::pow(2.0 * R + 1, d);
  res.size_cap = std::min<std::size_t>(sites.size(), static_cast<std::size_t>(box / 8));
  if (sites.empty() || res.size_cap < res.size_floor) {
    throw std::invalid_argument("check_isoperimetry: no candidate meets the size floor");
  }

  struct Candidate {
    double ratio = kInf;
    std::vector<std::int64_t> set;
  };
  const int workers = 16;  // fixed task split keeps tie-breaking independent of the thread count
  const int per = (samples + workers - 1) / workers;
  auto results = parallel::map_tasks<Candidate>(
      workers,
      [&](std::int64_t w) {
        Candidate best;
        GrowState st(field, labeling, R);
        for (int i = static_cast<int>(w) * per; i < std::min(samples, static_cast<int>(w + 1) * per); ++i) {
          rng::Stream stream(seed, rng::kSample, static_cast<std::uint64_t>(i));
          const double lf = std::log(static_cast<double>(res.size_floor));
          const double lc = std::log(static_cast<double>(res.size_cap));
          const auto target = static_cast<std::size_t>(std::llround(std::exp(lf + (lc - lf) * stream.uniform())));
          grow_into(st, sites, std::clamp(target, res.size_floor, res.size_cap), stream);
          if (st.members.size() < res.size_floor) continue;
          const double ratio = static_cast<double>(st.boundary()) /
                               std::pow(static_cast<double>(st.members.size()), (d - 1.0) / d);
          if (ratio < best.ratio) {
            best.ratio = ratio;
            best.set = st.members;
          }
        }
        return best;
      },
      threads);
  res.candidates = samples;
  res.min_ratio = kInf;
  for (auto& c : results) {
    if (c.ratio < res.min_ratio) {
      res.min_ratio = c.ratio;
      res.witness = c.set;
    }
  }
  if (res.witness.empty()) throw std::invalid_argument("check_isoperimetry: no candidate meets the size floor");
  std::sort(res.witness.begin(), res.witness.end());
  return res;
}

// ---------------------------------------------------------------------------

bool gn_event(double p, int N, int dim, std::uint64_t config_seed, bool* part1, bool* part2) {
  if (N < 1 || dim < 2 || dim > kMaxDim) throw std::invalid_argument("gn_event: need N >= 1 and 2 <= d <= 6");
  const int side = 3 * N + 1;  // coordinates v = x + N in [0, 3N]
  std::int64_t stride[kMaxDim];
  std::int64_t sites = 1;
  for (int a = 0; a < dim; ++a) {
    stride[a] = sites;
    sites *= side;
  }
  auto coord = [&](std::int64_t s, int a) { return static_cast<int>((s / stride[a]) % side); };
  auto open = [&](std::int64_t s, int a) {
    return coord(s, a) < 3 * N &&
           rng::uniform(config_seed, rng::kEdge, static_cast<std::uint64_t>(s * dim + a)) < p;
  };
  std::vector<char> bond(static_cast<std::size_t>(sites * dim));
  for (std::int64_t s = 0; s < sites; ++s) {
    for (int a = 0; a < dim; ++a) bond[s * dim + a] = open(s, a);
  }

  // (1) crossings of the 2d neighbouring blocks, each within its own block
  bool ok1 = true;
  std::vector<char> seen(static_cast<std::size_t>(sites));
  for (int i = 0; i < dim && ok1; ++i) {
    for (int sign : {+1, -1}) {
      int lo[kMaxDim], hi[kMaxDim];
      for (int a = 0; a < dim; ++a) {
        lo[a] = N;
        hi[a] = 2 * N;  // B_N(0) in v coordinates
      }
      if (sign > 0) {
        lo[i] = 2 * N;
        hi[i] = 3 * N;
      } else {
        lo[i] = 0;
        hi[i] = N;
      }
      const int near = sign > 0 ? lo[i] : hi[i];
      const int far = sign > 0 ? hi[i] : lo[i];
      auto in_block = [&](std::int64_t s) {
        for (int a = 0; a < dim; ++a) {
          const int c = coord(s, a);
          if (c < lo[a] || c > hi[a]) return false;
        }
        return true;
      };
      std::fill(seen.begin(), seen.end(), 0);
      std::vector<std::int64_t> queue;
      for (std::int64_t s = 0; s < sites; ++s) {
        if (in_block(s) && coord(s, i) == near) {
          seen[s] = 1;
          queue.push_back(s);
        }
      }
      bool crossed = false;
      for (std::size_t h = 0; h < queue.size() && !crossed; ++h) {
        const std::int64_t u = queue[h];
        if (coord(u, i) == far) crossed = true;
        for (int a = 0; a < dim && !crossed; ++a) {
          if (coord(u, a) < hi[a] && bond[u * dim + a] && !seen[u + stride[a]]) {
            seen[u + stride[a]] = 1;
            queue.push_back(u + stride[a]);
          }
          if (coord(u, a) > lo[a] && bond[(u - stride[a]) * dim + a] && !seen[u - stride[a]]) {
            seen[u - stride[a]] = 1;
            queue.push_back(u - stride[a]);
          }
        }
      }
      if (!crossed) {
        ok1 = false;
        break;
      }
    }
  }

  // (2) at most one cluster of the big box joins B_N(0) to its boundary
  std::vector<std::int32_t> parent(static_cast<std::size_t>(sites));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::int64_t s = 0; s < sites; ++s) {
    for (int a = 0; a < dim; ++a) {
      if (bond[s * dim + a]) {
        const auto r1 = find(static_cast<std::int32_t>(s));
        const auto r2 = find(static_cast<std::int32_t>(s + stride[a]));
        if (r1 != r2) parent[r1] = r2;
      }
    }
  }
  std::unordered_set<std::int32_t> touching_center, touching_edge;
  for (std::int64_t s = 0; s < sites; ++s) {
    bool center = true, edge = false;
    for (int a = 0; a < dim; ++a) {
      const int c = coord(s, a);
      center = center && c >= N && c <= 2 * N;
      edge = edge || c == 0 || c == 3 * N;
    }
    if (center) touching_center.insert(find(static_cast<std::int32_t>(s)));
    if (edge) touching_edge.insert(find(static_cast<std::int32_t>(s)));
  }
  int crossing_clusters = 0;
  for (auto r : touching_center) {
    if (!touching_edge.count(r)) continue;
    // a single site is not an occupied path
    bool has_bond = false;
    for (std::int64_t s = 0; s < sites && !has_bond; ++s) {
      if (find(static_cast<std::int32_t>(s)) != r) continue;
      for (int a = 0; a < dim; ++a) has_bond = has_bond || bond[s * dim + a];
    }
    if (has_bond) ++crossing_clusters;
  }
  const bool ok2 = crossing_clusters <= 1;
  if (part1) *part1 = ok1;
  if (part2) *part2 = ok2;
  return ok1 && ok2;
}

GnEstimate gn_probability(double p, int N, int dim, std::int64_t ensemble, std::uint64_t seed, int threads) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("gn_probability: p must be in [0,1]");
  if (ensemble < 1) throw std::invalid_argument("gn_probability: ensemble must be >= 1");
  struct Outcome {
    char ok = 0, f1 = 0, f2 = 0;
  };
  const auto outcomes = parallel::map_tasks<Outcome>(
      ensemble,
      [&](std::int64_t i) {
        bool a = false, b = false;
        const bool ok = gn_event(p, N, dim, rng::derive(seed, static_cast<std::uint64_t>(i), rng::kConfig), &a, &b);
        return Outcome{static_cast<char>(ok), static_cast<char>(!a), static_cast<char>(!b)};
      },
      threads);
  GnEstimate est;
  std::int64_t hits = 0;
  for (const auto& o : outcomes) {
    hits += o.ok;
    est.part1_failures += o.f1;
    est.part2_failures += o.f2;
  }
  est.value = static_cast<double>(hits) / static_cast<double>(ensemble);
  est.stderr_ = std::sqrt(est.value * (1 - est.value) / static_cast<double>(ensemble));
  return est;
}

}  // namespace rcm::iso
