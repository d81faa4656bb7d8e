#pragma once

// Test-only reference computations. They share no code with the library
// beyond reading conductances through ConductanceField::omega(Point, Point).

#include "rcm/env.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

namespace oracle {

using rcm::Point;

inline Point shift(Point p, int axis, int dir) {
  p[axis] += dir;
  return p;
}

inline bool inside(const Point& p, int d, int L) {
  for (int a = 0; a < d; ++a) {
    if (std::abs(p[a]) > L) return false;
  }
  return true;
}

inline double pi_at(const rcm::env::ConductanceField& f, const Point& x) {
  double s = 0;
  for (int a = 0; a < f.dim(); ++a) {
    for (int dir : {1, -1}) s += f.omega(x, shift(x, a, dir));
  }
  return s;
}

// Sum over every closed n-step path at x of the product of step probabilities.
inline double closed_paths(const rcm::env::ConductanceField& f, const Point& x, int n) {
  std::function<double(const Point&, int)> go = [&](const Point& p, int left) -> double {
    if (left == 0) return p == x ? 1.0 : 0.0;
    double dist = 0;
    for (int a = 0; a < f.dim(); ++a) dist += std::abs(p[a] - x[a]);
    if (dist > left) return 0.0;
    const double pi = pi_at(f, p);
    double total = 0;
    for (int a = 0; a < f.dim(); ++a) {
      for (int dir : {1, -1}) {
        const Point q = shift(p, a, dir);
        const double w = f.omega(p, q);
        if (w > 0) total += w / pi * go(q, left - 1);
      }
    }
    return total;
  };
  return go(x, n);
}

inline double binom_half(int m) {
  // C(2m, m) / 4^m
  double v = 1;
  for (int k = 1; k <= m; ++k) v *= (m + k) / (4.0 * k);
  return v;
}

// Simple random walk on Z^2: P^{2m}(0,0) = (C(2m,m)/4^m)^2.
inline double srw2_return(int n) {
  if (n % 2) return 0;
  const double b = binom_half(n / 2);
  return b * b;
}

// Dense transition matrix of the walk on every site of the box with pi > 0.
struct Dense {
  std::vector<Point> sites;
  std::map<Point, int> index;
  std::vector<std::vector<double>> P;
  std::vector<double> pi;
};

inline Dense dense_chain(const rcm::env::ConductanceField& f) {
  Dense D;
  const int d = f.dim(), L = f.radius();
  std::function<void(Point, int)> rec = [&](Point p, int a) {
    if (a == d) {
      if (pi_at(f, p) > 0) D.sites.push_back(p);
      return;
    }
    for (int c = -L; c <= L; ++c) {
      p[a] = c;
      rec(p, a + 1);
    }
  };
  rec(Point{}, 0);
  for (std::size_t i = 0; i < D.sites.size(); ++i) D.index[D.sites[i]] = static_cast<int>(i);
  const std::size_t n = D.sites.size();
  D.P.assign(n, std::vector<double>(n, 0.0));
  D.pi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    D.pi[i] = pi_at(f, D.sites[i]);
    for (int a = 0; a < d; ++a) {
      for (int dir : {1, -1}) {
        const Point q = shift(D.sites[i], a, dir);
        const double w = f.omega(D.sites[i], q);
        if (w > 0) D.P[i][D.index.at(q)] += w / D.pi[i];
      }
    }
  }
  return D;
}

inline std::vector<std::vector<double>> matmul(const std::vector<std::vector<double>>& A,
                                               const std::vector<std::vector<double>>& B) {
  const std::size_t n = A.size(), m = B[0].size(), k = B.size();
  std::vector<std::vector<double>> C(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      if (A[i][t] == 0) continue;
      for (std::size_t j = 0; j < m; ++j) C[i][j] += A[i][t] * B[t][j];
    }
  }
  return C;
}

inline std::vector<std::vector<double>> matpow(std::vector<std::vector<double>> P, int n) {
  const std::size_t s = P.size();
  std::vector<std::vector<double>> R(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i) R[i][i] = 1;
  while (n > 0) {
    if (n & 1) R = matmul(R, P);
    P = matmul(P, P);
    n >>= 1;
  }
  return R;
}

inline bool connected_mask(const std::vector<std::vector<int>>& adj, std::uint32_t mask) {
  if (mask == 0) return false;
  int start = __builtin_ctz(mask);
  std::uint32_t seen = 1u << start;
  std::vector<int> stack{start};
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if ((mask >> v & 1u) && !(seen >> v & 1u)) {
        seen |= 1u << v;
        stack.push_back(v);
      }
    }
  }
  return seen == mask;
}

// All connected vertex subsets of a small graph, as bit masks.
inline std::vector<std::uint32_t> connected_subsets(const std::vector<std::vector<int>>& adj) {
  std::vector<std::uint32_t> out;
  const std::uint32_t n = static_cast<std::uint32_t>(adj.size());
  for (std::uint32_t m = 1; m < (1u << n); ++m) {
    if (connected_mask(adj, m)) out.push_back(m);
  }
  return out;
}

// Phi(r) = min over connected S with pi(S) <= r of Q(S, S^c) / pi(S), from a
// dense kernel P and weights w.
inline double brute_profile(const std::vector<std::vector<double>>& P, const std::vector<double>& w, double r) {
  const std::size_t n = P.size();
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && (P[i][j] > 0 || P[j][i] > 0)) adj[i].push_back(static_cast<int>(j));
    }
  }
  double best = INFINITY;
  for (auto m : connected_subsets(adj)) {
    double pi = 0, out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(m >> i & 1u)) continue;
      pi += w[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (!(m >> j & 1u)) out += w[i] * P[i][j];
      }
    }
    if (pi <= r * (1 + 1e-12)) best = std::min(best, out / pi);
  }
  return best;
}

// Row of the walk observed at its returns to `strong`, and the mean return
// time, by propagating the sub-probability mass off `strong` until it is
// negligible.
struct HatRow {
  std::map<int, double> row;
  double mean_time = 0;
};

inline HatRow hat_row(const Dense& D, const std::set<int>& strong, int x) {
  HatRow h;
  std::vector<double> v = D.P[static_cast<std::size_t>(x)];
  for (int k = 1; k < 1000000; ++k) {
    std::vector<double> next(v.size(), 0.0);
    double left = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0) continue;
      if (strong.count(static_cast<int>(i))) {
        h.row[static_cast<int>(i)] += v[i];
        h.mean_time += k * v[i];
        continue;
      }
      left += v[i];
      for (std::size_t j = 0; j < v.size(); ++j) next[j] += v[i] * D.P[i][j];
    }
    if (left < 1e-17) break;
    v.swap(next);
  }
  return h;
}

// Site labels of the subgraph of bonds passing `open`, by BFS on points.
inline std::map<Point, int> bfs_labels(const rcm::env::ConductanceField& f, const std::function<bool(double)>& open) {
  const Dense all = dense_chain(rcm::env::ConductanceField::uniform(f.lattice(), 1.0));
  std::map<Point, int> label;
  int next = 0;
  for (const auto& s : all.sites) {
    if (label.count(s)) continue;
    bool any = false;
    for (int a = 0; a < f.dim(); ++a) {
      for (int dir : {1, -1}) any = any || open(f.omega(s, shift(s, a, dir)));
    }
    if (!any) continue;
    std::vector<Point> stack{s};
    label[s] = next;
    while (!stack.empty()) {
      const Point p = stack.back();
      stack.pop_back();
      for (int a = 0; a < f.dim(); ++a) {
        for (int dir : {1, -1}) {
          const Point q = shift(p, a, dir);
          if (open(f.omega(p, q)) && !label.count(q)) {
            label[q] = next;
            stack.push_back(q);
          }
        }
      }
    }
    ++next;
  }
  return label;
}

}  // namespace oracle
