#include "rcm/coarse.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <map>

namespace rcm::coarse {

double HatChain::prob(std::int64_t y) const {
  auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(y, -1.0));
  return it != row.end() && it->first == y ? it->second : 0.0;
}

double HatChain::row_sum() const {
  double s = 0;
  for (const auto& [y, p] : row) s += p;
  return s;
}

double HatChain::entropy() const {
  double h = 0;
  for (const auto& [y, p] : row) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

double HatChain::hiding_bound(int dim, double alpha) const {
  return 4.0 * dim / alpha * static_cast<double>(g_size);
}

namespace {

double strong_alpha(const cluster::ClusterLabeling& strong) {
  const double a = strong.threshold().alpha;
  if (!(a > 0)) throw std::invalid_argument("coarse: strong threshold alpha must be positive");
  return a;
}

struct Neighbors {
  int count = 0;
  std::int64_t site[2 * kMaxDim];
  double omega[2 * kMaxDim];
  double pi = 0;
};

Neighbors neighbors(const env::ConductanceField& field, std::int64_t u) {
  const Lattice& lat = field.lattice();
  Neighbors nb;
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      const double w = field.omega(u, a, dir);
      if (w > 0) {
        nb.site[nb.count] = lat.neighbor(u, a, dir);
        nb.omega[nb.count] = w;
        ++nb.count;
        nb.pi += w;
      }
    }
  }
  return nb;
}

// One step of X from u with a uniform draw.
std::int64_t step(const Neighbors& nb, double u) {
  double acc = u * nb.pi;
  for (int j = 0; j < nb.count - 1; ++j) {
    if (acc < nb.omega[j]) return nb.site[j];
    acc -= nb.omega[j];
  }
  return nb.site[nb.count - 1];
}

void finalize_row(HatChain& h, std::map<std::int64_t, double>& acc) {
  h.row.assign(acc.begin(), acc.end());
}

}  // namespace

HatChain hat_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong, std::int64_t x,
                   const SolverOptions& opt) {
  strong_alpha(strong);
  const auto wc = cluster::weak_component(field, strong, x);
  HatChain h;
  h.anchor = x;
  h.g_size = wc.size();
  h.weak_size = wc.weak_sites.size();
  h.max_weak_diameter = wc.max_diameter();

  const Neighbors nx = neighbors(field, x);
  h.pi = nx.pi;
  if (!(nx.pi > 0)) throw IsolatedSiteError("hat_chain: isolated anchor");

  std::map<std::int64_t, double> acc;
  const auto& W = wc.weak_sites;
  const std::size_t m = W.size();
  auto weak_index = [&W](std::int64_t s) -> std::ptrdiff_t {
    auto it = std::lower_bound(W.begin(), W.end(), s);
    return it != W.end() && *it == s ? it - W.begin() : -1;
  };

  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (int j = 0; j < nx.count; ++j) {
    const double p = nx.omega[j] / nx.pi;
    const auto k = weak_index(nx.site[j]);
    if (k >= 0) {
      b(k) += p;
    } else {
      acc[nx.site[j]] += p;
    }
  }
  if (m == 0) {
    finalize_row(h, acc);
    return h;
  }

  if (m > opt.iterative_limit) {
    // Monte Carlo estimate of the exit distribution and hiding time.
    h.solver = "mc";
    h.approximate = true;
    std::map<std::int64_t, double> hits;
    double total_time = 0;
    for (std::int64_t w = 0; w < opt.mc_walkers; ++w) {
      rng::Stream stream(rng::derive(opt.mc_seed, static_cast<std::uint64_t>(x)), rng::kWalker,
                         static_cast<std::uint64_t>(w));
      std::int64_t u = step(nx, stream.uniform());
      std::int64_t t = 1;
      while (!strong.in_largest(u)) {
        u = step(neighbors(field, u), stream.uniform());
        ++t;
      }
      hits[u] += 1.0;
      total_time += static_cast<double>(t);
    }
    for (auto& [s, c] : hits) c /= static_cast<double>(opt.mc_walkers);
    h.expected_hiding_time = total_time / static_cast<double>(opt.mc_walkers);
    finalize_row(h, hits);
    return h;
  }

  // Green's function row z = b^T (I - P_WW)^{-1}, i.e. (I - P_WW)^T z = b.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Neighbors> wn(m);
  for (std::size_t i = 0; i < m; ++i) {
    wn[i] = neighbors(field, W[i]);
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
    for (int j = 0; j < wn[i].count; ++j) {
      const auto k = weak_index(wn[i].site[j]);
      if (k >= 0) trip.emplace_back(static_cast<int>(k), static_cast<int>(i), -wn[i].omega[j] / wn[i].pi);
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  A.setFromTriplets(trip.begin(), trip.end());

  Eigen::VectorXd z;
  if (m <= opt.dense_limit) {
    h.solver = "dense";
    const Eigen::MatrixXd dense(A);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(dense);
    if (!lu.isInvertible()) throw StrandedComponentError("hat_chain: weak component cannot reach the strong component");
    z = lu.solve(b);
  } else {
    h.solver = "iterative";
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> solver;
    solver.setTolerance(opt.tolerance);
    solver.setMaxIterations(static_cast<int>(std::max<std::size_t>(1000, 10 * m)));
    solver.compute(A);
    if (solver.info() != Eigen::Success) throw StrandedComponentError("hat_chain: factorization failed");
    z = solver.solve(b);
    if (solver.info() != Eigen::Success) throw StrandedComponentError("hat_chain: iterative solve did not converge");
  }
  h.residual = (A * z - b).norm();
  if (!z.allFinite() || h.residual > 1e-8) {
    throw StrandedComponentError("hat_chain: singular absorbing system (residual " + std::to_string(h.residual) + ")");
  }

  for (std::size_t i = 0; i < m; ++i) {
    for (int j = 0; j < wn[i].count; ++j) {
      if (weak_index(wn[i].site[j]) < 0) acc[wn[i].site[j]] += z(static_cast<Eigen::Index>(i)) * wn[i].omega[j] / wn[i].pi;
    }
  }
  h.expected_hiding_time = 1.0 + z.sum();
  finalize_row(h, acc);
  return h;
}

double HatMatrix::max_symmetry_residual() const {
  double worst = 0;
  for (const auto& r : rows) {
    for (const auto& [y, p] : r.row) {
      const double forward = r.pi * p;
      const double backward = at(y).omega_hat(r.anchor);
      worst = std::max(worst, std::abs(forward - backward));
    }
  }
  return worst;
}

double HatMatrix::max_row_sum_error() const {
  double worst = 0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(r.row_sum() - 1.0));
  return worst;
}

HatMatrix hat_matrix(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                     const SolverOptions& opt, int threads) {
  HatMatrix out;
  const std::int64_t n = field.lattice().num_sites();
  for (std::int64_t s = 0; s < n; ++s) {
    if (strong.in_largest(s)) out.states.push_back(s);
  }
  for (std::size_t i = 0; i < out.states.size(); ++i) out.index[out.states[i]] = i;
  out.rows = parallel::map_tasks<HatChain>(
      static_cast<std::int64_t>(out.states.size()),
      [&](std::int64_t i) { return hat_chain(field, strong, out.states[i], opt); }, threads);
  return out;
}

std::vector<double> hat_power_returns(const HatMatrix& hat, std::int64_t x, int l_max) {
  const std::size_t n = hat.states.size();
  std::vector<double> cur(n, 0.0), next(n, 0.0);
  const std::size_t ix = hat.index.at(x);
  cur[ix] = 1.0;
  std::vector<double> out{1.0};
  for (int k = 1; k <= l_max; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (cur[i] == 0) continue;
      for (const auto& [y, p] : hat.rows[i].row) next[hat.index.at(y)] += cur[i] * p;
    }
    std::swap(cur, next);
    out.push_back(cur[ix]);
  }
  return out;
}

CoarseGrid mc_coarse_returns(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                             std::int64_t x, const std::vector<int>& ells, const std::vector<int>& ns,
                             std::int64_t walkers, std::uint64_t seed, int threads) {
  if (walkers < 1) throw std::invalid_argument("mc_coarse_return: walkers must be >= 1");
  if (ells.empty() || ns.empty()) throw std::invalid_argument("mc_coarse_return: empty grid");
  for (int l : ells) {
    if (l < 1) throw std::invalid_argument("mc_coarse_return: l must be >= 1");
  }
  if (!strong.in_largest(x)) throw NotStrongError("mc_coarse_return: start site is not strong");
  if (!(neighbors(field, x).pi > 0)) throw IsolatedSiteError("mc_coarse_return: isolated start");
  const int l_max = *std::max_element(ells.begin(), ells.end());
  const std::size_t L = ells.size(), N = ns.size();

  constexpr std::int64_t kChunk = 1024;
  const std::int64_t chunks = (walkers + kChunk - 1) / kChunk;
  std::vector<std::vector<std::int64_t>> partial(static_cast<std::size_t>(chunks));
  parallel::for_chunks(
      0, walkers, kChunk,
      [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        std::vector<std::int64_t> counts(L * N, 0);
        std::vector<std::int64_t> time_at(static_cast<std::size_t>(l_max) + 1, -1);
        std::vector<char> home(static_cast<std::size_t>(l_max) + 1, 0);
        for (std::int64_t w = lo; w < hi; ++w) {
          rng::Stream stream(seed, rng::kWalker, static_cast<std::uint64_t>(w));
          std::int64_t u = x;
          std::int64_t t = 0;
          for (int visits = 0; visits < l_max;) {
            u = step(neighbors(field, u), stream.uniform());
            ++t;
            if (strong.in_largest(u)) {
              ++visits;
              time_at[visits] = t;
              home[visits] = u == x;
            }
          }
          for (std::size_t i = 0; i < L; ++i) {
            if (!home[ells[i]]) continue;
            for (std::size_t j = 0; j < N; ++j) {
              if (time_at[ells[i]] >= ns[j]) ++counts[i * N + j];
            }
          }
        }
        partial[c] = std::move(counts);
      },
      threads);

  CoarseGrid g;
  g.ells = ells;
  g.ns = ns;
  g.walkers = walkers;
  g.estimate.assign(L, std::vector<double>(N, 0.0));
  g.stderr_.assign(L, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      std::int64_t total = 0;
      for (const auto& p : partial) total += p[i * N + j];
      const double est = static_cast<double>(total) / static_cast<double>(walkers);
      g.estimate[i][j] = est;
      g.stderr_[i][j] = std::sqrt(est * (1 - est) / static_cast<double>(walkers));
    }
  }
  return g;
}

CoarseEstimate mc_coarse_return(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                                 std::int64_t x, int ell, int n, std::int64_t walkers, std::uint64_t seed,
                                 int threads) {
  const auto g = mc_coarse_returns(field, strong, x, {ell}, {n}, walkers, seed, threads);
  return {g.estimate[0][0], g.stderr_[0][0]};
}

Census hiding_time_census(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                          const std::vector<std::int64_t>& sites, const SolverOptions& opt, int threads) {
  const double alpha = strong_alpha(strong);
  const int d = field.dim();
  Census out;
  out.rows = parallel::map_tasks<CensusRow>(
      static_cast<std::int64_t>(sites.size()),
      [&](std::int64_t i) {
        const auto h = hat_chain(field, strong, sites[i], opt);
        return CensusRow{sites[i], h.g_size, h.expected_hiding_time, h.hiding_bound(d, alpha), h.entropy(),
                         h.approximate};
      },
      threads);
  if (out.rows.empty()) return out;
  double sum = 0, sum2 = 0;
  for (const auto& r : out.rows) {
    const double g = static_cast<double>(r.g_size);
    sum += g;
    sum2 += g * g;
    out.max_ratio = std::max(out.max_ratio, r.expected_hiding_time / r.bound);
    if (r.expected_hiding_time > r.bound) out.bound_holds = false;
  }
  const double k = static_cast<double>(out.rows.size());
  out.mean_g_size = sum / k;
  if (k > 1) out.stderr_g_size = std::sqrt(std::max(0.0, (sum2 - sum * sum / k) / (k - 1)) / k);
  return out;
}

}  // namespace rcm::coarse
