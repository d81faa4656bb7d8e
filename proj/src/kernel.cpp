#include "rcm/kernel.hpp"
#include "rcm/cluster.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace rcm::kernel {

namespace {

constexpr double kFlush = 1e-300;

// Neumaier compensated sum.
struct Accumulator {
  double sum = 0;
  double comp = 0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  void add(const Accumulator& o) {
    add(o.sum);
    add(o.comp);
  }
  double value() const { return sum + comp; }
};

// l1 ball of radius R+1 around the source, stored as rows along axis 0. A row
// is identified by its transverse offset o (axes 1..d-1); it holds the points
// source + (t, o) for |t| <= R+1-|o|_1.
class BallGrid {
 public:
  BallGrid(const env::ConductanceField& field, std::int64_t source, int radius, const Dynamics& dyn)
      : pad_(radius + 1), d_(field.dim()) {
    const Lattice& lat = field.lattice();
    center_ = lat.point(source);

    // dense lookup from transverse offset to row id
    const int span = 2 * pad_ + 1;
    std::int64_t cells = 1;
    for (int a = 1; a < d_; ++a) {
      cells *= span;
      if (cells > (std::int64_t{1} << 27)) throw std::invalid_argument("kernel: evolution ball too large");
    }
    std::vector<std::int32_t> lookup(static_cast<std::size_t>(cells), -1);
    std::vector<int> offset(static_cast<std::size_t>(std::max(d_ - 1, 1)), 0);
    std::int64_t points = 0;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      std::int64_t rem = cell;
      int norm = 0;
      for (int a = 0; a < d_ - 1; ++a) {
        offset[a] = static_cast<int>(rem % span) - pad_;
        rem /= span;
        norm += std::abs(offset[a]);
      }
      if (norm > pad_) continue;
      lookup[cell] = static_cast<std::int32_t>(row_norm_.size());
      row_norm_.push_back(norm);
      row_cell_.push_back(cell);
      row_start_.push_back(points);
      points += 2 * (pad_ - norm) + 1;
    }
    num_points_ = points;
    const auto rows = static_cast<std::int64_t>(row_norm_.size());
    row_nb_.assign(static_cast<std::size_t>(rows * 2 * std::max(d_ - 1, 1)), -1);
    for (std::int64_t r = 0; r < rows; ++r) {
      std::int64_t stride = 1;
      std::int64_t rem = row_cell_[r];
      for (int a = 0; a < d_ - 1; ++a) {
        const int o = static_cast<int>(rem % span) - pad_;
        rem /= span;
        if (o + 1 <= pad_) row_nb_[r * 2 * (d_ - 1) + 2 * a] = lookup[row_cell_[r] + stride];
        if (o - 1 >= -pad_) row_nb_[r * 2 * (d_ - 1) + 2 * a + 1] = lookup[row_cell_[r] - stride];
        stride *= span;
      }
    }

    // conductance codes and weights
    const auto& pal = field.palette();
    for (std::size_t c = 0; c < pal.size(); ++c) {
      const double w = pal[c];
      const bool strong = dyn.kind == Dynamics::kFull || w >= dyn.alpha;
      move_value_[c] = strong ? w : 0.0;
      norm_value_[c] = dyn.kind == Dynamics::kRestricted ? move_value_[c] : w;
    }
    const int dirs = 2 * d_;
    codes_.assign(static_cast<std::size_t>(num_points_ * dirs), 0);
    pi_.assign(static_cast<std::size_t>(num_points_), 0.0);
    inv_pi_.assign(static_cast<std::size_t>(num_points_), 0.0);
    site_.assign(static_cast<std::size_t>(num_points_), -1);
    parallel::for_chunks(0, rows, 256, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
      Point p{};
      for (std::int64_t r = lo; r < hi; ++r) {
        std::int64_t rem = row_cell_[r];
        for (int a = 1; a < d_; ++a) {
          p[a] = center_[a] + static_cast<int>(rem % span) - pad_;
          rem /= span;
        }
        const int w = pad_ - row_norm_[r];
        for (int t = -w; t <= w; ++t) {
          p[0] = center_[0] + t;
          if (!lat.contains(p)) continue;
          const std::int64_t idx = row_start_[r] + w + t;
          const std::int64_t s = lat.index(p);
          site_[idx] = s;
          double pi = 0;
          for (int a = 0; a < d_; ++a) {
            for (int k = 0; k < 2; ++k) {
              const int dir = k == 0 ? 1 : -1;
              std::uint8_t code = 0;
              if (dir > 0) {
                if (p[a] < lat.radius()) code = field.code_up(s, a);
              } else if (p[a] > -lat.radius()) {
                code = field.code_up(s - lat.stride(a), a);
              }
              codes_[idx * dirs + 2 * a + k] = code;
              pi += norm_value_[code];
            }
          }
          pi_[idx] = pi;
          inv_pi_[idx] = pi > 0 ? 1.0 / pi : 0.0;
        }
      }
    });
    std::int64_t center_cell = 0;
    for (int a = 0, stride = 1; a < d_ - 1; ++a, stride *= span) center_cell += static_cast<std::int64_t>(pad_) * stride;
    source_idx_ = row_center(lookup[center_cell]);
  }

  std::int64_t num_points() const { return num_points_; }
  std::int64_t source_index() const { return source_idx_; }
  double pi(std::int64_t idx) const { return pi_[idx]; }
  double inv_pi(std::int64_t idx) const { return inv_pi_[idx]; }
  std::int64_t site(std::int64_t idx) const { return site_[idx]; }
  std::int64_t num_rows() const { return static_cast<std::int64_t>(row_norm_.size()); }
  int row_norm(std::int64_t r) const { return row_norm_[r]; }
  std::int64_t row_center(std::int64_t r) const { return row_start_[r] + (pad_ - row_norm_[r]); }

  // nu_out(y) = (sum_x nu_in(x) move(x,y)) / pi(y) on points with distance
  // <= reach of matching parity; returns the compensated sum of mu_out.
  struct StepStats {
    Accumulator mass;
    std::int64_t flushed = 0;
  };
  StepStats pull(const std::vector<double>& nu_in, std::vector<double>& nu_out, int reach, int threads) const {
    const int dirs = 2 * d_;
    const auto rows = num_rows();
    constexpr std::int64_t kRowsPerChunk = 64;
    const std::int64_t chunks = (rows + kRowsPerChunk - 1) / kRowsPerChunk;
    std::vector<StepStats> partial(static_cast<std::size_t>(chunks));
    parallel::for_chunks(
        0, rows, kRowsPerChunk,
        [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
          StepStats st;
          std::int64_t base[2 * kMaxDim];
          for (std::int64_t r = lo; r < hi; ++r) {
            const int norm = row_norm_[r];
            if (norm > reach) continue;
            const int w = reach - norm;
            const std::int64_t center = row_center(r);
            base[0] = center + 1;
            base[1] = center - 1;
            for (int a = 1; a < d_; ++a) {
              for (int k = 0; k < 2; ++k) {
                const std::int32_t r2 = row_nb_[r * 2 * (d_ - 1) + 2 * (a - 1) + k];
                base[2 * a + k] = r2 < 0 ? -1 : row_center(r2);
              }
            }
            for (int t = -w; t <= w; t += 2) {
              const std::int64_t idx = center + t;
              const std::uint8_t* code = &codes_[idx * dirs];
              double mu = 0;
              for (int j = 0; j < dirs; ++j) {
                if (code[j] == 0) continue;
                mu += move_value_[code[j]] * nu_in[base[j] + t];
              }
              if (mu > 0 && mu < kFlush) {
                mu = 0;
                ++st.flushed;
              }
              st.mass.add(mu);
              nu_out[idx] = mu * inv_pi_[idx];
            }
          }
          partial[c] = st;
        },
        threads);
    StepStats total;
    for (const auto& p : partial) {
      total.mass.add(p.mass);
      total.flushed += p.flushed;
    }
    return total;
  }

  // sum_y nu_a(y) nu_b(y) pi(y) over points within `reach`.
  double weighted_dot(const std::vector<double>& a, const std::vector<double>& b, int reach) const {
    Accumulator acc;
    for (std::int64_t r = 0; r < num_rows(); ++r) {
      const int norm = row_norm_[r];
      if (norm > reach) continue;
      const int w = reach - norm;
      const std::int64_t center = row_center(r);
      for (int t = -w; t <= w; ++t) {
        const std::int64_t idx = center + t;
        if (a[idx] != 0 && b[idx] != 0) acc.add(a[idx] * b[idx] * pi_[idx]);
      }
    }
    return acc.value();
  }

 private:
  int pad_;
  int d_;
  Point center_{};
  std::vector<int> row_norm_;
  std::vector<std::int64_t> row_cell_;
  std::vector<std::int64_t> row_start_;
  std::vector<std::int32_t> row_nb_;
  std::int64_t num_points_ = 0;
  double move_value_[256] = {};
  double norm_value_[256] = {};
  std::vector<std::uint8_t> codes_;
  std::vector<double> pi_;
  std::vector<double> inv_pi_;
  std::vector<std::int64_t> site_;
  std::int64_t source_idx_ = 0;
};

void check_source(const env::ConductanceField& field, std::int64_t source, const Dynamics& dyn) {
  const Lattice& lat = field.lattice();
  if (source < 0 || source >= lat.num_sites()) throw std::invalid_argument("kernel: source outside the box");
  double pi = 0;
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      const double w = field.omega(source, a, dir);
      pi += dyn.kind == Dynamics::kFull || w >= dyn.alpha ? w : 0.0;
    }
  }
  if (!(pi > 0)) throw IsolatedSiteError("kernel: isolated source " + to_string(lat.point(source), lat.dim()));
}

int required_depth(int n, Route route) { return route == Route::kHalf ? (n + 1) / 2 : n; }

Route resolve_route(const env::ConductanceField& field, std::int64_t source, int n, Route route) {
  const Lattice& lat = field.lattice();
  const int depth = lat.depth(lat.point(source));
  if (route == Route::kAuto) route = depth >= n ? Route::kDirect : Route::kHalf;
  if (depth < required_depth(n, route)) {
    throw BoxTooSmallError("kernel: source at depth " + std::to_string(depth) + " cannot support " +
                           std::to_string(n) + " steps without boundary contact (need L >= " +
                           std::to_string(required_depth(n, route)) + " around the source)");
  }
  return route;
}

}  // namespace

double Distribution::at(std::int64_t site) const {
  auto it = std::lower_bound(mass.begin(), mass.end(), std::make_pair(site, -1.0));
  return it != mass.end() && it->first == site ? it->second : 0.0;
}

Distribution evolve(const env::ConductanceField& field, std::int64_t source, int n, const Options& opt) {
  if (n < 0) throw std::invalid_argument("evolve: n must be non-negative");
  check_source(field, source, opt.dynamics);
  resolve_route(field, source, n, Route::kDirect);

  BallGrid grid(field, source, n, opt.dynamics);
  std::vector<double> cur(static_cast<std::size_t>(grid.num_points()), 0.0);
  std::vector<double> next(cur.size(), 0.0);
  const std::int64_t s0 = grid.source_index();
  cur[s0] = grid.inv_pi(s0);

  Distribution out;
  for (int k = 0; k < n; ++k) {
    const auto st = grid.pull(cur, next, k + 1, opt.threads);
    out.flushed += st.flushed;
    if (opt.dynamics.conservative()) {
      out.max_mass_deviation = std::max(out.max_mass_deviation, std::abs(st.mass.value() - 1.0));
    }
    std::swap(cur, next);
  }
  Accumulator total;
  for (std::int64_t idx = 0; idx < grid.num_points(); ++idx) {
    if (cur[idx] == 0) continue;
    const double mu = cur[idx] * grid.pi(idx);
    out.mass.emplace_back(grid.site(idx), mu);
    total.add(mu);
  }
  std::sort(out.mass.begin(), out.mass.end());
  out.total = total.value();
  return out;
}

double KernelSeries::value_at(int n) const {
  for (const auto& e : entries) {
    if (e.n == n) return e.value;
  }
  throw std::out_of_range("series has no entry at n=" + std::to_string(n));
}

KernelSeries return_series(const env::ConductanceField& field, std::int64_t source, int n_max, int stride,
                           const Options& opt) {
  if (n_max < 1) throw std::invalid_argument("return_series: n_max must be >= 1");
  if (stride < 1) throw std::invalid_argument("return_series: stride must be >= 1");
  check_source(field, source, opt.dynamics);
  const Route route = resolve_route(field, source, n_max, opt.route);

  KernelSeries out;
  const Lattice& lat = field.lattice();
  out.origin = lat.point(source);
  out.dim = lat.dim();
  out.radius = lat.radius();
  out.law_id = env::law_id(field.law());
  out.seed = field.seed();
  if (opt.dynamics.kind != Dynamics::kFull) out.alpha = opt.dynamics.alpha;
  out.route = route == Route::kDirect ? "direct" : "half";

  std::vector<double> value(static_cast<std::size_t>(n_max) + 1, 0.0);
  value[0] = 1.0;
  const int steps = route == Route::kDirect ? n_max : (n_max + 1) / 2;
  BallGrid grid(field, source, steps, opt.dynamics);
  std::vector<double> cur(static_cast<std::size_t>(grid.num_points()), 0.0);
  std::vector<double> next(cur.size(), 0.0);
  const std::int64_t s0 = grid.source_index();
  const double pi0 = grid.pi(s0);
  cur[s0] = grid.inv_pi(s0);

  for (int k = 0; k < steps; ++k) {
    const auto st = grid.pull(cur, next, k + 1, opt.threads);
    out.flushed += st.flushed;
    if (opt.dynamics.conservative()) {
      out.max_mass_deviation = std::max(out.max_mass_deviation, std::abs(st.mass.value() - 1.0));
    }
    if (route == Route::kDirect) {
      value[k + 1] = next[s0] * pi0;
    } else {
      // cur = nu_k, next = nu_{k+1}
      if (2 * k + 1 <= n_max) value[2 * k + 1] = pi0 * grid.weighted_dot(cur, next, k + 1);
      if (2 * k + 2 <= n_max) value[2 * k + 2] = pi0 * grid.weighted_dot(next, next, k + 1);
    }
    std::swap(cur, next);
  }

  for (int m = 2; m + 2 <= n_max; m += 2) {
    out.max_even_increase = std::max(out.max_even_increase, value[m + 2] - value[m]);
  }
  for (int n = stride; n <= n_max; n += stride) out.entries.push_back({n, value[n], 0.0});
  return out;
}

void require_monotone(const KernelSeries& series, double slack) {
  if (!series.even_monotone(slack)) {
    throw Error("even-step return probabilities increase by " + std::to_string(series.max_even_increase));
  }
}

Estimate mc_return(const env::ConductanceField& field, std::int64_t source, int n, std::int64_t walkers,
                   std::uint64_t seed, int threads) {
  if (walkers < 1) throw std::invalid_argument("mc_return: walkers must be >= 1");
  if (n < 0) throw std::invalid_argument("mc_return: n must be non-negative");
  check_source(field, source, Dynamics::full());
  const Lattice& lat = field.lattice();
  const int d = lat.dim();
  constexpr std::int64_t kChunk = 4096;
  const std::int64_t chunks = (walkers + kChunk - 1) / kChunk;
  std::vector<std::int64_t> hits(static_cast<std::size_t>(chunks), 0);
  parallel::for_chunks(
      0, walkers, kChunk,
      [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
        std::int64_t count = 0;
        double w[2 * kMaxDim];
        for (std::int64_t i = lo; i < hi; ++i) {
          rng::Stream stream(seed, rng::kWalker, static_cast<std::uint64_t>(i));
          std::int64_t x = source;
          for (int k = 0; k < n; ++k) {
            double pi = 0;
            for (int a = 0; a < d; ++a) {
              w[2 * a] = field.omega(x, a, +1);
              w[2 * a + 1] = field.omega(x, a, -1);
              pi += w[2 * a] + w[2 * a + 1];
            }
            double u = stream.uniform() * pi;
            int j = 0;
            for (; j < 2 * d - 1; ++j) {
              if (u < w[j]) break;
              u -= w[j];
            }
            while (w[j] == 0) --j;  // guard against roundoff past the last open bond
            x += (j % 2 == 0 ? 1 : -1) * lat.stride(j / 2);
          }
          if (x == source) ++count;
        }
        hits[c] = count;
      },
      threads);
  std::int64_t total = 0;
  for (auto h : hits) total += h;
  const double p = static_cast<double>(total) / static_cast<double>(walkers);
  return {p, std::sqrt(p * (1 - p) / static_cast<double>(walkers))};
}

DecayFit fit_decay(const std::vector<double>& ns, const std::vector<double>& values, bool with_log) {
  const auto m = static_cast<Eigen::Index>(ns.size());
  if (ns.size() != values.size()) throw std::invalid_argument("fit_decay: size mismatch");
  if (m < 4) throw std::invalid_argument("fit_decay: need at least 4 points");
  const int cols = with_log ? 3 : 2;
  Eigen::MatrixXd X(m, cols);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(values[i] > 0)) throw std::invalid_argument("fit_decay: nonpositive value at n=" + std::to_string(ns[i]));
    if (with_log && !(ns[i] > 1)) throw std::invalid_argument("fit_decay: log term needs n > 1");
    X(i, 0) = 1.0;
    X(i, 1) = -std::log(ns[i]);
    if (with_log) X(i, 2) = std::log(std::log(ns[i]));
    y(i) = std::log(values[i]);
  }
  const auto qr = X.colPivHouseholderQr();
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  DecayFit fit;
  fit.with_log = with_log;
  fit.prefactor = std::exp(beta(0));
  fit.exponent = beta(1);
  fit.log_coefficient = with_log ? beta(2) : 0.0;
  fit.points = static_cast<int>(m);
  fit.residual_norm = resid.norm();
  fit.n_lo = static_cast<int>(*std::min_element(ns.begin(), ns.end()));
  fit.n_hi = static_cast<int>(*std::max_element(ns.begin(), ns.end()));
  if (m > cols) {
    const double sigma2 = resid.squaredNorm() / static_cast<double>(m - cols);
    const Eigen::MatrixXd cov = sigma2 * (X.transpose() * X).inverse();
    fit.exponent_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
  }
  return fit;
}

DecayFit fit_decay(const KernelSeries& series, int n_lo, int n_hi, bool with_log) {
  std::vector<double> ns, vs;
  // odd returns vanish on the bipartite lattice
  for (const auto& e : series.entries) {
    if (e.n % 2 == 0 && e.n >= n_lo && e.n <= n_hi) {
      ns.push_back(e.n);
      vs.push_back(e.value);
    }
  }
  auto fit = fit_decay(ns, vs, with_log);
  fit.n_lo = n_lo;
  fit.n_hi = n_hi;
  return fit;
}

std::uint64_t ensemble_seed(std::uint64_t master, std::uint64_t member, std::uint64_t attempt) {
  return rng::hash(rng::derive(master, member, rng::kConfig), rng::kSample, attempt);
}

AnnealedResult annealed_return(const env::ConductanceLaw& law, int dim, int radius, int n, int ensemble,
                               std::uint64_t seed, int threads) {
  if (ensemble < 2) throw std::invalid_argument("annealed_return: ensemble must be >= 2");
  if (radius < (n + 1) / 2) throw BoxTooSmallError("annealed_return: L must be at least ceil(n/2)");
  env::validate(law, dim);

  struct Member {
    double value = 0;
    std::uint64_t seed = 0;
    int rejected = 0;
  };
  auto run_member = [&](std::int64_t i) {
    Member m;
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (m.rejected >= 100) {
        throw Error("annealed_return: more than 99% of sampled environments rejected");
      }
      const std::uint64_t s = ensemble_seed(seed, static_cast<std::uint64_t>(i), attempt);
      const auto field = env::sample_field(dim, radius, law, s, 1);
      const auto labels = cluster::components(field, cluster::Threshold::positive());
      const std::int64_t o = field.lattice().origin();
      if (!labels.in_largest(o) || !labels.touches_boundary(labels.largest_id())) {
        ++m.rejected;
        continue;
      }
      Options opt;
      opt.threads = 1;
      const auto series = return_series(field, o, n, n, opt);
      m.value = series.entries.back().value;
      m.seed = s;
      return m;
    }
  };
  const auto members = parallel::map_tasks<Member>(ensemble, run_member, threads);

  AnnealedResult out;
  const double v0 = members.front().value;
  Accumulator dev;
  for (const auto& m : members) {
    dev.add(m.value - v0);
    out.values.push_back(m.value);
    out.seeds.push_back(m.seed);
    out.rejected += m.rejected;
  }
  out.accepted = ensemble;
  const double shift = dev.value() / ensemble;
  out.mean = v0 + shift;
  Accumulator ss;
  for (const auto& m : members) {
    const double e = (m.value - v0) - shift;
    ss.add(e * e);
  }
  out.stderr_ = std::sqrt(ss.value() / (static_cast<double>(ensemble) * (ensemble - 1)));
  return out;
}

}  // namespace rcm::kernel
