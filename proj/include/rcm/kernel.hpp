#pragma once

#include "rcm/env.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace rcm::kernel {

// Which one-step kernel is iterated.
//  kFull:       P(x,y) = omega_xy / pi(x).
//  kRestricted: only bonds with omega >= alpha, normalized by their sum.
//  kKilled:     only bonds with omega >= alpha, normalized by the full pi(x);
//               the missing mass is killed (substochastic).
struct Dynamics {
  enum Kind { kFull, kRestricted, kKilled };
  Kind kind = kFull;
  double alpha = 0;

  static Dynamics full() { return {}; }
  static Dynamics restricted(double a) { return {kRestricted, a}; }
  static Dynamics killed(double a) { return {kKilled, a}; }
  bool conservative() const { return kind != kKilled; }
};

// kDirect evolves n steps (needs depth(source) >= n). kHalf uses
// reversibility, P^{a+b}(s,s) = pi(s) sum_y mu_a(y) mu_b(y) / pi(y), and only
// needs depth(source) >= ceil(n/2).
enum class Route { kAuto, kDirect, kHalf };

struct Options {
  Dynamics dynamics;
  Route route = Route::kAuto;
  int threads = 0;
};

struct Distribution {
  std::vector<std::pair<std::int64_t, double>> mass;  // sorted by site
  double total = 0;
  double max_mass_deviation = 0;  // over all steps, conservative dynamics only
  std::int64_t flushed = 0;       // entries below 1e-300 set to zero

  double at(std::int64_t site) const;
};

// mu_n = delta_source P^n.
Distribution evolve(const env::ConductanceField& field, std::int64_t source, int n, const Options& opt = {});

struct SeriesEntry {
  int n = 0;
  double value = 0;
  double stderr_ = 0;
};

struct KernelSeries {
  Point origin{};
  int dim = 0;
  int radius = 0;
  std::string law_id;
  std::uint64_t seed = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::string method = "exact";
  std::string route;
  std::vector<SeriesEntry> entries;

  double max_mass_deviation = 0;
  // Largest increase P^{2n+2}(0,0) - P^{2n}(0,0) over all computed even steps.
  double max_even_increase = 0;
  std::int64_t flushed = 0;

  bool even_monotone(double slack = 1e-12) const { return max_even_increase <= slack; }
  double value_at(int n) const;
};

// Exact P^n(source,source) for n = stride, 2 stride, ..., <= n_max. Every
// step up to n_max enters the monotonicity bookkeeping.
KernelSeries return_series(const env::ConductanceField& field, std::int64_t source, int n_max, int stride = 1,
                           const Options& opt = {});

// Throws rcm::Error when the even-step subsequence increases by more than slack.
void require_monotone(const KernelSeries& series, double slack = 1e-12);

struct Estimate {
  double value = 0;
  double stderr_ = 0;
};

// Fraction of independent walkers at the source after n steps; walker w uses
// the substream (seed, walker domain, w).
Estimate mc_return(const env::ConductanceField& field, std::int64_t source, int n, std::int64_t walkers,
                   std::uint64_t seed, int threads = 0);

// Least squares fit of log v = log A - a log n + b log log n (b fixed at 0
// unless with_log).
struct DecayFit {
  double exponent = 0;
  double exponent_stderr = 0;
  double log_coefficient = 0;
  double prefactor = 0;
  int n_lo = 0;
  int n_hi = 0;
  int points = 0;
  double residual_norm = 0;
  bool with_log = false;
};

// The series overload uses the even n in [n_lo, n_hi].
DecayFit fit_decay(const KernelSeries& series, int n_lo, int n_hi, bool with_log = false);
DecayFit fit_decay(const std::vector<double>& ns, const std::vector<double>& values, bool with_log = false);

struct AnnealedResult {
  double mean = 0;
  double stderr_ = 0;
  int accepted = 0;
  int rejected = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
};

// Seed of the k-th candidate environment of ensemble member i.
std::uint64_t ensemble_seed(std::uint64_t master, std::uint64_t member, std::uint64_t attempt);

// Average of exact P^n(0,0) over sampled environments in which the origin
// lies in the largest positive-conductance component and that component
// reaches the box boundary. Rejected samples are redrawn; more than 99%
// rejections is an error.
AnnealedResult annealed_return(const env::ConductanceLaw& law, int dim, int radius, int n, int ensemble,
                               std::uint64_t seed, int threads = 0);

}  // namespace rcm::kernel
