#pragma once

#include "rcm/cluster.hpp"
#include "rcm/env.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rcm::coarse {

struct SolverOptions {
  std::size_t dense_limit = 100;      // direct LU up to this many weak sites
  std::size_t iterative_limit = 10000;  // BiCGSTAB up to this many, MC beyond
  double tolerance = 1e-12;
  std::int64_t mc_walkers = 100000;
  std::uint64_t mc_seed = 0;
};

// Row of the coarse-grained walk at a strong anchor x.
struct HatChain {
  std::int64_t anchor = -1;
  double pi = 0;                                     // pi(x)
  std::vector<std::pair<std::int64_t, double>> row;  // (strong site, P-hat(x, .)), sorted
  double expected_hiding_time = 1;                   // E_x T_1
  std::size_t g_size = 1;                            // |G_x|
  std::size_t weak_size = 0;                         // |G'_x|
  int max_weak_diameter = 0;
  std::string solver = "none";  // none | dense | iterative | mc
  bool approximate = false;     // MC estimate of the row
  double residual = 0;

  double prob(std::int64_t y) const;
  double omega_hat(std::int64_t y) const { return pi * prob(y); }
  double row_sum() const;
  double entropy() const;
  // (4d / alpha) |G_x|
  double hiding_bound(int dim, double alpha) const;
};

// Exact (or flagged MC) coarse-grained transition row at x. `strong` is the
// labeling at threshold alpha. Throws NotStrongError, StrandedComponentError.
HatChain hat_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong, std::int64_t x,
                   const SolverOptions& opt = {});

// All rows of the coarse-grained chain on the strong component.
struct HatMatrix {
  std::vector<std::int64_t> states;  // sorted strong sites
  std::vector<HatChain> rows;        // aligned with states
  std::unordered_map<std::int64_t, std::size_t> index;

  const HatChain& at(std::int64_t site) const { return rows[index.at(site)]; }
  // Largest |omega-hat(x,y) - omega-hat(y,x)| and |row sum - 1|.
  double max_symmetry_residual() const;
  double max_row_sum_error() const;
};

HatMatrix hat_matrix(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                     const SolverOptions& opt = {}, int threads = 0);

// P-hat^k(x, x) for k = 0..l_max by exact sparse vector-matrix products.
std::vector<double> hat_power_returns(const HatMatrix& hat, std::int64_t x, int l_max);

// Joint frequency of {X-hat_l = x, T_1 + ... + T_l >= n} for every (l, n) in
// the grid, from walkers simulating X itself. Entry [i][j] is for ells[i], ns[j].
struct CoarseGrid {
  std::vector<int> ells;
  std::vector<int> ns;
  std::vector<std::vector<double>> estimate;
  std::vector<std::vector<double>> stderr_;
  std::int64_t walkers = 0;
};

CoarseGrid mc_coarse_returns(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                             std::int64_t x, const std::vector<int>& ells, const std::vector<int>& ns,
                             std::int64_t walkers, std::uint64_t seed, int threads = 0);

struct CoarseEstimate {
  double value = 0;
  double stderr_ = 0;
};

CoarseEstimate mc_coarse_return(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                                 std::int64_t x, int ell, int n, std::int64_t walkers, std::uint64_t seed,
                                 int threads = 0);

struct CensusRow {
  std::int64_t site = -1;
  std::size_t g_size = 0;
  double expected_hiding_time = 0;
  double bound = 0;
  double row_entropy = 0;
  bool approximate = false;
};

struct Census {
  std::vector<CensusRow> rows;
  double mean_g_size = 0;
  double stderr_g_size = 0;
  double max_ratio = 0;  // max E T_1 / bound
  bool bound_holds = true;
};

// Exact E T_1 at each sampled strong site with the pointwise hiding-time
// bound, and the sample mean of |G_x|.
Census hiding_time_census(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                          const std::vector<std::int64_t>& sites, const SolverOptions& opt = {}, int threads = 0);

}  // namespace rcm::coarse
