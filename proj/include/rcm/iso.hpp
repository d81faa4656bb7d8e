#pragma once

#include "rcm/cluster.hpp"
#include "rcm/coarse.hpp"
#include "rcm/env.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace rcm::iso {

using Row = std::vector<std::pair<std::int64_t, double>>;

// A reversible chain seen through its rows and stationary weights. States are
// labelled by int64 ids (lattice site indices for lattice chains). `states`
// lists the state space when it is small enough to enumerate. Chains built
// from a field or labeling keep references to them.
struct ChainView {
  std::string kind;
  std::vector<std::int64_t> states;
  std::function<bool(std::int64_t)> contains;
  std::function<double(std::int64_t)> weight;
  std::function<void(std::int64_t, Row&)> row;

  // Lattice context for edge-boundary counts; null for abstract chains.
  const env::ConductanceField* field = nullptr;
  cluster::Threshold open = cluster::Threshold::positive();
};

// Plain walk P on the positive-conductance component `component_id`.
ChainView plain_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& positive,
                      std::int64_t component_id);
// Walk on C_{inf,alpha} using only strong bonds, weights pi-tilde.
ChainView tilde_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong);
// Two-step coarse-grained chain P-hat^2 with weights pi.
ChainView hat2_chain(const env::ConductanceField& field, const cluster::ClusterLabeling& strong,
                     const coarse::HatMatrix& hat);
// Finite chain from a dense row-stochastic matrix and its weights.
ChainView matrix_chain(const std::vector<std::vector<double>>& P, const std::vector<double>& weights);
// Two-step version of a chain.
ChainView square(const ChainView& chain);
// hold * I + (1 - hold) * P.
ChainView lazy(const ChainView& chain, double hold);

// Max |sum_x pi(x) P(x,y) - pi(y)| over the listed states.
double stationarity_residual(const ChainView& chain);

struct CutRecord {
  std::size_t size = 0;
  double pi = 0;       // pi(L)
  double q_in = 0;     // Q(L, L)
  double q_out = 0;    // Q(L, L^c)
  double phi = 0;      // Q(L, L^c) / pi(L)
  // Lattice chains only (-1 otherwise):
  std::int64_t open_boundary = -1;   // |d^omega L|: open bonds leaving L
  std::int64_t edge_boundary = -1;   // |dL|: lattice bonds leaving L
  std::int64_t inner_boundary = -1;  // |d* L|: sites of L with a lattice neighbor outside L
};

CutRecord cut_stats(const ChainView& chain, const std::vector<std::int64_t>& set);

struct ProfileEstimate {
  std::vector<double> r;    // ascending breakpoints
  std::vector<double> phi;  // best Phi_S with pi(S) <= r[i]; non-increasing
  std::string mode;         // exhaustive | heuristic
  bool exact = false;
  double r_max = 0;
  std::int64_t sets_examined = 0;

  // Phi(u) as a step function; +inf below the first breakpoint.
  double operator()(double u) const;
};

// Calls visit(set) for every connected vertex set of size <= max_size in the
// graph given by `adjacency` (indices 0..n-1), each set exactly once.
void enumerate_connected_sets(const std::vector<std::vector<int>>& adjacency, int max_size,
                              const std::function<void(const std::vector<int>&)>& visit);

// Exact profile over connected state sets (<= 20 states).
ProfileEstimate profile_exhaustive(const ChainView& chain, double r_max);

struct HeuristicOptions {
  int starts = 200;
  std::uint64_t seed = 1;
};
// Upper bound on Phi(r) from randomly grown connected sets with local swaps.
ProfileEstimate profile_heuristic(const ChainView& chain, double r_max, const HeuristicOptions& opt = {});

// n = 1 + ((1-gamma)^2/gamma^2) * int_{4 min(pi_x,pi_y)}^{4/eps} 4 / (u Phi(u)^2) du,
// rounded up. Step profiles are integrated exactly; +inf when Phi vanishes on
// the range.
double morris_peres_n(const ProfileEstimate& profile, double gamma, double eps, double pi_x, double pi_y);
double morris_peres_n(const std::function<double(double)>& phi, double gamma, double eps, double pi_x, double pi_y);

struct IsoResult {
  double min_ratio = 0;
  std::vector<std::int64_t> witness;
  std::int64_t candidates = 0;
  std::size_t size_floor = 0;
  std::size_t size_cap = 0;
};

// Grown connected subsets of the largest open component inside [-R,R]^d with
// |L| >= (c1 log R)^(d/(d-1)); reports min |d^omega L| / |L|^((d-1)/d).
IsoResult check_isoperimetry(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling, int R,
                             double c1, int samples, std::uint64_t seed, int threads = 0);

// Random connected subset of the largest open component inside [-R,R]^d
// with `size` sites, refined by 2|L| local swaps that do not enlarge the open
// edge boundary.
std::vector<std::int64_t> grow_set(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling,
                                   int R, std::size_t size, std::uint64_t seed, std::uint64_t index);

struct GnEstimate {
  double value = 0;
  double stderr_ = 0;
  std::int64_t part1_failures = 0;
  std::int64_t part2_failures = 0;
};

// Single configuration of the renormalization event G_N(0) on [-N, 2N]^d.
bool gn_event(double p, int N, int dim, std::uint64_t config_seed, bool* part1 = nullptr, bool* part2 = nullptr);
GnEstimate gn_probability(double p, int N, int dim, std::int64_t ensemble, std::uint64_t seed, int threads = 0);

}  // namespace rcm::iso
