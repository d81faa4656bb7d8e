#pragma once

#include "rcm/cluster.hpp"
#include "rcm/env.hpp"
#include "rcm/kernel.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace rcm::traps {

// Triple x, y = x + e_axis, z = x + 2 e_axis with omega_yz = 1 and every other
// bond at y or z at most weak_scale < 1.
struct TrapRecord {
  Point x{}, y{}, z{};
  std::int64_t anchor = -1, y_site = -1, z_site = -1;
  int axis = 0;
  double weak_scale = 0;   // largest conductance among the other bonds at y, z
  bool in_cluster = false;  // x in the largest component of the labeling
  int chem_dist = -1;       // hop distance from the origin's cluster point; -1 if not computed
};

struct DetectOptions {
  // Side of the box centred at x whose boundary x must reach through bonds
  // of conductance one (0 disables the check).
  int box_side = 0;
  // Only anchors with Euclidean norm <= max_norm (negative: no limit).
  double max_norm = -1;
  bool distances = false;
  int threads = 0;
};

// Every trap with weak scale <= weak_max whose anchor lies in the largest
// component of `labeling`, ordered by (anchor, axis).
std::vector<TrapRecord> detect_traps(const env::ConductanceField& field, const cluster::ClusterLabeling& labeling,
                                     double weak_max, const DetectOptions& opt = {});

// (log ell)^2 rounded up to the nearest odd integer.
int box_side_for_scale(double ell);

// Sum over traps with |x| <= sqrt(n) of |x|^-(2d-4); weight 1 when |x| < 1.
double trap_sum(const std::vector<TrapRecord>& traps, double n, int dim);

// Monte Carlo estimate of P(S_target <= n) for the walk started at source,
// S_target the first visit time (S = 0 when source == target). Throws
// DisconnectedError when the two sites are not joined by positive bonds.
kernel::Estimate hitting_prob(const env::ConductanceField& field, std::int64_t source, std::int64_t target, int n,
                              std::int64_t walkers, std::uint64_t seed, int threads = 0);

struct TrapBound {
  double value = 0;                 // lower bound on P^{2n}(source, source)
  std::vector<std::int64_t> path;   // source ... anchor
  double path_probability = 0;      // forward times backward along the path
  double entry = 0, exit = 0;       // P(x,y), P(y,x)
  double stay = 0;                  // P(y,z) P(z,y)
  int idle_rounds = 0;              // number of y -> z -> y rounds
};

// Probability of one explicit walk: follow the path to the anchor, cross into
// the trap, shuttle along the strong bond for the remaining time, leave and
// retrace the path. The path is found by BFS over bonds of conductance one
// unless supplied. Returns value 0 when 2n is too short for the round trip.
// A source equal to y uses the shuttle alone.
TrapBound trap_lower_bound(const env::ConductanceField& field, const TrapRecord& trap, std::int64_t source, int n,
                           const std::optional<std::vector<std::int64_t>>& path = std::nullopt);

// Ratios of n-step path probabilities of the walk conditioned to avoid weak
// bonds and the simple random walk on the strong cluster, over sampled paths
// of the latter. The conditioning constant comes from the killed dynamics.
struct PathRatio {
  int n = 0;
  double survival = 0;  // P(no weak bond used in n steps)
  double min_ratio = 0;
  double max_ratio = 0;
  std::int64_t paths = 0;
  // max(max_ratio, 1 / min_ratio)
  double k() const { return std::max(max_ratio, 1.0 / min_ratio); }
};

PathRatio conditioned_path_ratio(const env::ConductanceField& field, std::int64_t source, double strong_alpha, int n,
                                 std::int64_t paths, std::uint64_t seed, int threads = 0);

}  // namespace rcm::traps
