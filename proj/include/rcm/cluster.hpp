#pragma once

#include "rcm/env.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

namespace rcm::cluster {

// Bond b is open when omega_b >= alpha, or omega_b > alpha when strict.
// Threshold::positive() is the alpha = 0+ convention (omega_b > 0).
struct Threshold {
  double alpha = 0;
  bool strict = true;

  static Threshold positive() { return {0.0, true}; }
  static Threshold at_least(double a) { return {a, false}; }

  bool open(double w) const { return strict ? w > alpha : w >= alpha; }
};

class ClusterLabeling {
 public:
  static constexpr std::int64_t kNone = -1;

  const Lattice& lattice() const { return lattice_; }
  Threshold threshold() const { return threshold_; }

  // Component id (the root site index), or kNone for a site with no open bond.
  std::int64_t component(std::int64_t site) const {
    const std::int32_t p = parent_[static_cast<std::size_t>(site)];
    if (p < 0) return p == -1 ? kNone : site;
    return p;
  }
  std::int64_t component_size(std::int64_t site) const;
  bool same_component(std::int64_t a, std::int64_t b) const {
    const auto ca = component(a);
    return ca != kNone && ca == component(b);
  }

  // Surrogate for the infinite cluster at this threshold.
  std::int64_t largest_id() const { return largest_id_; }
  std::int64_t largest_size() const { return largest_size_; }
  bool in_largest(std::int64_t site) const { return largest_id_ != kNone && component(site) == largest_id_; }

  // Components that contain a site on the box faces.
  bool touches_boundary(std::int64_t comp_id) const;

  // size -> number of components with that size (sizes >= 2).
  const std::map<std::int64_t, std::int64_t>& histogram() const { return histogram_; }
  std::int64_t second_largest_size() const;

  struct ComponentRow {
    std::int64_t id;
    std::int64_t size;
    bool touches_boundary;
  };
  // Every component, ordered by id.
  std::vector<ComponentRow> table() const;

 private:
  friend ClusterLabeling components(const env::ConductanceField&, Threshold);

  Lattice lattice_;
  Threshold threshold_;
  std::vector<std::int32_t> parent_;  // root: -size; others: root index
  std::int64_t largest_id_ = kNone;
  std::int64_t largest_size_ = 0;
  std::vector<std::int64_t> boundary_roots_;  // sorted
  std::map<std::int64_t, std::int64_t> histogram_;
};

// Rows (alpha, comp_id, size, touches_boundary) for every component.
void write_components_csv(std::ostream& out, const ClusterLabeling& labeling);

// Union-find labeling of the open-bond subgraph.
ClusterLabeling components(const env::ConductanceField& field, Threshold threshold);

struct WeakComponent {
  std::int64_t anchor = -1;
  std::vector<std::int64_t> sites;         // G_x, sorted; always contains the anchor
  std::vector<std::int64_t> weak_sites;    // G'_x, sorted
  std::vector<std::int64_t> strong_sites;  // strong neighbors of G'_x, sorted
  std::vector<int> diameters;              // l-infinity diameter of each weak cluster F_y
  int max_diameter() const;
  std::size_t size() const { return sites.size(); }
};

// Weak component incident to a strong site x. `strong` is the labeling at the
// strong threshold; its largest component is C_{inf,alpha}. Throws NotStrongError.
WeakComponent weak_component(const env::ConductanceField& field, const ClusterLabeling& strong, std::int64_t x);

// Hop distance between x and y along open bonds of the labeling. Throws
// DisconnectedError when they lie in different components.
int chemical_distance(const env::ConductanceField& field, const ClusterLabeling& labeling, std::int64_t x,
                      std::int64_t y);

// Largest support value alpha of the law with P(omega >= alpha) > p_c(d) and
// P(0 < omega < alpha) <= max_weak_mass.
double choose_alpha(const env::ConductanceLaw& law, int dim, double max_weak_mass = 0.5);

}  // namespace rcm::cluster
