#pragma once

#include "rcm/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace rcm::env {

// One atom of a discrete distribution on [0, 1].
struct Atom {
  double value = 0;
  double prob = 0;
};

struct Homogeneous {
  double value = 1.0;
};

// omega_b in {0, 1}, P(omega_b = 1) = p.
struct BernoulliPerc {
  double p = 0.5;
};

// P(omega_b = 1) = p1, P(omega_b = 2^-N) = c N^-(1+eps) for N >= 1. Levels
// beyond max_level are folded into 2^-max_level.
struct DyadicPolyLog {
  double p1 = 0.7;
  double eps = 0.5;
  int max_level = 63;
};

// Scale table (n_k, q_{n_k}); P(omega_b = 1) = 1 - 1/q_{n_1} and
// P(omega_b = 1/n_k) = 1/q_{n_k} - 1/q_{n_{k+1}}, the last level taking 1/q_{n_K}.
struct ScaleLevel {
  double n = 2;
  double q = 2;
};

struct SparseScales {
  std::vector<ScaleLevel> levels;
};

// omega_b = 1 with probability p, else 1/n.
struct TwoValue {
  double p = 0.7;
  double n = 10;
};

// Site variables omega(x) drawn from `site_marginal`; omega_xy = min(omega(x), omega(y)).
struct WedgeMin {
  std::vector<Atom> site_marginal;
};

struct CustomTable {
  std::vector<Atom> atoms;
};

using ConductanceLaw =
    std::variant<Homogeneous, BernoulliPerc, DyadicPolyLog, SparseScales, TwoValue, WedgeMin, CustomTable>;

// Configured bond-percolation thresholds (used for warnings only).
double percolation_threshold(int dim);

// Throws std::invalid_argument for malformed laws; returns non-fatal warnings
// (e.g. a percolation parameter at or below p_c(d)).
std::vector<std::string> validate(const ConductanceLaw& law, int dim);

// Marginal distribution of a single bond's conductance.
std::vector<Atom> bond_marginal(const ConductanceLaw& law);

// Atoms that are sampled directly: bond atoms, or site atoms for WedgeMin.
std::vector<Atom> sampled_atoms(const ConductanceLaw& law);

// q_n = ((1/2) log(lambda_n) / log(2d))^(1/4).
double scale_from_lambda(double lambda, int dim);

// Normalizing constant c of DyadicPolyLog.
double dyadic_normalizer(double p1, double eps);

std::string law_id(const ConductanceLaw& law);
nlohmann::json law_to_json(const ConductanceLaw& law);
ConductanceLaw law_from_json(const nlohmann::json& j);

struct Planting {
  Point anchor{};
  int axis = 0;
  double weak = 0;
};

// Realization of bond conductances on the box [-L, L]^d.
//
// Values are stored as one-byte codes into a palette (code 0 is always the
// value 0). A field whose bonds all share one value keeps no per-edge codes.
class ConductanceField {
 public:
  ConductanceField() = default;

  // Builds a field with every bond equal to `value`.
  static ConductanceField uniform(const Lattice& lattice, double value);

  const Lattice& lattice() const { return lattice_; }
  int dim() const { return lattice_.dim(); }
  int radius() const { return lattice_.radius(); }

  // Conductance of bond (site, site + e_axis); 0 when that bond leaves the box.
  double omega_up(std::int64_t site, int axis) const {
    if (lattice_.coord(site, axis) >= lattice_.radius()) return 0.0;
    return palette_[code_up(site, axis)];
  }
  // Conductance of bond (site, site + dir e_axis).
  double omega(std::int64_t site, int axis, int dir) const {
    if (dir > 0) return omega_up(site, axis);
    if (lattice_.coord(site, axis) <= -lattice_.radius()) return 0.0;
    return palette_[code_up(site - lattice_.stride(axis), axis)];
  }
  // Conductance between two lattice points; 0 unless they are nearest neighbors in the box.
  double omega(const Point& x, const Point& y) const;
  double pi(std::int64_t site) const;

  std::uint8_t code_up(std::int64_t site, int axis) const {
    return codes_.empty() ? uniform_code_ : codes_[static_cast<std::size_t>(site * lattice_.dim() + axis)];
  }
  const std::vector<double>& palette() const { return palette_; }
  bool is_uniform() const { return codes_.empty(); }

  // Overwrites one bond.
  void set_omega(std::int64_t site, int axis, int dir, double value);

  const ConductanceLaw& law() const { return law_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Planting>& plantings() const { return plantings_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Hash of the realized conductances (palette values and per-edge codes).
  std::uint64_t content_hash() const;

  bool same_values(const ConductanceField& other) const;

 private:
  friend ConductanceField sample_field(int, int, const ConductanceLaw&, std::uint64_t, int);
  friend ConductanceField plant_trap(const ConductanceField&, const Point&, double, int);
  friend ConductanceField read_field(std::istream&);

  std::uint8_t code_for(double value);
  void materialize();

  Lattice lattice_;
  std::vector<double> palette_{0.0};
  std::vector<std::uint8_t> codes_;
  std::uint8_t uniform_code_ = 0;
  ConductanceLaw law_ = Homogeneous{};
  std::uint64_t seed_ = 0;
  std::vector<Planting> plantings_;
  std::vector<std::string> warnings_;
};

// Samples every bond i.i.d. from `law` with a counter-based generator keyed on
// (seed, canonical edge id). WedgeMin draws site variables keyed on
// (seed, site index) and takes bond minima. Output is bit-identical for any
// thread count.
ConductanceField sample_field(int dim, int radius, const ConductanceLaw& law, std::uint64_t seed,
                              int threads = 0);

struct LocalStep {
  std::int64_t site = -1;
  struct Move {
    std::int64_t to = -1;
    double omega = 0;
  };
  std::vector<Move> moves;  // neighbors with positive conductance
  double pi = 0;

  double probability(std::size_t i) const { return moves[i].omega / pi; }
};

// Neighbors of x with positive conductance and pi(x). Throws IsolatedSiteError
// when pi(x) = 0.
LocalStep step_distribution(const ConductanceField& field, const Point& x);
LocalStep step_distribution(const ConductanceField& field, std::int64_t site);

// Plants a trap at anchor x oriented along `axis`: y = x + e_axis,
// z = x + 2 e_axis, omega_yz = 1 and every other bond at y or z set to `weak`.
ConductanceField plant_trap(const ConductanceField& field, const Point& x, double weak, int axis = 0);

// Binary container: "RCMF", version, d, L, seed, JSON descriptor (law and
// plantings), then one little-endian float64 per bond in canonical edge order.
void write_field(std::ostream& out, const ConductanceField& field);
ConductanceField read_field(std::istream& in);
void save_field(const std::string& path, const ConductanceField& field);
ConductanceField load_field(const std::string& path);

}  // namespace rcm::env
