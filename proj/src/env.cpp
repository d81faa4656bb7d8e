#include "rcm/env.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rcm::env {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_table(const std::vector<Atom>& atoms, bool allow_zero, const char* what) {
  if (atoms.empty()) throw std::invalid_argument(std::string(what) + ": empty table");
  double total = 0;
  for (const auto& a : atoms) {
    if (!(a.prob >= 0)) throw std::invalid_argument(std::string(what) + ": negative probability");
    if (!(a.value <= 1.0) || !(allow_zero ? a.value >= 0 : a.value > 0)) {
      throw std::invalid_argument(std::string(what) + ": value outside " + (allow_zero ? "[0,1]" : "(0,1]"));
    }
    total += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": probabilities sum to " + std::to_string(total));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void supercritical_warning(std::vector<std::string>& out, const char* name, double p, int dim) {
  const double pc = percolation_threshold(dim);
  if (p <= pc) {
    out.push_back(std::string(name) + "=" + fmt(p) + " is not above p_c(" + std::to_string(dim) + ")=" + fmt(pc));
  }
}

}  // namespace

double percolation_threshold(int dim) {
  switch (dim) {
    case 1: return 1.0;
    case 2: return 0.5;
    case 3: return 0.2488126;
    case 4: return 0.1601314;
    case 5: return 0.1181718;
    case 6: return 0.0942019;
    default: throw std::invalid_argument("no percolation threshold configured for d=" + std::to_string(dim));
  }
}

double dyadic_normalizer(double p1, double eps) {
  return (1.0 - p1) / std::riemann_zeta(1.0 + eps);
}

double scale_from_lambda(double lambda, int dim) {
  if (!(lambda > 1)) throw std::invalid_argument("lambda must exceed 1");
  return std::pow(0.5 * std::log(lambda) / std::log(2.0 * dim), 0.25);
}

std::vector<Atom> sampled_atoms(const ConductanceLaw& law) {
  return std::visit(
      overloaded{
          [](const Homogeneous& h) { return std::vector<Atom>{{h.value, 1.0}}; },
          [](const BernoulliPerc& b) { return std::vector<Atom>{{1.0, b.p}, {0.0, 1.0 - b.p}}; },
          [](const DyadicPolyLog& dy) {
            std::vector<Atom> atoms{{1.0, dy.p1}};
            const double c = dyadic_normalizer(dy.p1, dy.eps);
            double used = dy.p1;
            for (int k = 1; k < dy.max_level; ++k) {
              const double pk = c * std::pow(static_cast<double>(k), -(1.0 + dy.eps));
              atoms.push_back({std::ldexp(1.0, -k), pk});
              used += pk;
            }
            atoms.push_back({std::ldexp(1.0, -dy.max_level), std::max(0.0, 1.0 - used)});
            return atoms;
          },
          [](const SparseScales& s) {
            std::vector<Atom> atoms{{1.0, 1.0 - 1.0 / s.levels.front().q}};
            for (std::size_t k = 0; k < s.levels.size(); ++k) {
              const double next = k + 1 < s.levels.size() ? 1.0 / s.levels[k + 1].q : 0.0;
              atoms.push_back({1.0 / s.levels[k].n, 1.0 / s.levels[k].q - next});
            }
            return atoms;
          },
          [](const TwoValue& t) { return std::vector<Atom>{{1.0, t.p}, {1.0 / t.n, 1.0 - t.p}}; },
          [](const WedgeMin& w) { return w.site_marginal; },
          [](const CustomTable& c) { return c.atoms; },
      },
      law);
}

std::vector<Atom> bond_marginal(const ConductanceLaw& law) {
  if (const auto* w = std::get_if<WedgeMin>(&law)) {
    // P(min = v) = P(X >= v)^2 - P(X > v)^2
    std::vector<Atom> sorted = w->site_marginal;
    std::sort(sorted.begin(), sorted.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
    std::vector<Atom> out;
    double above = 1.0;
    for (const auto& a : sorted) {
      const double strictly_above = above - a.prob;
      out.push_back({a.value, above * above - strictly_above * strictly_above});
      above = strictly_above;
    }
    return out;
  }
  return sampled_atoms(law);
}

std::vector<std::string> validate(const ConductanceLaw& law, int dim) {
  std::vector<std::string> warnings;
  std::visit(overloaded{
                 [](const Homogeneous& h) {
                   if (!(h.value > 0 && h.value <= 1)) throw std::invalid_argument("Homogeneous: value must be in (0,1]");
                 },
                 [&](const BernoulliPerc& b) {
                   if (!(b.p >= 0 && b.p <= 1)) throw std::invalid_argument("BernoulliPerc: p must be in [0,1]");
                   supercritical_warning(warnings, "p", b.p, dim);
                 },
                 [&](const DyadicPolyLog& dy) {
                   if (!(dy.p1 > 0 && dy.p1 <= 1)) throw std::invalid_argument("DyadicPolyLog: p1 must be in (0,1]");
                   if (!(dy.eps > 0)) throw std::invalid_argument("DyadicPolyLog: eps must be positive");
                   if (dy.max_level < 1 || dy.max_level > 200) {
                     throw std::invalid_argument("DyadicPolyLog: max_level must be in [1,200]");
                   }
                   supercritical_warning(warnings, "p1", dy.p1, dim);
                 },
                 [&](const SparseScales& s) {
                   if (s.levels.empty()) throw std::invalid_argument("SparseScales: empty scale table");
                   for (std::size_t k = 0; k < s.levels.size(); ++k) {
                     if (!(s.levels[k].n >= 1)) throw std::invalid_argument("SparseScales: n_k must be >= 1");
                     if (!(s.levels[k].q > 1)) throw std::invalid_argument("SparseScales: q_k must exceed 1");
                     if (k > 0 && !(s.levels[k].q > 2 * s.levels[k - 1].q)) {
                       throw std::invalid_argument("SparseScales: need q_{k+1} > 2 q_k at level " + std::to_string(k));
                     }
                   }
                   supercritical_warning(warnings, "1-1/q_1", 1.0 - 1.0 / s.levels.front().q, dim);
                 },
                 [&](const TwoValue& t) {
                   if (!(t.p >= 0 && t.p <= 1)) throw std::invalid_argument("TwoValue: p must be in [0,1]");
                   if (!(t.n >= 1)) throw std::invalid_argument("TwoValue: n must be >= 1");
                   supercritical_warning(warnings, "p", t.p, dim);
                 },
                 [](const WedgeMin& w) { check_table(w.site_marginal, false, "WedgeMin"); },
                 [](const CustomTable& c) { check_table(c.atoms, true, "CustomTable"); },
             },
             law);
  const auto atoms = sampled_atoms(law);
  check_table(atoms, true, "law");
  std::vector<double> values;
  for (const auto& a : atoms) values.push_back(a.value);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() > 255) throw std::invalid_argument("law has more than 255 distinct values");
  return warnings;
}

std::string law_id(const ConductanceLaw& law) {
  return std::visit(
      overloaded{
          [](const Homogeneous& h) { return "homogeneous(" + fmt(h.value) + ")"; },
          [](const BernoulliPerc& b) { return "bernoulli(" + fmt(b.p) + ")"; },
          [](const DyadicPolyLog& d) { return "dyadic(" + fmt(d.p1) + "," + fmt(d.eps) + ")"; },
          [](const SparseScales& s) {
            std::string out = "sparse(";
            for (std::size_t k = 0; k < s.levels.size(); ++k) {
              out += (k ? ";" : "") + fmt(s.levels[k].n) + ":" + fmt(s.levels[k].q);
            }
            return out + ")";
          },
          [](const TwoValue& t) { return "two_value(" + fmt(t.p) + "," + fmt(t.n) + ")"; },
          [](const WedgeMin& w) { return "wedge_min[" + std::to_string(w.site_marginal.size()) + "]"; },
          [](const CustomTable& c) { return "custom[" + std::to_string(c.atoms.size()) + "]"; },
      },
      law);
}

namespace {

nlohmann::json atoms_json(const std::vector<Atom>& atoms) {
  auto arr = nlohmann::json::array();
  for (const auto& a : atoms) arr.push_back({{"value", a.value}, {"prob", a.prob}});
  return arr;
}

std::vector<Atom> atoms_from(const nlohmann::json& arr) {
  std::vector<Atom> out;
  for (const auto& a : arr) out.push_back({a.at("value").get<double>(), a.at("prob").get<double>()});
  return out;
}

}  // namespace

nlohmann::json law_to_json(const ConductanceLaw& law) {
  return std::visit(
      overloaded{
          [](const Homogeneous& h) { return nlohmann::json{{"kind", "homogeneous"}, {"value", h.value}}; },
          [](const BernoulliPerc& b) { return nlohmann::json{{"kind", "bernoulli"}, {"p", b.p}}; },
          [](const DyadicPolyLog& d) {
            return nlohmann::json{{"kind", "dyadic"}, {"p1", d.p1}, {"eps", d.eps}, {"max_level", d.max_level}};
          },
          [](const SparseScales& s) {
            auto arr = nlohmann::json::array();
            for (const auto& l : s.levels) arr.push_back({{"n", l.n}, {"q", l.q}});
            return nlohmann::json{{"kind", "sparse_scales"}, {"levels", arr}};
          },
          [](const TwoValue& t) { return nlohmann::json{{"kind", "two_value"}, {"p", t.p}, {"n", t.n}}; },
          [](const WedgeMin& w) { return nlohmann::json{{"kind", "wedge_min"}, {"site_marginal", atoms_json(w.site_marginal)}}; },
          [](const CustomTable& c) { return nlohmann::json{{"kind", "custom"}, {"atoms", atoms_json(c.atoms)}}; },
      },
      law);
}

ConductanceLaw law_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "homogeneous") return Homogeneous{j.value("value", 1.0)};
  if (kind == "bernoulli") return BernoulliPerc{j.at("p").get<double>()};
  if (kind == "dyadic") return DyadicPolyLog{j.at("p1").get<double>(), j.at("eps").get<double>(), j.value("max_level", 63)};
  if (kind == "sparse_scales") {
    SparseScales s;
    for (const auto& l : j.at("levels")) s.levels.push_back({l.at("n").get<double>(), l.at("q").get<double>()});
    return s;
  }
  if (kind == "two_value") return TwoValue{j.at("p").get<double>(), j.at("n").get<double>()};
  if (kind == "wedge_min") return WedgeMin{atoms_from(j.at("site_marginal"))};
  if (kind == "custom") return CustomTable{atoms_from(j.at("atoms"))};
  throw std::invalid_argument("unknown law kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

ConductanceField ConductanceField::uniform(const Lattice& lattice, double value) {
  ConductanceField f;
  f.lattice_ = lattice;
  f.law_ = Homogeneous{value};
  f.uniform_code_ = f.code_for(value);
  return f;
}

std::uint8_t ConductanceField::code_for(double value) {
  if (!(value >= 0 && value <= 1)) throw std::invalid_argument("conductance " + fmt(value) + " outside [0,1]");
  for (std::size_t i = 0; i < palette_.size(); ++i) {
    if (palette_[i] == value) return static_cast<std::uint8_t>(i);
  }
  if (palette_.size() >= 256) throw std::invalid_argument("field palette exceeds 255 distinct conductances");
  palette_.push_back(value);
  return static_cast<std::uint8_t>(palette_.size() - 1);
}

void ConductanceField::materialize() {
  if (!codes_.empty()) return;
  codes_.assign(static_cast<std::size_t>(lattice_.edge_slots()), uniform_code_);
}

double ConductanceField::omega(const Point& x, const Point& y) const {
  if (!lattice_.contains(x) || !lattice_.contains(y)) return 0.0;
  int axis = -1;
  int diff = 0;
  for (int a = 0; a < lattice_.dim(); ++a) {
    if (x[a] != y[a]) {
      if (axis >= 0) return 0.0;
      axis = a;
      diff = y[a] - x[a];
    }
  }
  if (axis < 0 || std::abs(diff) != 1) return 0.0;
  return omega(lattice_.index(x), axis, diff);
}

double ConductanceField::pi(std::int64_t site) const {
  double s = 0;
  for (int a = 0; a < lattice_.dim(); ++a) s += omega(site, a, +1) + omega(site, a, -1);
  return s;
}

void ConductanceField::set_omega(std::int64_t site, int axis, int dir, double value) {
  const std::int64_t other = lattice_.neighbor(site, axis, dir);
  if (other < 0) throw std::invalid_argument("bond leaves the box");
  const std::uint8_t code = code_for(value);
  materialize();
  const std::int64_t base = dir > 0 ? site : other;
  codes_[static_cast<std::size_t>(base * lattice_.dim() + axis)] = code;
}

std::uint64_t ConductanceField::content_hash() const {
  // FNV-1a over (edge id, value bits) of every in-box bond.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint64_t>(lattice_.dim()));
  feed(static_cast<std::uint64_t>(lattice_.radius()));
  const int d = lattice_.dim();
  for (std::int64_t s = 0; s < lattice_.num_sites(); ++s) {
    for (int a = 0; a < d; ++a) {
      if (lattice_.coord(s, a) >= lattice_.radius()) continue;
      std::uint64_t bits;
      const double v = palette_[code_up(s, a)];
      std::memcpy(&bits, &v, sizeof bits);
      feed(bits);
    }
  }
  return h;
}

bool ConductanceField::same_values(const ConductanceField& other) const {
  if (!(lattice_ == other.lattice_)) return false;
  const int d = lattice_.dim();
  for (std::int64_t s = 0; s < lattice_.num_sites(); ++s) {
    for (int a = 0; a < d; ++a) {
      if (omega_up(s, a) != other.omega_up(s, a)) return false;
    }
  }
  return true;
}

namespace {

struct Sampler {
  std::vector<double> cumulative;
  std::vector<std::uint8_t> codes;

  std::uint8_t draw(double u) const {
    for (std::size_t k = 0; k + 1 < cumulative.size(); ++k) {
      if (u < cumulative[k]) return codes[k];
    }
    return codes.back();
  }
};

}  // namespace

ConductanceField sample_field(int dim, int radius, const ConductanceLaw& law, std::uint64_t seed, int threads) {
  if (dim < 2) throw std::invalid_argument("sample_field: d must be >= 2");
  if (radius < 1) throw std::invalid_argument("sample_field: L must be >= 1");
  auto warnings = validate(law, dim);

  ConductanceField f;
  f.lattice_ = Lattice(dim, radius);
  f.law_ = law;
  f.seed_ = seed;
  f.warnings_ = std::move(warnings);

  if (const auto* h = std::get_if<Homogeneous>(&law)) {
    f.uniform_code_ = f.code_for(h->value);
    return f;
  }

  const auto atoms = sampled_atoms(law);
  Sampler sampler;
  double cum = 0;
  for (const auto& a : atoms) {
    if (a.prob <= 0) continue;
    cum += a.prob;
    sampler.cumulative.push_back(cum);
    sampler.codes.push_back(f.code_for(a.value));
  }

  const Lattice& lat = f.lattice_;
  f.codes_.assign(static_cast<std::size_t>(lat.edge_slots()), 0);
  std::uint8_t* codes = f.codes_.data();
  const std::int64_t sites = lat.num_sites();
  constexpr std::int64_t kChunk = 1 << 16;

  if (std::holds_alternative<WedgeMin>(law)) {
    std::vector<std::uint8_t> site_code(static_cast<std::size_t>(sites));
    parallel::for_chunks(
        0, sites, kChunk,
        [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
          for (std::int64_t s = lo; s < hi; ++s) {
            site_code[s] = sampler.draw(rng::uniform(seed, rng::kSite, static_cast<std::uint64_t>(s)));
          }
        },
        threads);
    const auto& pal = f.palette_;
    parallel::for_chunks(
        0, sites, kChunk,
        [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
          for (std::int64_t s = lo; s < hi; ++s) {
            for (int a = 0; a < dim; ++a) {
              if (lat.coord(s, a) >= radius) continue;
              const std::uint8_t cx = site_code[s];
              const std::uint8_t cy = site_code[s + lat.stride(a)];
              codes[s * dim + a] = pal[cx] <= pal[cy] ? cx : cy;
            }
          }
        },
        threads);
    return f;
  }

  parallel::for_chunks(
      0, sites, kChunk,
      [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t s = lo; s < hi; ++s) {
          for (int a = 0; a < dim; ++a) {
            if (lat.coord(s, a) >= radius) continue;
            const std::uint64_t edge = static_cast<std::uint64_t>(s * dim + a);
            codes[s * dim + a] = sampler.draw(rng::uniform(seed, rng::kEdge, edge));
          }
        }
      },
      threads);
  return f;
}

LocalStep step_distribution(const ConductanceField& field, std::int64_t site) {
  const Lattice& lat = field.lattice();
  if (site < 0 || site >= lat.num_sites()) throw std::invalid_argument("site outside the box");
  LocalStep out;
  out.site = site;
  for (int a = 0; a < lat.dim(); ++a) {
    for (int dir : {+1, -1}) {
      const double w = field.omega(site, a, dir);
      if (w > 0) {
        out.moves.push_back({lat.neighbor(site, a, dir), w});
        out.pi += w;
      }
    }
  }
  if (out.pi <= 0) throw IsolatedSiteError("isolated site " + to_string(lat.point(site), lat.dim()));
  return out;
}

LocalStep step_distribution(const ConductanceField& field, const Point& x) {
  if (!field.lattice().contains(x)) throw std::invalid_argument("site outside the box");
  return step_distribution(field, field.lattice().index(x));
}

ConductanceField plant_trap(const ConductanceField& field, const Point& x, double weak, int axis) {
  const Lattice& lat = field.lattice();
  if (!(weak > 0 && weak < 1)) throw std::invalid_argument("plant_trap: weak must be in (0,1)");
  if (axis < 0 || axis >= lat.dim()) throw std::invalid_argument("plant_trap: bad axis");
  const Point y = add(x, unit(axis));
  const Point z = add(x, unit(axis, 2));
  for (const Point& p : {x, y, z}) {
    if (!lat.contains(p) || lat.depth(p) < 1) {
      throw BoxTooSmallError("plant_trap: trap site " + to_string(p, lat.dim()) + " too close to the boundary");
    }
  }
  ConductanceField out = field;
  const std::int64_t ys = lat.index(y);
  const std::int64_t zs = lat.index(z);
  for (std::int64_t s : {ys, zs}) {
    for (int a = 0; a < lat.dim(); ++a) {
      for (int dir : {+1, -1}) out.set_omega(s, a, dir, weak);
    }
  }
  out.set_omega(ys, axis, +1, 1.0);
  out.plantings_.push_back({x, axis, weak});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'C', 'M', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <class T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof buf);
  if (!in) throw Error("RCMF: truncated input");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_field(std::ostream& out, const ConductanceField& field) {
  const Lattice& lat = field.lattice();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(lat.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(lat.radius()));
  put<std::uint64_t>(out, field.seed());

  nlohmann::json meta{{"law", law_to_json(field.law())}, {"law_id", law_id(field.law())}};
  auto plantings = nlohmann::json::array();
  for (const auto& p : field.plantings()) {
    plantings.push_back({{"anchor", std::vector<int>(p.anchor.begin(), p.anchor.begin() + lat.dim())},
                         {"axis", p.axis},
                         {"weak", p.weak}});
  }
  meta["plantings"] = plantings;
  const std::string text = meta.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    for (int a = 0; a < lat.dim(); ++a) {
      if (lat.coord(s, a) >= lat.radius()) continue;
      std::uint64_t bits;
      const double v = field.omega_up(s, a);
      std::memcpy(&bits, &v, sizeof bits);
      put<std::uint64_t>(out, bits);
    }
  }
  if (!out) throw Error("RCMF: write failed");
}

ConductanceField read_field(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error("RCMF: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw Error("RCMF: unsupported version " + std::to_string(version));
  const int dim = static_cast<int>(get<std::uint32_t>(in));
  const int radius = static_cast<int>(get<std::uint32_t>(in));
  const auto seed = get<std::uint64_t>(in);
  const auto len = get<std::uint64_t>(in);
  if (len > (1u << 26)) throw Error("RCMF: descriptor too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("RCMF: truncated descriptor");
  const auto meta = nlohmann::json::parse(text);

  ConductanceField f;
  f.lattice_ = Lattice(dim, radius);
  f.law_ = law_from_json(meta.at("law"));
  f.seed_ = seed;
  for (const auto& p : meta.value("plantings", nlohmann::json::array())) {
    Planting pl;
    const auto anchor = p.at("anchor").get<std::vector<int>>();
    for (std::size_t i = 0; i < anchor.size() && i < static_cast<std::size_t>(kMaxDim); ++i) pl.anchor[i] = anchor[i];
    pl.axis = p.at("axis").get<int>();
    pl.weak = p.at("weak").get<double>();
    f.plantings_.push_back(pl);
  }
  f.codes_.assign(static_cast<std::size_t>(f.lattice_.edge_slots()), 0);
  const Lattice& lat = f.lattice_;
  for (std::int64_t s = 0; s < lat.num_sites(); ++s) {
    for (int a = 0; a < dim; ++a) {
      if (lat.coord(s, a) >= radius) continue;
      const auto bits = get<std::uint64_t>(in);
      double v;
      std::memcpy(&v, &bits, sizeof v);
      f.codes_[static_cast<std::size_t>(s * dim + a)] = f.code_for(v);
    }
  }
  return f;
}

void save_field(const std::string& path, const ConductanceField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_field(out, field);
}

ConductanceField load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_field(in);
}

}  // namespace rcm::env
