#include "rcm/experiment.hpp"
#include "rcm/cluster.hpp"
#include "rcm/coarse.hpp"
#include "rcm/iso.hpp"
#include "rcm/kernel.hpp"
#include "rcm/rng.hpp"
#include "rcm/traps.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace rcm::experiment {

namespace {

const std::set<std::string> kKinds{"decay-fit", "coarse-check", "iso-profile", "gn-scan",
                                   "trap-census", "trap-bound", "annealed"};

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json point_json(const Point& p, int d) {
  json a = json::array();
  for (int i = 0; i < d; ++i) a.push_back(p[i]);
  return a;
}

bool exact_kind(const std::string& k) { return k == "decay-fit" || k == "trap-bound" || k == "annealed"; }

// Points of the l1 ball of radius r in Z^d.
double l1_ball(int d, int r) {
  double total = 0;
  for (int k = 0; k <= std::min(d, r); ++k) {
    double c1 = 1, c2 = 1;
    for (int i = 0; i < k; ++i) {
      c1 = c1 * (d - i) / (i + 1);
      c2 = c2 * (r - i) / (i + 1);
    }
    total += std::pow(2.0, k) * c1 * c2;
  }
  return total;
}

double kernel_bytes(int d, int n) { return l1_ball(d, n + 1) * (32.0 + 2.0 * d); }

struct LinearFit {
  double slope = 0, intercept = 0, r2 = 0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0;
  return f;
}

double resolve_alpha(const ExperimentConfig& c) {
  return std::isnan(c.alpha) ? cluster::choose_alpha(c.law, c.dim) : c.alpha;
}

// Collects outputs and invariants of one run.
class Run {
 public:
  Run(const ExperimentConfig& c, RunManifest& m) : cfg_(c), m_(m) {}

  std::string path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }
  void record(const std::string& name) {
    OutputFile f;
    f.path = name;
    f.checksum = file_checksum(path(name));
    f.bytes = fs::file_size(path(name));
    m_.outputs.push_back(f);
  }
  void check(const std::string& name, bool ok, const std::string& detail) {
    m_.invariants.push_back({name, ok, detail});
  }
  void plot(const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
    write_plot_data(path(name), x, y);
    record(name);
  }

  const ExperimentConfig& cfg_;
  RunManifest& m_;
};

std::string tag(std::size_t i) { return "m" + std::to_string(i); }

void run_decay_fit(Run& run, const std::vector<std::uint64_t>& seeds, int threads) {
  const auto& c = run.cfg_;
  int n_max = *std::max_element(c.ns.begin(), c.ns.end());
  const double cap = static_cast<double>(c.memory_cap_mb) * 1024 * 1024;
  while (n_max > 1 && kernel_bytes(c.dim, n_max) > cap) {
    n_max = n_max * 3 / 4;
    run.m_.truncated = true;
  }
  const int lo = c.fit_lo > 0 ? c.fit_lo : *std::min_element(c.ns.begin(), c.ns.end());
  const int hi = std::min(c.fit_hi > 0 ? c.fit_hi : n_max, n_max);
  json fits = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto field = env::sample_field(c.dim, c.radius, c.law, seeds[i], threads);
    const auto lab = cluster::components(field, cluster::Threshold::positive());
    const auto origin = field.lattice().origin();
    json rec{{"member", i}, {"seed", seeds[i]}};
    if (!lab.in_largest(origin)) {
      rec["skipped"] = "origin outside the largest component";
      fits.push_back(rec);
      continue;
    }
    kernel::Options opt;
    opt.threads = threads;
    const auto series = kernel::return_series(field, origin, n_max, 1, opt);
    const std::string csv = "series_" + tag(i) + ".csv";
    {
      CsvWriter w(run.path(csv), {"n", "value", "stderr", "method", "d", "L", "alpha", "law_id", "seed"});
      for (const auto& e : series.entries) {
        if (e.n % 2 == 0) {
          w << e.n << e.value << e.stderr_ << series.method << c.dim << c.radius << series.alpha << series.law_id
            << std::to_string(seeds[i]);
          w.end_row();
        }
      }
    }
    run.record(csv);
    std::vector<double> x, y;
    for (const auto& e : series.entries) {
      if (e.n % 2 == 0 && e.value > 0) {
        x.push_back(std::log(e.n));
        y.push_back(std::log(e.value));
      }
    }
    run.plot("decay_" + tag(i) + ".dat", x, y);
    run.check("even-step monotonicity " + tag(i), series.even_monotone(1e-12),
              "max increase " + fmt(series.max_even_increase));
    run.check("mass conservation " + tag(i), series.max_mass_deviation <= 1e-12,
              "max deviation " + fmt(series.max_mass_deviation));
    const auto fit = kernel::fit_decay(series, lo, hi, c.fit_log);
    rec["exponent"] = fit.exponent;
    rec["exponent_stderr"] = fit.exponent_stderr;
    rec["log_coefficient"] = fit.log_coefficient;
    rec["prefactor"] = fit.prefactor;
    rec["n_lo"] = fit.n_lo;
    rec["n_hi"] = fit.n_hi;
    rec["points"] = fit.points;
    rec["route"] = series.route;
    fits.push_back(rec);
  }
  run.m_.summary["fits"] = fits;
  run.m_.summary["n_max"] = n_max;
}

void run_coarse_check(Run& run, const std::vector<std::uint64_t>& seeds, int threads) {
  const auto& c = run.cfg_;
  const double alpha = resolve_alpha(c);
  json rows = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto field = env::sample_field(c.dim, c.radius, c.law, seeds[i], threads);
    const auto strong = cluster::components(field, cluster::Threshold::at_least(alpha));
    const auto hat = coarse::hat_matrix(field, strong, {}, threads);
    const double sym = hat.max_symmetry_residual();
    const double rows_err = hat.max_row_sum_error();
    run.check("coarse symmetry " + tag(i), sym < 1e-10, "residual " + fmt(sym));
    run.check("coarse row sums " + tag(i), rows_err < 1e-10, "max error " + fmt(rows_err));
    const auto census = coarse::hiding_time_census(field, strong, hat.states, {}, threads);
    run.check("hiding-time bound " + tag(i), census.bound_holds, "max ratio " + fmt(census.max_ratio));
    const std::string csv = "census_" + tag(i) + ".csv";
    {
      CsvWriter w(run.path(csv), {"site", "g_size", "expected_hiding_time", "bound", "row_entropy"});
      for (const auto& r : census.rows) {
        w << to_string(field.lattice().point(r.site), c.dim) << static_cast<std::int64_t>(r.g_size)
          << r.expected_hiding_time << r.bound << r.row_entropy;
        w.end_row();
      }
    }
    run.record(csv);
    json rec{{"member", i},          {"seed", seeds[i]},          {"alpha", alpha},
             {"states", hat.states.size()}, {"symmetry_residual", sym}, {"row_sum_error", rows_err},
             {"mean_g_size", census.mean_g_size}, {"max_hiding_ratio", census.max_ratio}};
    if (c.walkers > 0) {
      auto x = field.lattice().origin();
      if (!strong.in_largest(x)) x = hat.states.front();
      const auto grid = coarse::mc_coarse_returns(field, strong, x, c.ells, c.ns, c.walkers,
                                                  rng::derive(seeds[i], 0, rng::kWalker), threads);
      const std::string gcsv = "coarse_grid_" + tag(i) + ".csv";
      {
        CsvWriter w(run.path(gcsv), {"ell", "n", "estimate", "stderr"});
        for (std::size_t a = 0; a < grid.ells.size(); ++a) {
          for (std::size_t b = 0; b < grid.ns.size(); ++b) {
            w << grid.ells[a] << grid.ns[b] << grid.estimate[a][b] << grid.stderr_[a][b];
            w.end_row();
          }
        }
      }
      run.record(gcsv);
    }
    rows.push_back(rec);
  }
  run.m_.summary["members"] = rows;
}

void run_iso_profile(Run& run, const std::vector<std::uint64_t>& seeds, int threads) {
  const auto& c = run.cfg_;
  json rows = json::array();
  const int samples = c.walkers > 0 ? static_cast<int>(c.walkers) : 1000;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto field = env::sample_field(c.dim, c.radius, c.law, seeds[i], threads);
    const auto lab = cluster::components(field, cluster::Threshold::positive());
    const std::string csv = "iso_" + tag(i) + ".csv";
    std::vector<double> x, y;
    {
      CsvWriter w(run.path(csv), {"R", "min_ratio", "witness_size", "size_floor", "size_cap"});
      for (int R : c.ns) {
        const auto res = iso::check_isoperimetry(field, lab, R, c.c1, samples, rng::derive(seeds[i], R), threads);
        w << R << res.min_ratio << static_cast<std::int64_t>(res.witness.size())
          << static_cast<std::int64_t>(res.size_floor) << static_cast<std::int64_t>(res.size_cap);
        w.end_row();
        run.check("isoperimetric ratio positive " + tag(i) + " R=" + std::to_string(R), res.min_ratio > 0,
                  "min ratio " + fmt(res.min_ratio));
        x.push_back(std::log(R));
        y.push_back(res.min_ratio);
        rows.push_back({{"member", i}, {"R", R}, {"min_ratio", res.min_ratio}});
      }
    }
    run.record(csv);
    run.plot("iso_" + tag(i) + ".dat", x, y);
  }
  run.m_.summary["ratios"] = rows;
}

void run_gn_scan(Run& run, int threads) {
  const auto& c = run.cfg_;
  const auto* perc = std::get_if<env::BernoulliPerc>(&c.law);
  const std::string csv = "gn.csv";
  std::vector<double> x, y;
  json rows = json::array();
  {
    CsvWriter w(run.path(csv), {"N", "p", "estimate", "stderr", "part1_failures", "part2_failures"});
    for (int N : c.ns) {
      const auto est = iso::gn_probability(perc->p, N, c.dim, c.ensemble, rng::derive(c.master_seed, N), threads);
      w << N << perc->p << est.value << est.stderr_ << est.part1_failures << est.part2_failures;
      w.end_row();
      x.push_back(std::log(N));
      y.push_back(est.value);
      rows.push_back({{"N", N}, {"probability", est.value}, {"stderr", est.stderr_}});
      run.check("probability range N=" + std::to_string(N), est.value >= 0 && est.value <= 1, fmt(est.value));
    }
  }
  run.record(csv);
  run.plot("gn.dat", x, y);
  run.m_.summary["gn"] = rows;
}

void run_trap_census(Run& run, const std::vector<std::uint64_t>& seeds, int threads) {
  const auto& c = run.cfg_;
  const double alpha = resolve_alpha(c);
  json rows = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto field = env::sample_field(c.dim, c.radius, c.law, seeds[i], threads);
    const auto strong = cluster::components(field, cluster::Threshold::at_least(alpha));
    traps::DetectOptions opt;
    opt.distances = c.distances;
    opt.threads = threads;
    const auto found = traps::detect_traps(field, strong, c.weak_max, opt);
    const std::string csv = "traps_" + tag(i) + ".csv";
    {
      CsvWriter w(run.path(csv), {"x", "y", "z", "weak_scale", "dist_chem"});
      for (const auto& t : found) {
        w << to_string(t.x, c.dim) << to_string(t.y, c.dim) << to_string(t.z, c.dim) << t.weak_scale << t.chem_dist;
        w.end_row();
      }
    }
    run.record(csv);
    std::vector<double> x, y;
    const std::string scsv = "trap_sum_" + tag(i) + ".csv";
    {
      CsvWriter w(run.path(scsv), {"n", "trap_sum"});
      for (int n : c.ns) {
        const double s = traps::trap_sum(found, n, c.dim);
        w << n << s;
        w.end_row();
        x.push_back(std::log(n));
        y.push_back(s);
      }
    }
    run.record(scsv);
    run.plot("trap_sum_" + tag(i) + ".dat", x, y);
    const auto fit = linear_fit(x, y);
    rows.push_back({{"member", i}, {"seed", seeds[i]}, {"traps", found.size()}, {"slope", fit.slope},
                    {"r2", fit.r2}, {"density", static_cast<double>(found.size()) /
                                                    static_cast<double>(field.lattice().num_sites())}});
  }
  run.m_.summary["census"] = rows;
}

void run_trap_bound(Run& run, const std::vector<std::uint64_t>& seeds, int threads) {
  const auto& c = run.cfg_;
  json rows = json::array();
  const int n_max = *std::max_element(c.ns.begin(), c.ns.end());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto base = env::sample_field(c.dim, c.radius, c.law, seeds[i], threads);
    const auto field = env::plant_trap(base, c.trap_anchor, c.weak, c.trap_axis);
    const auto& lat = field.lattice();
    traps::TrapRecord t;
    t.x = c.trap_anchor;
    t.y = add(t.x, unit(c.trap_axis));
    t.z = add(t.y, unit(c.trap_axis));
    t.anchor = lat.index(t.x);
    t.y_site = lat.index(t.y);
    t.z_site = lat.index(t.z);
    t.axis = c.trap_axis;
    t.weak_scale = c.weak;
    kernel::Options opt;
    opt.threads = threads;
    const auto series = kernel::return_series(field, lat.origin(), 2 * n_max, 2, opt);
    run.check("even-step monotonicity " + tag(i), series.even_monotone(1e-12),
              "max increase " + fmt(series.max_even_increase));
    const std::string csv = "bounds_" + tag(i) + ".csv";
    int violations = 0;
    {
      CsvWriter w(run.path(csv), {"n", "exact", "lower_bound", "ratio"});
      for (int n : c.ns) {
        const double exact = series.value_at(2 * n);
        const double bound = traps::trap_lower_bound(field, t, lat.origin(), n).value;
        if (bound > exact) ++violations;
        w << n << exact << bound << (bound > 0 ? exact / bound : std::numeric_limits<double>::infinity());
        w.end_row();
      }
    }
    run.record(csv);
    run.check("trap bound dominance " + tag(i), violations == 0, std::to_string(violations) + " violations");
    rows.push_back({{"member", i}, {"seed", seeds[i]}, {"violations", violations}});
  }
  run.m_.summary["bounds"] = rows;
}

void run_annealed(Run& run, int threads) {
  const auto& c = run.cfg_;
  const std::string csv = "annealed.csv";
  std::vector<double> x, y;
  json rows = json::array();
  double prev_even = std::numeric_limits<double>::infinity();
  bool monotone = true;
  auto ns = c.ns;
  std::sort(ns.begin(), ns.end());
  {
    CsvWriter w(run.path(csv), {"n", "mean", "stderr", "accepted", "rejected"});
    for (int n : ns) {
      const auto r = kernel::annealed_return(c.law, c.dim, c.radius, n, c.ensemble, c.master_seed, threads);
      w << n << r.mean << r.stderr_ << r.accepted << r.rejected;
      w.end_row();
      if (n % 2 == 0) {
        monotone = monotone && r.mean <= prev_even + 1e-12;
        prev_even = r.mean;
      }
      if (r.mean > 0) {
        x.push_back(std::log(n));
        y.push_back(std::log(r.mean));
      }
      rows.push_back({{"n", n}, {"mean", r.mean}, {"stderr", r.stderr_}, {"rejected", r.rejected}});
    }
  }
  run.record(csv);
  run.plot("annealed.dat", x, y);
  run.check("annealed even-step monotonicity", monotone, "");
  run.m_.summary["annealed"] = rows;
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::member_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (int i = 0; i < ensemble; ++i) out.push_back(rng::derive(master_seed, static_cast<std::uint64_t>(i), rng::kConfig));
  return out;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = c.kind;
  j["law"] = env::law_to_json(c.law);
  j["dim"] = c.dim;
  j["radius"] = c.radius;
  j["alpha"] = std::isnan(c.alpha) ? json(nullptr) : json(c.alpha);
  j["ns"] = c.ns;
  j["ensemble"] = c.ensemble;
  j["seeds"] = c.seeds;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["fit_lo"] = c.fit_lo;
  j["fit_hi"] = c.fit_hi;
  j["fit_log"] = c.fit_log;
  j["walkers"] = c.walkers;
  j["ells"] = c.ells;
  j["c1"] = c.c1;
  j["weak"] = c.weak;
  j["weak_max"] = c.weak_max;
  j["trap_anchor"] = point_json(c.trap_anchor, c.dim);
  j["trap_axis"] = c.trap_axis;
  j["distances"] = c.distances;
  j["memory_cap_mb"] = c.memory_cap_mb;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const json::exception& e) {
      throw ConfigError(key, e.what());
    }
  };
  get("kind", c.kind);
  if (j.contains("law")) {
    try {
      c.law = env::law_from_json(j.at("law"));
    } catch (const std::exception& e) {
      throw ConfigError("law", e.what());
    }
  }
  get("dim", c.dim);
  get("radius", c.radius);
  if (j.contains("alpha") && !j.at("alpha").is_null()) get("alpha", c.alpha);
  get("ns", c.ns);
  get("ensemble", c.ensemble);
  get("seeds", c.seeds);
  get("master_seed", c.master_seed);
  get("output_dir", c.output_dir);
  get("fit_lo", c.fit_lo);
  get("fit_hi", c.fit_hi);
  get("fit_log", c.fit_log);
  get("walkers", c.walkers);
  get("ells", c.ells);
  get("c1", c.c1);
  get("weak", c.weak);
  get("weak_max", c.weak_max);
  if (j.contains("trap_anchor")) {
    std::vector<int> a;
    get("trap_anchor", a);
    if (a.size() > static_cast<std::size_t>(kMaxDim)) throw ConfigError("trap_anchor", "too many coordinates");
    c.trap_anchor = Point{};
    for (std::size_t i = 0; i < a.size(); ++i) c.trap_anchor[i] = a[i];
  }
  get("trap_axis", c.trap_axis);
  get("distances", c.distances);
  get("memory_cap_mb", c.memory_cap_mb);
  return c;
}

void validate(const ExperimentConfig& c) {
  if (!kKinds.count(c.kind)) throw ConfigError("kind", "unknown experiment kind '" + c.kind + "'");
  if (c.dim < 2 || c.dim > kMaxDim) throw ConfigError("dim", "must be in [2, " + std::to_string(kMaxDim) + "]");
  if (c.kind != "gn-scan" && c.radius < 1) throw ConfigError("radius", "must be >= 1");
  try {
    env::validate(c.law, c.dim);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("law", e.what());
  }
  if (c.ns.empty()) throw ConfigError("ns", "grid is empty");
  for (int n : c.ns) {
    if (n < 1) throw ConfigError("ns", "entries must be >= 1");
  }
  if (c.seeds.empty() && c.ensemble < 1) throw ConfigError("ensemble", "must be >= 1");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (!std::isnan(c.alpha) && !(c.alpha > 0 && c.alpha <= 1)) throw ConfigError("alpha", "must be in (0, 1]");
  if (c.walkers < 0) throw ConfigError("walkers", "must be >= 0");
  if (c.memory_cap_mb < 1) throw ConfigError("memory_cap_mb", "must be >= 1");
  const int n_max = *std::max_element(c.ns.begin(), c.ns.end());
  if (exact_kind(c.kind) && c.radius < n_max) {
    throw ConfigError("radius", "L=" + std::to_string(c.radius) + " is smaller than max n=" + std::to_string(n_max));
  }
  if (c.kind == "decay-fit") {
    if (c.fit_lo < 0 || c.fit_hi < 0 || (c.fit_hi > 0 && c.fit_lo > c.fit_hi)) {
      throw ConfigError("fit_lo", "fit window is empty");
    }
  }
  if (c.kind == "iso-profile") {
    for (int R : c.ns) {
      if (R < 2 || R >= c.radius) throw ConfigError("ns", "box radii must satisfy 2 <= R < L");
    }
    if (c.c1 <= 0) throw ConfigError("c1", "must be positive");
  }
  if (c.kind == "gn-scan" && !std::holds_alternative<env::BernoulliPerc>(c.law)) {
    throw ConfigError("law", "gn-scan needs a bernoulli law");
  }
  if (c.kind == "trap-bound") {
    if (!(c.weak > 0 && c.weak < 1)) throw ConfigError("weak", "must be in (0, 1)");
    if (c.trap_axis < 0 || c.trap_axis >= c.dim) throw ConfigError("trap_axis", "out of range");
    Lattice lat(c.dim, c.radius);
    const Point z = add(c.trap_anchor, scale(unit(c.trap_axis), 2));
    if (lat.depth(c.trap_anchor) < 1 || lat.depth(z) < 1) throw ConfigError("trap_anchor", "trap does not fit in the box");
  }
  if (c.kind == "trap-census" && !(c.weak_max > 0 && c.weak_max < 1)) throw ConfigError("weak_max", "must be in (0, 1)");
  if (c.kind == "coarse-check") {
    for (int l : c.ells) {
      if (l < 1) throw ConfigError("ells", "entries must be >= 1");
    }
  }
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");  // where results go does not change them
  const std::string s = j.dump();
  return fnv1a(s.data(), s.size());
}

bool RunManifest::passed() const {
  return std::all_of(invariants.begin(), invariants.end(), [](const auto& r) { return r.passed; });
}

json to_json(const RunManifest& m) {
  json j;
  j["config_hash"] = m.config_hash;
  j["version"] = m.version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["output_dir"] = m.output_dir;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["outputs"] = json::array();
  for (const auto& o : m.outputs) j["outputs"].push_back({{"path", o.path}, {"checksum", o.checksum}, {"bytes", o.bytes}});
  j["invariants"] = json::array();
  for (const auto& r : m.invariants) {
    j["invariants"].push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  j["summary"] = m.summary;
  j["truncated"] = m.truncated;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  m.version = j.value("version", "");
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.output_dir = j.value("output_dir", "");
  m.config = j.value("config", json::object());
  m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  for (const auto& o : j.value("outputs", json::array())) {
    m.outputs.push_back({o.at("path"), o.at("checksum"), o.at("bytes")});
  }
  for (const auto& r : j.value("invariants", json::array())) {
    m.invariants.push_back({r.at("name"), r.at("passed"), r.value("detail", "")});
  }
  m.summary = j.value("summary", json::object());
  m.truncated = j.value("truncated", false);
  return m;
}

void save_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(m).dump(2) << '\n';
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return manifest_from_json(json::parse(in));
}

RunManifest run_experiment(const ExperimentConfig& config, int threads) {
  validate(config);
  fs::create_directories(config.output_dir);
  RunManifest m;
  m.config_hash = hex(config_hash(config));
  m.version = kVersion;
  m.started = now_utc();
  m.output_dir = config.output_dir;
  m.config = to_json(config);
  const auto seeds = config.member_seeds();
  m.seeds = seeds;
  m.summary = json::object();
  for (const auto& w : env::validate(config.law, config.dim)) m.summary["warnings"].push_back(w);

  Run run(config, m);
  if (config.kind == "decay-fit") {
    run_decay_fit(run, seeds, threads);
  } else if (config.kind == "coarse-check") {
    run_coarse_check(run, seeds, threads);
  } else if (config.kind == "iso-profile") {
    run_iso_profile(run, seeds, threads);
  } else if (config.kind == "gn-scan") {
    run_gn_scan(run, threads);
  } else if (config.kind == "trap-census") {
    run_trap_census(run, seeds, threads);
  } else if (config.kind == "trap-bound") {
    run_trap_bound(run, seeds, threads);
  } else {
    run_annealed(run, threads);
  }
  m.finished = now_utc();
  save_manifest((fs::path(config.output_dir) / "manifest.json").string(), m);
  return m;
}

namespace {

// Reference decay exponents of the quenched return probability.
std::string reference_decay(int d) {
  if (d <= 3) return "n^-" + fmt(d / 2.0);
  if (d == 4) return "n^-2 log n";
  return "n^-2";
}

}  // namespace

std::string emit_report(const RunManifest& m) {
  if (m.outputs.empty() && m.invariants.empty()) throw std::invalid_argument("emit_report: manifest is empty");
  for (const auto& o : m.outputs) {
    const auto p = fs::path(m.output_dir) / o.path;
    if (!fs::exists(p)) throw std::runtime_error("emit_report: missing output " + p.string());
  }
  std::ostringstream s;
  const std::string kind = m.config.value("kind", "?");
  s << "# Run report: " << kind << "\n\n";
  s << "- config hash: " << m.config_hash << "\n- version: " << m.version << "\n- started: " << m.started
    << "\n- finished: " << m.finished << "\n- members: " << m.seeds.size() << "\n";
  if (m.truncated) s << "- TRUNCATED: kernel horizon reduced by the memory cap\n";
  if (m.config.contains("law")) s << "- law: " << m.config["law"].dump() << "\n";
  s << "\n";
  if (m.summary.contains("fits")) {
    const int d = m.config.value("dim", 0);
    s << "## Decay fits (reference " << reference_decay(d) << ")\n\n| member | exponent | 95% CI | points |\n|---|---|---|---|\n";
    for (const auto& f : m.summary["fits"]) {
      if (!f.contains("exponent")) {
        s << "| " << f["member"].get<int>() << " | skipped | | |\n";
        continue;
      }
      const double e = f["exponent"], se = f["exponent_stderr"];
      s << "| " << f["member"].get<int>() << " | " << fmt(e) << " | [" << fmt(e - 1.96 * se) << ", "
        << fmt(e + 1.96 * se) << "] | " << f["points"].get<int>() << " |\n";
    }
    s << "\n";
  }
  for (const char* key : {"members", "ratios", "gn", "census", "bounds", "annealed"}) {
    if (m.summary.contains(key)) s << "## " << key << "\n\n```\n" << m.summary[key].dump(1) << "\n```\n\n";
  }
  s << "## Invariants\n\n";
  for (const auto& r : m.invariants) {
    s << "- " << (r.passed ? "PASS" : "FAIL") << " " << r.name;
    if (!r.detail.empty()) s << " (" << r.detail << ")";
    s << "\n";
  }
  s << "\nOverall: " << (m.passed() ? "PASS" : "FAIL") << "\n\n## Plot data\n\n";
  for (const auto& o : m.outputs) {
    if (fs::path(o.path).extension() == ".dat") s << "- " << (fs::path(m.output_dir) / o.path).string() << "\n";
  }
  return s.str();
}

env::ConductanceLaw parse_law(const std::string& text) {
  const auto first = text.find_first_not_of(" \t");
  if (first != std::string::npos && text[first] == '{') return env::law_from_json(json::parse(text));
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("empty law");
  auto num = [&](std::size_t i) {
    if (i >= parts.size()) throw std::invalid_argument("law '" + text + "' is missing an argument");
    std::size_t used = 0;
    const double v = std::stod(parts[i], &used);
    if (used != parts[i].size()) throw std::invalid_argument("bad number '" + parts[i] + "'");
    return v;
  };
  const auto& k = parts[0];
  if (k == "homogeneous") return env::Homogeneous{parts.size() > 1 ? num(1) : 1.0};
  if (k == "bernoulli") return env::BernoulliPerc{num(1)};
  if (k == "two_value") return env::TwoValue{num(1), num(2)};
  if (k == "dyadic") return env::DyadicPolyLog{num(1), num(2)};
  throw std::invalid_argument("unknown law shorthand '" + k + "'");
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex(h);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  for (const auto& h : header) *this << h;
  end_row();
}

void CsvWriter::sep() {
  if (!fresh_) out_ << ',';
  fresh_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  out_ << fmt(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::int64_t v) {
  sep();
  out_ << v;
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  sep();
  if (v.find_first_of(",\"\n") == std::string::npos) {
    out_ << v;
    return *this;
  }
  out_ << '"';
  for (char ch : v) {
    if (ch == '"') out_ << '"';
    out_ << ch;
  }
  out_ << '"';
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  fresh_ = true;
}

void write_plot_data(const std::string& path, const std::vector<double>& x, const std::vector<double>& y) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) out << fmt(x[i]) << ' ' << fmt(y[i]) << '\n';
}

}  // namespace rcm::experiment
