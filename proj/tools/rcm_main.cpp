#include "rcm/cluster.hpp"
#include "rcm/coarse.hpp"
#include "rcm/experiment.hpp"
#include "rcm/iso.hpp"
#include "rcm/kernel.hpp"
#include "rcm/parallel.hpp"
#include "rcm/traps.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace rcm;
using nlohmann::json;

namespace {

constexpr int kPass = 0;
constexpr int kInvariantFail = 1;
constexpr int kUsage = 2;

struct FieldArgs {
  std::string load;
  int dim = 2;
  int radius = 16;
  std::string law = "homogeneous:1";
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--field", load, "Read a stored field instead of sampling");
    app->add_option("--dim,-d", dim, "Dimension");
    app->add_option("--radius,-L", radius, "Box radius L of [-L, L]^d");
    app->add_option("--law", law, "Law: JSON object or kind:args shorthand");
    app->add_option("--seed", seed, "Field seed");
  }
  env::ConductanceField make() const {
    if (!load.empty()) return env::load_field(load);
    return env::sample_field(dim, radius, experiment::parse_law(law), seed);
  }
};

Point parse_point(const std::vector<int>& v, int dim) {
  if (!v.empty() && static_cast<int>(v.size()) != dim) throw CLI::ValidationError("--site", "needs d coordinates");
  Point p{};
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i];
  return p;
}

std::string default_output(const std::string& kind) {
  const char* root = std::getenv("RCM_OUTPUT_ROOT");
  return (std::filesystem::path(root && *root ? root : "rcm_out") / kind).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random conductance model toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: RCM_THREADS or hardware)");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample a conductance field and summarize it");
  FieldArgs sample_args;
  sample_args.add(sample);
  std::string sample_out;
  sample->add_option("--out,-o", sample_out, "Write the field to this file");

  // kernel
  auto* kern = app.add_subcommand("kernel", "Exact return probabilities and decay fit");
  FieldArgs kern_args;
  kern_args.add(kern);
  int kern_n = 64, fit_lo = 0, fit_hi = 0;
  std::int64_t mc_walkers = 0;
  std::vector<int> kern_site;
  kern->add_option("--n", kern_n, "Largest time");
  kern->add_option("--fit-lo", fit_lo, "Fit window start");
  kern->add_option("--fit-hi", fit_hi, "Fit window end");
  kern->add_option("--mc", mc_walkers, "Also estimate P^n by this many walkers");
  kern->add_option("--site", kern_site, "Source site (default origin)");

  // coarse
  auto* crs = app.add_subcommand("coarse", "Coarse-grained chain rows and hiding-time census");
  FieldArgs crs_args;
  crs_args.add(crs);
  double crs_alpha = NAN;
  std::vector<int> crs_site;
  crs->add_option("--alpha", crs_alpha, "Strong threshold (default from the law)");
  crs->add_option("--site", crs_site, "Anchor (default: census over the strong component)");

  // iso
  auto* isoc = app.add_subcommand("iso", "Isoperimetric ratio of grown cluster subsets");
  FieldArgs iso_args;
  iso_args.add(isoc);
  int iso_R = 8, iso_samples = 1000;
  double iso_c1 = 1.0;
  isoc->add_option("--R", iso_R, "Box radius of the candidate sets");
  isoc->add_option("--c1", iso_c1, "Size floor constant");
  isoc->add_option("--samples", iso_samples, "Candidate sets");

  // gn
  auto* gn = app.add_subcommand("gn", "Probability of the renormalization block event");
  double gn_p = 0.65;
  int gn_N = 4, gn_d = 2;
  std::int64_t gn_ens = 1000;
  std::uint64_t gn_seed = 1;
  gn->add_option("--p", gn_p, "Bond occupation probability");
  gn->add_option("--N", gn_N, "Block size");
  gn->add_option("--dim,-d", gn_d, "Dimension");
  gn->add_option("--ensemble", gn_ens, "Configurations");
  gn->add_option("--seed", gn_seed, "Master seed");

  // traps
  auto* trp = app.add_subcommand("traps", "Trap census and trap sums");
  FieldArgs trp_args;
  trp_args.add(trp);
  double trp_alpha = NAN, trp_weak = 0.999;
  std::vector<int> trp_ns{64, 256, 1024, 4096};
  bool trp_dist = false;
  trp->add_option("--alpha", trp_alpha, "Strong threshold (default from the law)");
  trp->add_option("--weak-max", trp_weak, "Largest admissible weak scale");
  trp->add_option("--ns", trp_ns, "Times for the trap sum");
  trp->add_flag("--distances", trp_dist, "Chemical distances from the origin");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file and flags");
  std::string config_path;
  experiment::ExperimentConfig cfg;
  std::string run_law;
  std::vector<int> anchor;
  std::vector<std::uint64_t> seeds;
  run->add_option("--config,-c", config_path, "JSON config file");
  run->add_option("--kind", cfg.kind, "decay-fit | coarse-check | iso-profile | gn-scan | trap-census | trap-bound | annealed");
  run->add_option("--law", run_law, "Law: JSON object or kind:args shorthand");
  run->add_option("--dim,-d", cfg.dim, "Dimension");
  run->add_option("--radius,-L", cfg.radius, "Box radius");
  run->add_option("--alpha", cfg.alpha, "Strong threshold");
  run->add_option("--ns", cfg.ns, "Grid (times, radii or block sizes)");
  run->add_option("--ensemble", cfg.ensemble, "Ensemble size");
  run->add_option("--seeds", seeds, "Explicit member seeds");
  run->add_option("--master-seed", cfg.master_seed, "Master seed");
  run->add_option("--output-dir,-o", cfg.output_dir, "Output directory (default $RCM_OUTPUT_ROOT/<kind>)");
  run->add_option("--fit-lo", cfg.fit_lo, "Fit window start");
  run->add_option("--fit-hi", cfg.fit_hi, "Fit window end");
  run->add_flag("--fit-log", cfg.fit_log, "Fit a log correction");
  run->add_option("--walkers", cfg.walkers, "Monte Carlo walkers or candidate sets");
  run->add_option("--ells", cfg.ells, "Coarse steps for the Monte Carlo grid");
  run->add_option("--c1", cfg.c1, "Isoperimetric size floor constant");
  run->add_option("--weak", cfg.weak, "Weak conductance of the planted trap");
  run->add_option("--weak-max", cfg.weak_max, "Largest admissible weak scale in the census");
  run->add_option("--trap-anchor", anchor, "Planted trap anchor");
  run->add_option("--trap-axis", cfg.trap_axis, "Planted trap axis");
  run->add_flag("--distances", cfg.distances, "Chemical distances in the census");
  run->add_option("--memory-cap-mb", cfg.memory_cap_mb, "Kernel memory cap");

  // report
  auto* rep = app.add_subcommand("report", "Summarize a finished run");
  std::string manifest_path;
  rep->add_option("manifest", manifest_path, "manifest.json or its directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*sample) {
      const auto f = sample_args.make();
      const auto lab = cluster::components(f, cluster::Threshold::positive());
      json j{{"dim", f.dim()},
             {"radius", f.radius()},
             {"law", env::law_to_json(f.law())},
             {"seed", f.seed()},
             {"content_hash", f.content_hash()},
             {"largest_component", lab.largest_size()},
             {"origin_in_largest", lab.in_largest(f.lattice().origin())},
             {"warnings", f.warnings()}};
      if (!sample_out.empty()) env::save_field(sample_out, f);
      std::cout << j.dump(2) << '\n';
      return kPass;
    }
    if (*kern) {
      const auto f = kern_args.make();
      const auto src = f.lattice().index(parse_point(kern_site, f.dim()));
      kernel::Options opt;
      opt.threads = threads;
      const auto s = kernel::return_series(f, src, kern_n, 1, opt);
      std::cout << "n,value\n";
      for (const auto& e : s.entries) std::cout << e.n << ',' << e.value << '\n';
      if (fit_hi > fit_lo && fit_lo > 0) {
        const auto fit = kernel::fit_decay(s, fit_lo, fit_hi);
        std::cerr << "exponent " << fit.exponent << " +- " << fit.exponent_stderr << '\n';
      }
      if (mc_walkers > 0) {
        const auto est = kernel::mc_return(f, src, kern_n, mc_walkers, kern_args.seed, threads);
        std::cerr << "mc P^" << kern_n << " = " << est.value << " +- " << est.stderr_ << " (exact "
                  << s.value_at(kern_n) << ")\n";
      }
      std::cerr << "route " << s.route << ", max mass deviation " << s.max_mass_deviation << '\n';
      if (!s.even_monotone(1e-12) || s.max_mass_deviation > 1e-12) {
        std::cerr << "FAIL: invariant violated\n";
        return kInvariantFail;
      }
      return kPass;
    }
    if (*crs) {
      const auto f = crs_args.make();
      const double alpha = std::isnan(crs_alpha) ? cluster::choose_alpha(f.law(), f.dim()) : crs_alpha;
      const auto strong = cluster::components(f, cluster::Threshold::at_least(alpha));
      if (!crs_site.empty()) {
        const auto h = coarse::hat_chain(f, strong, f.lattice().index(parse_point(crs_site, f.dim())));
        std::cout << "site,probability\n";
        for (const auto& [y, p] : h.row) std::cout << to_string(f.lattice().point(y), f.dim()) << ',' << p << '\n';
        std::cerr << "E T_1 = " << h.expected_hiding_time << ", |G_x| = " << h.g_size << ", solver " << h.solver
                  << '\n';
        return kPass;
      }
      const auto hat = coarse::hat_matrix(f, strong, {}, threads);
      const auto census = coarse::hiding_time_census(f, strong, hat.states, {}, threads);
      json j{{"alpha", alpha},
             {"states", hat.states.size()},
             {"symmetry_residual", hat.max_symmetry_residual()},
             {"row_sum_error", hat.max_row_sum_error()},
             {"mean_g_size", census.mean_g_size},
             {"max_hiding_ratio", census.max_ratio}};
      std::cout << j.dump(2) << '\n';
      const bool ok = hat.max_symmetry_residual() < 1e-10 && hat.max_row_sum_error() < 1e-10 && census.bound_holds;
      return ok ? kPass : kInvariantFail;
    }
    if (*isoc) {
      const auto f = iso_args.make();
      const auto lab = cluster::components(f, cluster::Threshold::positive());
      const auto r = iso::check_isoperimetry(f, lab, iso_R, iso_c1, iso_samples, iso_args.seed, threads);
      json j{{"R", iso_R}, {"min_ratio", r.min_ratio}, {"witness_size", r.witness.size()},
             {"size_floor", r.size_floor}, {"size_cap", r.size_cap}};
      std::cout << j.dump(2) << '\n';
      return r.min_ratio > 0 ? kPass : kInvariantFail;
    }
    if (*gn) {
      const auto e = iso::gn_probability(gn_p, gn_N, gn_d, gn_ens, gn_seed, threads);
      json j{{"p", gn_p}, {"N", gn_N}, {"dim", gn_d}, {"probability", e.value}, {"stderr", e.stderr_},
             {"part1_failures", e.part1_failures}, {"part2_failures", e.part2_failures}};
      std::cout << j.dump(2) << '\n';
      return kPass;
    }
    if (*trp) {
      const auto f = trp_args.make();
      const double alpha = std::isnan(trp_alpha) ? cluster::choose_alpha(f.law(), f.dim()) : trp_alpha;
      const auto strong = cluster::components(f, cluster::Threshold::at_least(alpha));
      traps::DetectOptions opt;
      opt.distances = trp_dist;
      opt.threads = threads;
      const auto found = traps::detect_traps(f, strong, trp_weak, opt);
      std::cout << "x,y,z,weak_scale,dist_chem\n";
      for (const auto& t : found) {
        std::cout << '"' << to_string(t.x, f.dim()) << "\",\"" << to_string(t.y, f.dim()) << "\",\""
                  << to_string(t.z, f.dim()) << "\"," << t.weak_scale << ',' << t.chem_dist << '\n';
      }
      for (int n : trp_ns) std::cerr << "trap_sum(n=" << n << ") = " << traps::trap_sum(found, n, f.dim()) << '\n';
      return kPass;
    }
    if (*run) {
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::invalid_argument("cannot read config " + config_path);
        auto base = experiment::config_from_json(json::parse(in));
        // flags given on the command line override the file
        const auto flags = experiment::to_json(cfg);
        auto merged = experiment::to_json(base);
        for (const auto* opt : run->get_options()) {
          if (opt->count() == 0) continue;
          std::string key = opt->get_name();
          while (!key.empty() && key.front() == '-') key.erase(0, 1);
          std::replace(key.begin(), key.end(), '-', '_');
          if (flags.contains(key)) merged[key] = flags[key];
        }
        cfg = experiment::config_from_json(merged);
      }
      if (!run_law.empty()) cfg.law = experiment::parse_law(run_law);
      if (!seeds.empty()) cfg.seeds = seeds;
      if (!anchor.empty()) cfg.trap_anchor = parse_point(anchor, cfg.dim);
      if (run->get_option("--output-dir")->count() == 0 &&
          (config_path.empty() || cfg.output_dir == experiment::ExperimentConfig{}.output_dir)) {
        cfg.output_dir = default_output(cfg.kind);
      }
      const auto m = experiment::run_experiment(cfg, threads);
      std::cout << experiment::emit_report(m);
      return m.passed() ? kPass : kInvariantFail;
    }
    if (*rep) {
      std::filesystem::path p(manifest_path);
      if (std::filesystem::is_directory(p)) p /= "manifest.json";
      const auto m = experiment::load_manifest(p.string());
      std::cout << experiment::emit_report(m);
      return m.passed() ? kPass : kInvariantFail;
    }
  } catch (const experiment::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvariantFail;
  }
  return kUsage;
}
