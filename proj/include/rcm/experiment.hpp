#pragma once

#include "rcm/env.hpp"

#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rcm::experiment {

inline constexpr const char* kVersion = "1.0.0";

// Raised by validation; `field` names the offending config entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Kinds: decay-fit, coarse-check, iso-profile, gn-scan, trap-census,
// trap-bound, annealed. The meaning of `ns` depends on the kind: times for
// decay-fit / trap-census / trap-bound / annealed / coarse-check, box radii R
// for iso-profile, block sizes N for gn-scan.
struct ExperimentConfig {
  std::string kind = "decay-fit";
  env::ConductanceLaw law = env::Homogeneous{};
  int dim = 2;
  int radius = 16;
  double alpha = std::numeric_limits<double>::quiet_NaN();  // NaN: chosen from the law
  std::vector<int> ns{16};
  int ensemble = 1;
  std::vector<std::uint64_t> seeds;  // explicit per-member seeds; derived from master_seed when empty
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";

  int fit_lo = 0;  // 0: smallest n of the grid
  int fit_hi = 0;  // 0: largest n
  bool fit_log = false;
  std::int64_t walkers = 0;  // Monte Carlo walkers / iso candidate sets
  std::vector<int> ells{4, 8, 16};
  double c1 = 1.0;
  double weak = 0.01;       // trap-bound planting
  double weak_max = 0.999;  // trap-census detection
  Point trap_anchor{};      // trap-bound anchor (relative to the origin)
  int trap_axis = 0;
  bool distances = false;
  std::int64_t memory_cap_mb = 2048;

  std::vector<std::uint64_t> member_seeds() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
// Throws ConfigError.
void validate(const ExperimentConfig& c);
// Hash of every field except output_dir.
std::uint64_t config_hash(const ExperimentConfig& c);

struct OutputFile {
  std::string path;  // relative to the output directory
  std::string checksum;
  std::uint64_t bytes = 0;
};

struct InvariantResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::string started;
  std::string finished;
  std::string output_dir;
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  std::vector<OutputFile> outputs;
  std::vector<InvariantResult> invariants;
  nlohmann::json summary;  // fits and per-kind aggregates
  bool truncated = false;

  bool passed() const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const std::string& path, const RunManifest& m);
RunManifest load_manifest(const std::string& path);

// Runs the configured pipeline and writes CSV, plot-data and manifest.json
// into config.output_dir.
RunManifest run_experiment(const ExperimentConfig& config, int threads = 0);

// Law from a JSON object or a shorthand "kind:arg:arg" (homogeneous:v,
// bernoulli:p, two_value:p:n, dyadic:p1:eps).
env::ConductanceLaw parse_law(const std::string& text);

// Markdown summary. Throws on an empty manifest or missing output files.
std::string emit_report(const RunManifest& m);

// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

// Minimal CSV writer: numbers at full precision, strings quoted when needed.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(std::int64_t v);
  CsvWriter& operator<<(int v) { return *this << static_cast<std::int64_t>(v); }
  CsvWriter& operator<<(const std::string& v);
  void end_row();

 private:
  void sep();
  std::ofstream out_;
  bool fresh_ = true;
};

// Two whitespace-separated columns per line.
void write_plot_data(const std::string& path, const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rcm::experiment
