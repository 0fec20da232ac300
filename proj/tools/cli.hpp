// Command-line front end: strict JSON run configuration, orchestration of
// the engines and CSV emission.  Exit codes: 0 success, 2 configuration
// error, 3 numeric tolerance failure (partial CSV with a status column).
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chiralcasimir/forcengine.hpp"

namespace chiralcasimir::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTolerance = 3;
inline constexpr int kSchemaVersion = 1;

const char* library_version();

struct RunOptions {
  std::string command;  // force | sweep | retrieve | integrand | pairwise
  std::filesystem::path config;
  std::filesystem::path out = ".";
  int workers = 0;  // 0: OpenMP default
  std::optional<double> tolerance;
  bool si = false;
};

/// Validated configuration with every default filled in.
struct RunConfig {
  forcengine::LatticePairConfig pair;
  std::vector<double> z;
  std::vector<double> x;
  std::vector<forcengine::Chirality> pairings;
  forcengine::SweepConfig sweep;
  std::vector<double> retrieve_xi;
  ema::RetrievalOptions retrieval;
  double integrand_z = 3.6;
  std::vector<double> integrand_xi;
  forcengine::PairwiseOptions pairwise;
  double a_si = 1e-6;               // m
  double plasma_frequency = 1.37e16;  // rad/s, recorded only
  bool si = false;

  nlohmann::json resolved;  // canonical form, hashed into every CSV header
};

/// Throws ConfigError on any schema or domain violation.  Relative file
/// paths resolve against base_dir.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                       const RunOptions& opts);
RunConfig load_config(const RunOptions& opts);

/// SHA-256 of the canonical resolved configuration, hex encoded.
std::string config_hash(const RunConfig& c);

/// Runs one command and writes its CSV files into opts.out.
int run(const RunOptions& opts);

/// argv front end (CLI11).
int main_entry(int argc, char** argv);

}  // namespace chiralcasimir::cli
