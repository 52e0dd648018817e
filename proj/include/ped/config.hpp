#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ped/design_search.hpp"
#include "ped/repp.hpp"
#include "ped/simengine.hpp"

namespace ped {

inline constexpr int kConfigSchemaVersion = 1;

// One elicitation point, given either directly as mean/sd of the log-odds
// deviation, as a fraction of the adult log-odds magnitude, or as quartiles.
struct ElicitationEntry {
  double x = 0.0;
  std::optional<double> mean;
  std::optional<double> relative_mean;
  std::optional<double> sd;
  std::optional<QuantileElicitation> quantiles;

  ElicitedPoint resolve(const LogisticCoefficients& adult) const;
};

struct SlopeGridSettings {
  int count = 400;
  double lo_factor = 0.2;
  double hi_factor = 5.0;
};

struct EtaTrendSettings {
  std::vector<int> n;
  std::vector<double> w;
  std::vector<double> eta;
  double delta = 0.0;  // 0 means eps_H
  int replicates = 0;  // 0 means T
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::string exposure_units = "log10 exposure";
  SimConfig sim;
  std::vector<ElicitationEntry> elicitation;
  int synthetic_per_point = 1000;
  InformativeFitOptions informative;
  SlopeGridSettings slope_grid;
  SearchGrid grid;
  StabilityOptions stability;
  std::optional<EtaTrendSettings> eta_trend;
  std::string output_dir = "ped_out";
  bool reuse_caches = true;
  bool replicate_logs = false;

  std::vector<ElicitedPoint> elicited_points() const;
  std::vector<double> slopes() const;
  void validate() const;
};

// Parses and validates. Syntax errors carry line and column; semantic errors
// carry the JSON path of the offending field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Darunavir case with the full design grid.
RunConfig darunavir_config();

std::string config_to_json(const RunConfig& config);

}  // namespace ped
