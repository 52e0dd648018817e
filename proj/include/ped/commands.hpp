#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "ped/coeff_family.hpp"
#include "ped/config.hpp"
#include "ped/repp.hpp"

namespace ped {

struct CommandOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  // analyze only
  std::optional<std::filesystem::path> data_path;
  std::optional<double> w;
  std::optional<double> epsilon_bayes;
};

// Loads the config and applies --out, --seed and --threads overrides.
RunConfig resolve_config(const CommandOptions& opts);

std::string prior_cache_name(double w);

// Fits the informative mixture once and writes one prior file per grid w.
void cmd_elicit(const RunConfig& config, std::ostream& log);
void cmd_family(const RunConfig& config, std::ostream& log);
void cmd_search(const RunConfig& config, std::ostream& log);
void cmd_analyze(const RunConfig& config, const std::filesystem::path& data_path, double w,
                 double epsilon_bayes, std::ostream& log);

// Cache-aware loaders: reuse files in the output directory when their
// fingerprint matches the config, otherwise rebuild and rewrite them.
ReppPrior ensure_prior(const RunConfig& config, double w, std::ostream& log);
CoeffTables ensure_tables(const RunConfig& config, std::ostream& log);

}  // namespace ped
