#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ped/coeff_family.hpp"
#include "ped/repp.hpp"
#include "ped/simengine.hpp"

namespace ped {

enum class DesignStatus { Qualified, Admissible, Rejected };
enum class Violation { None, Type1, Power, Both };

const char* to_string(DesignStatus s);
const char* to_string(Violation v);

inline constexpr double kAdmissibleMargin = 0.05;

struct Classification {
  DesignStatus status = DesignStatus::Rejected;
  Violation violated = Violation::None;
  double margin = 0.0;  // largest constraint excess, 0 when qualified
};

// Qualified iff type1 <= alpha and power >= 1 - beta. Admissible iff exactly
// one budget is missed by at most 0.05 (inclusive).
Classification classify(double type1, double power, double alpha, double beta_target);
Classification classify(const OCEstimate& oc, double alpha, double beta_target);

struct StabilityOptions {
  double threshold = 0.8;
  double delta_fraction = 0.3;  // H1 scenarios fixed at delta = fraction * eps_H
};

struct StabilityScore {
  double prop_type1_ok = 0.0;
  double prop_power_ok = 0.0;
  bool stable = false;
  std::vector<double> h0_rates;  // one per H0 eta slot
  std::vector<double> h1_rates;  // one per H1 eta slot
};

// H1 table used for stability: reuses the matching delta table when present,
// otherwise builds one.
CoeffTable stability_h1_table(const SimConfig& config, const CoeffTables& tables,
                              const StabilityOptions& options,
                              std::span<const double> slope_grid);

// Per-slot rejection probabilities at one (n, w); every threshold is then a
// cheap re-aggregation.
struct FixedScenarioProbs {
  std::vector<std::vector<double>> h0;
  std::vector<std::vector<double>> h1;
  int retries = 0;
};

FixedScenarioProbs fixed_scenario_probs(int n, const ReppPrior& prior, const SimConfig& config,
                                        const CoeffTable& h0_table, const CoeffTable& h1_table);

StabilityScore score_stability(const FixedScenarioProbs& probs, double epsilon_bayes,
                               const SimConfig& config, const StabilityOptions& options);

StabilityScore stability(const DesignTuple& tuple, const SimConfig& config,
                         const ReppPrior& prior, const CoeffTables& tables,
                         const CoeffTable& h1_stability_table,
                         const StabilityOptions& options = {});

struct SearchGrid {
  std::vector<int> n;
  std::vector<double> w;
  std::vector<double> epsilon_bayes;

  void validate() const;
};

struct TupleResult {
  OCEstimate oc;
  Classification classification;
  std::optional<StabilityScore> stability;
};

struct RankedEntry {
  std::size_t index = 0;  // into SearchReport::results
  std::string reason;
};

struct SearchReport {
  std::vector<TupleResult> results;  // n-major, then w, then epsilon_bayes
  std::vector<RankedEntry> ranking;
  std::vector<std::string> findings;
};

using PriorForWeight = std::function<ReppPrior(double w)>;
// Receives the raw replicate records of every (n, w) cell.
using ReplicateSink = std::function<void(int n, double w, std::span<const ReplicateRecord> h0,
                                         std::span<const ReplicateRecord> h1)>;

// Stable-qualified first (ascending n), then stable-admissible, then unstable
// qualified and admissible tuples; ties go to smaller w, then larger power.
std::vector<RankedEntry> rank_results(std::span<const TupleResult> results);

SearchReport search(const SearchGrid& grid, const SimConfig& config,
                    const PriorForWeight& prior_for_w, const CoeffTables& tables,
                    const CoeffTable& h1_stability_table, const StabilityOptions& options = {},
                    const ReplicateSink& sink = {});

}  // namespace ped
